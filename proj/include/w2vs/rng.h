// w2vs/rng.h

// Copyright 2026  The w2vs authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef W2VS_RNG_H_
#define W2VS_RNG_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "w2vs/common.h"

namespace w2vs {

// Philox4x32-10 block function. Counter-based: the output is a keyed
// bijection of (counter, key), so a stream's position is a single integer
// and save/restore is a copy of that integer.
std::array<uint32_t, 4> philox4x32(const std::array<uint32_t, 4>& counter,
                                   const std::array<uint32_t, 2>& key);

// Streaming transcript of raw draws; attach to an RngStream to observe what
// a decision family actually consumed.
struct DrawRecorder {
  uint64_t hash = 0xcbf29ce484222325ULL;
  uint64_t count = 0;

  void absorb(uint64_t v) {
    hash = fnv1a64(&v, sizeof(v), hash);
    count++;
  }
  bool operator==(const DrawRecorder&) const = default;
};

// Saved stream position.
struct RngSnapshot {
  uint64_t seed = 0;
  uint64_t stream_id = 0;
  uint64_t counter = 0;
  bool operator==(const RngSnapshot&) const = default;
};

// A deterministic random stream. (seed, stream_id, counter) fully determines
// every future output; distinct stream_ids give independent sequences.
class RngStream {
 public:
  RngStream() = default;
  RngStream(uint64_t seed, uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id) {}

  uint64_t seed() const { return seed_; }
  uint64_t stream_id() const { return stream_id_; }
  uint64_t counter() const { return counter_; }

  RngSnapshot save() const { return {seed_, stream_id_, counter_}; }
  // Rewinds (or forwards) to a snapshot taken from a stream with the same
  // seed and stream_id; anything else is a usage error.
  void restore(const RngSnapshot& s);

  uint64_t next_u64();
  // Uniform in [0, 1), 53 bits.
  double next_double();
  double uniform(double lo, double hi);
  // Standard Gumbel(0,1) noise: -log(-log(u)).
  double gumbel();
  // Standard normal via Box-Muller; always consumes two raw draws.
  double normal();
  // Unbiased integer in [0, n); n must be > 0. May consume several raw
  // draws (rejection), which replays exactly under save/restore.
  uint64_t next_below(uint64_t n);

  // Fisher-Yates shuffle of [0, n).
  std::vector<int64_t> shuffled_indices(int64_t n);

  void set_recorder(DrawRecorder* rec) { recorder_ = rec; }

 private:
  uint64_t seed_ = 0;
  uint64_t stream_id_ = 0;
  uint64_t counter_ = 0;
  DrawRecorder* recorder_ = nullptr;
};

// The decision families whose randomness must be replicated between the two
// halves of an original/noisy pair.
enum class Family : int {
  kMaskPositions = 0,
  kDropoutMasks = 1,
  kGumbelNoise = 2,
  kDistractors = 3,
};
constexpr int kNumFamilies = 4;

const char* family_name(Family f);
// Parses "mask", "dropout", "gumbel", "distractor"; unknown name is a usage
// error.
Family family_from_name(const std::string& name);

// Which families are replicated between the two halves of a pair. A family
// that is off consumes fresh draws for the noisy half.
struct PairingMode {
  bool mask_positions = true;
  bool dropout_masks = true;
  bool gumbel_noise = true;
  bool distractors = true;

  bool on(Family f) const;
  bool& slot(Family f);
};

// One stream per decision family. Streams are value types; nothing here is
// shared or global.
class StreamSet {
 public:
  StreamSet() = default;
  // Derives the four family streams from a base seed with fixed stream ids.
  explicit StreamSet(uint64_t seed);

  RngStream& stream(Family f);
  const RngStream& stream(Family f) const;

  // Restricts which families a decision function may draw from; drawing from
  // a family outside the set is a usage error surfaced by stream().
  void declare(std::initializer_list<Family> families);
  void declare_all();

  std::array<RngSnapshot, kNumFamilies> save_all() const;
  // Restores only the families switched on in `mode`.
  void restore_paired(const std::array<RngSnapshot, kNumFamilies>& snaps,
                      const PairingMode& mode);

  void set_recorders(std::array<DrawRecorder, kNumFamilies>* recs);

 private:
  std::array<RngStream, kNumFamilies> streams_;
  std::array<bool, kNumFamilies> declared_{true, true, true, true};
};

enum class Half : int { kOriginal = 0, kNoisy = 1 };

// Runs `fn` once per pair half. Before the noisy half, every family switched
// on in `mode` is rewound to its position at entry, so the noisy half
// consumes bit-identical random decisions for those families.
template <typename Fn>
auto paired_forward(StreamSet& streams, const PairingMode& mode, Fn&& fn) {
  auto snaps = streams.save_all();
  auto original = fn(Half::kOriginal, streams);
  streams.restore_paired(snaps, mode);
  auto noisy = fn(Half::kNoisy, streams);
  return std::make_pair(std::move(original), std::move(noisy));
}

// Fixed stream ids for the per-run streams; data-side streams are derived
// per (seed, utterance, epoch) instead and never need persisting.
namespace stream_ids {
constexpr uint64_t kMask = 1;
constexpr uint64_t kDropout = 2;
constexpr uint64_t kGumbel = 3;
constexpr uint64_t kDistractor = 4;
constexpr uint64_t kInit = 5;
}  // namespace stream_ids

// Stream for a named data-side purpose, e.g. ("noise", utt, epoch).
RngStream derived_stream(uint64_t seed, const std::string& purpose, uint64_t a,
                         uint64_t b);

}  // namespace w2vs

#endif  // W2VS_RNG_H_
