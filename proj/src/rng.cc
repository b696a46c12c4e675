// w2vs/rng.cc

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

#include "w2vs/rng.h"

#include <cmath>
#include <stdexcept>

namespace w2vs {

namespace {

constexpr uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void philox_round(std::array<uint32_t, 4>& ctr,
                         const std::array<uint32_t, 2>& key) {
  uint64_t p0 = uint64_t(kPhiloxM0) * ctr[0];
  uint64_t p1 = uint64_t(kPhiloxM1) * ctr[2];
  uint32_t hi0 = uint32_t(p0 >> 32), lo0 = uint32_t(p0);
  uint32_t hi1 = uint32_t(p1 >> 32), lo1 = uint32_t(p1);
  ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

}  // namespace

std::array<uint32_t, 4> philox4x32(const std::array<uint32_t, 4>& counter,
                                   const std::array<uint32_t, 2>& key) {
  std::array<uint32_t, 4> ctr = counter;
  std::array<uint32_t, 2> k = key;
  for (int round = 0; round < 10; round++) {
    if (round > 0) {
      k[0] += kPhiloxW0;
      k[1] += kPhiloxW1;
    }
    philox_round(ctr, k);
  }
  return ctr;
}

void RngStream::restore(const RngSnapshot& s) {
  if (s.seed != seed_ || s.stream_id != stream_id_) {
    throw std::invalid_argument(
        cat("RngStream::restore: snapshot from stream (seed=", s.seed,
            ", id=", s.stream_id, ") applied to stream (seed=", seed_,
            ", id=", stream_id_, ")"));
  }
  counter_ = s.counter;
}

uint64_t RngStream::next_u64() {
  std::array<uint32_t, 4> ctr = {uint32_t(counter_), uint32_t(counter_ >> 32),
                                 uint32_t(stream_id_),
                                 uint32_t(stream_id_ >> 32)};
  std::array<uint32_t, 2> key = {uint32_t(seed_), uint32_t(seed_ >> 32)};
  auto out = philox4x32(ctr, key);
  counter_++;
  uint64_t v = uint64_t(out[0]) | (uint64_t(out[1]) << 32);
  if (recorder_ != nullptr) recorder_->absorb(v);
  return v;
}

double RngStream::next_double() {
  return double(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * next_double();
}

double RngStream::gumbel() {
  double u = next_double();
  if (u < 0x1.0p-53) u = 0x1.0p-53;
  return -std::log(-std::log(u));
}

double RngStream::normal() {
  double u1 = next_double();
  double u2 = next_double();
  if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

uint64_t RngStream::next_below(uint64_t n) {
  if (n == 0) throw std::invalid_argument("RngStream::next_below: n must be > 0");
  // Rejection over the largest multiple of n below 2^64.
  uint64_t limit = UINT64_MAX - (UINT64_MAX % n + 1) % n;
  for (;;) {
    uint64_t v = next_u64();
    if (v <= limit) return v % n;
  }
}

std::vector<int64_t> RngStream::shuffled_indices(int64_t n) {
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; i++) idx[size_t(i)] = i;
  for (int64_t i = n - 1; i > 0; i--) {
    uint64_t j = next_below(uint64_t(i) + 1);
    std::swap(idx[size_t(i)], idx[size_t(j)]);
  }
  return idx;
}

const char* family_name(Family f) {
  switch (f) {
    case Family::kMaskPositions:
      return "mask";
    case Family::kDropoutMasks:
      return "dropout";
    case Family::kGumbelNoise:
      return "gumbel";
    case Family::kDistractors:
      return "distractor";
  }
  return "?";
}

Family family_from_name(const std::string& name) {
  if (name == "mask") return Family::kMaskPositions;
  if (name == "dropout") return Family::kDropoutMasks;
  if (name == "gumbel") return Family::kGumbelNoise;
  if (name == "distractor") return Family::kDistractors;
  throw std::invalid_argument(
      cat("unknown decision family \"", name,
          "\"; expected mask, dropout, gumbel, or distractor"));
}

bool PairingMode::on(Family f) const {
  switch (f) {
    case Family::kMaskPositions:
      return mask_positions;
    case Family::kDropoutMasks:
      return dropout_masks;
    case Family::kGumbelNoise:
      return gumbel_noise;
    case Family::kDistractors:
      return distractors;
  }
  return false;
}

bool& PairingMode::slot(Family f) {
  switch (f) {
    case Family::kMaskPositions:
      return mask_positions;
    case Family::kDropoutMasks:
      return dropout_masks;
    case Family::kGumbelNoise:
      return gumbel_noise;
    case Family::kDistractors:
      return distractors;
  }
  throw std::invalid_argument("PairingMode::slot: bad family");
}

StreamSet::StreamSet(uint64_t seed) {
  streams_[0] = RngStream(seed, stream_ids::kMask);
  streams_[1] = RngStream(seed, stream_ids::kDropout);
  streams_[2] = RngStream(seed, stream_ids::kGumbel);
  streams_[3] = RngStream(seed, stream_ids::kDistractor);
}

RngStream& StreamSet::stream(Family f) {
  int i = int(f);
  if (!declared_[size_t(i)]) {
    throw std::invalid_argument(
        cat("StreamSet: decision family \"", family_name(f),
            "\" used but not declared for this scope"));
  }
  return streams_[size_t(i)];
}

const RngStream& StreamSet::stream(Family f) const {
  return streams_[size_t(int(f))];
}

void StreamSet::declare(std::initializer_list<Family> families) {
  declared_ = {false, false, false, false};
  for (Family f : families) declared_[size_t(int(f))] = true;
}

void StreamSet::declare_all() { declared_ = {true, true, true, true}; }

std::array<RngSnapshot, kNumFamilies> StreamSet::save_all() const {
  std::array<RngSnapshot, kNumFamilies> snaps;
  for (int i = 0; i < kNumFamilies; i++) snaps[size_t(i)] = streams_[size_t(i)].save();
  return snaps;
}

void StreamSet::restore_paired(const std::array<RngSnapshot, kNumFamilies>& snaps,
                               const PairingMode& mode) {
  for (int i = 0; i < kNumFamilies; i++) {
    if (mode.on(Family(i))) streams_[size_t(i)].restore(snaps[size_t(i)]);
  }
}

void StreamSet::set_recorders(std::array<DrawRecorder, kNumFamilies>* recs) {
  for (int i = 0; i < kNumFamilies; i++) {
    streams_[size_t(i)].set_recorder(recs == nullptr ? nullptr
                                                     : &(*recs)[size_t(i)]);
  }
}

RngStream derived_stream(uint64_t seed, const std::string& purpose, uint64_t a,
                         uint64_t b) {
  uint64_t id = mix64(fnv1a64(purpose) ^ mix64(a + 0x100 * b + 0x10000));
  // Keep derived ids clear of the small fixed ids.
  id |= uint64_t(1) << 32;
  return RngStream(seed, id);
}

}  // namespace w2vs
