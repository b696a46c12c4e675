// w2vs/dataset.h

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

#ifndef W2VS_DATASET_H_
#define W2VS_DATASET_H_

#include <cstdint>
#include <string>
#include <vector>

#include "w2vs/audio.h"
#include "w2vs/rng.h"

namespace w2vs {

// One record per line: path<TAB>num_samples, UTF-8. Paths resolve relative
// to the manifest's directory.
struct ManifestEntry {
  std::string path;        // resolved
  int64_t num_samples = 0;
};

std::vector<ManifestEntry> read_manifest(const std::string& manifest_path);

// Utterance collection behind a manifest. Waveforms are read on demand; the
// declared sample count is validated against the file on every load.
class Dataset {
 public:
  explicit Dataset(const std::string& manifest_path);

  size_t size() const { return entries_.size(); }
  const ManifestEntry& entry(size_t i) const { return entries_[i]; }
  Waveform load(size_t i) const;

 private:
  std::vector<ManifestEntry> entries_;
};

NoiseBank load_noise_bank(const std::string& manifest_path);

// Synthetic corpus: harmonic tone utterances plus shaped-noise clips, enough
// to exercise the full training path without any external audio.
Waveform synth_utterance(RngStream& rng, int64_t num_samples, int sample_rate);
Waveform synth_noise_clip(RngStream& rng, int64_t num_samples, int sample_rate);

// Writes `num_utts` utterances and `num_noise` clips under dir/ along with
// train.tsv, valid.tsv (last `num_valid` utterances), and noise.tsv.
void write_synth_corpus(const std::string& dir, int num_utts, int num_valid,
                        int num_noise, int64_t utt_samples,
                        int64_t noise_samples, int sample_rate, uint64_t seed);

}  // namespace w2vs

#endif  // W2VS_DATASET_H_
