// w2vs/audio.h

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

// Waveform ingestion and exact-SNR noise mixing. Samples are kept in double
// so the realized SNR of a mixture matches the requested value to 1e-6 dB.

#ifndef W2VS_AUDIO_H_
#define W2VS_AUDIO_H_

#include <cstdint>
#include <string>
#include <vector>

#include "w2vs/rng.h"

namespace w2vs {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;
};

struct NoiseBank {
  std::vector<Waveform> clips;
  std::vector<std::string> ids;

  bool empty() const { return clips.empty(); }
  size_t size() const { return clips.size(); }
};

// A duplicated batch: the original half untouched, the noisy half derived
// from it by adding scaled noise. pair_state captures the stream position
// that produced every random choice, so the batch can be rebuilt exactly.
struct PairedBatch {
  std::vector<Waveform> original;
  std::vector<Waveform> noisy;
  std::vector<double> snr_db;
  RngSnapshot pair_state;
};

// PCM16 mono RIFF/WAVE reader; sample s decodes to s / 32768.
Waveform read_wav(const std::string& path);
// PCM16 mono writer; samples are clamped to the representable range.
void write_wav(const std::string& path, const Waveform& w);

// Mean square of the samples; empty input is a usage error.
double signal_power(const Waveform& w);
double signal_power(const std::vector<double>& samples);

// clean + g * segment, where the segment is a random circular crop of noise
// (tiled end to end when shorter) and g = sqrt(P_clean / (P_seg * 10^(snr/10))).
// The gain is computed from the cropped segment's own power, so the realized
// SNR equals snr_db up to rounding.
Waveform mix_at_snr(const Waveform& clean, const Waveform& noise,
                    double snr_db, RngStream& rng);

// Duplicates the batch and adds an independently drawn noise clip at an SNR
// uniform in [snr_lo, snr_hi] dB to each row of the noisy half. Inputs are
// cropped (offset drawn from rng) or zero-padded to target_len first.
PairedBatch make_paired_batch(const std::vector<Waveform>& batch,
                              const NoiseBank& bank, double snr_lo,
                              double snr_hi, int64_t target_len,
                              RngStream& rng);

}  // namespace w2vs

#endif  // W2VS_AUDIO_H_
