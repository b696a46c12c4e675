// w2vs/audio.cc

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

#include "w2vs/audio.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "w2vs/common.h"

namespace w2vs {

namespace {

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return uint16_t(b[0] | b[1] << 8);
}

void write_u32(std::ostream& out, uint32_t v) {
  char b[4] = {char(v), char(v >> 8), char(v >> 16), char(v >> 24)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  char b[2] = {char(v), char(v >> 8)};
  out.write(b, 2);
}

[[noreturn]] void wav_error(const std::string& path, const std::string& what) {
  throw std::runtime_error(cat("read_wav: ", path, ": ", what));
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) wav_error(path, "cannot open file");

  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0) {
    wav_error(path, "not a RIFF file");
  }
  read_u32(in);  // declared size; data chunk is validated directly instead
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0) {
    wav_error(path, "not a WAVE file");
  }

  bool have_fmt = false;
  uint16_t channels = 0, bits = 0, format = 0;
  uint32_t sample_rate = 0;
  Waveform w;
  // Chunk walk; unknown chunks are skipped (sizes pad to even).
  for (;;) {
    in.read(tag, 4);
    if (!in) {
      if (have_fmt) wav_error(path, "missing data chunk");
      wav_error(path, "truncated before fmt chunk");
    }
    uint32_t size = read_u32(in);
    if (!in) wav_error(path, "truncated chunk header");
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (size < 16) wav_error(path, "fmt chunk too small");
      format = read_u16(in);
      channels = read_u16(in);
      sample_rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      if (!in) wav_error(path, "truncated fmt chunk");
      in.ignore(std::streamsize(size - 16 + (size & 1)));
      if (format != 1) {
        wav_error(path, cat("compression code ", format,
                            "; only PCM (code 1) is supported"));
      }
      if (channels != 1) {
        wav_error(path, cat(channels, " channels; only mono is supported"));
      }
      if (bits != 16) {
        wav_error(path, cat(bits, "-bit samples; only 16-bit is supported"));
      }
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) wav_error(path, "data chunk before fmt chunk");
      if (size % 2 != 0) wav_error(path, "odd data chunk size for PCM16");
      size_t n = size / 2;
      std::vector<char> raw(size);
      in.read(raw.data(), std::streamsize(size));
      if (size_t(in.gcount()) != size) {
        wav_error(path, cat("truncated data chunk: expected ", size,
                            " bytes, got ", in.gcount()));
      }
      w.samples.resize(n);
      for (size_t i = 0; i < n; i++) {
        int16_t s = int16_t(uint16_t(uint8_t(raw[2 * i])) |
                            uint16_t(uint8_t(raw[2 * i + 1])) << 8);
        w.samples[i] = double(s) / 32768.0;
      }
      w.sample_rate = int(sample_rate);
      return w;
    } else {
      in.ignore(std::streamsize(size + (size & 1)));
      if (!in) wav_error(path, "truncated chunk body");
    }
  }
}

void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error(cat("write_wav: cannot open ", path));
  }
  uint32_t data_size = uint32_t(w.samples.size() * 2);
  out.write("RIFF", 4);
  write_u32(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, uint32_t(w.sample_rate));
  write_u32(out, uint32_t(w.sample_rate) * 2);
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_size);
  for (double s : w.samples) {
    double v = std::round(s * 32768.0);
    if (v > 32767.0) v = 32767.0;
    if (v < -32768.0) v = -32768.0;
    write_u16(out, uint16_t(int16_t(v)));
  }
  if (!out) {
    throw std::runtime_error(cat("write_wav: write failed for ", path));
  }
}

double signal_power(const std::vector<double>& samples) {
  if (samples.empty()) {
    throw std::invalid_argument("signal_power: empty waveform");
  }
  double acc = 0;
  for (double s : samples) acc += s * s;
  return acc / double(samples.size());
}

double signal_power(const Waveform& w) { return signal_power(w.samples); }

Waveform mix_at_snr(const Waveform& clean, const Waveform& noise,
                    double snr_db, RngStream& rng) {
  double p_clean = signal_power(clean);
  if (p_clean <= 0) {
    throw std::domain_error("mix_at_snr: clean waveform has zero power");
  }
  if (noise.samples.empty()) {
    throw std::invalid_argument("mix_at_snr: empty noise clip");
  }
  size_t t = clean.samples.size();
  size_t nlen = noise.samples.size();
  // Circular crop: the clip is conceptually tiled end to end.
  size_t offset = size_t(rng.next_below(nlen));
  std::vector<double> seg(t);
  for (size_t i = 0; i < t; i++) seg[i] = noise.samples[(offset + i) % nlen];
  double p_seg = signal_power(seg);
  if (p_seg <= 0) {
    throw std::domain_error("mix_at_snr: noise segment has zero power");
  }
  double g = std::sqrt(p_clean / (p_seg * std::pow(10.0, snr_db / 10.0)));
  Waveform out;
  out.sample_rate = clean.sample_rate;
  out.samples.resize(t);
  for (size_t i = 0; i < t; i++) {
    out.samples[i] = clean.samples[i] + g * seg[i];
  }
  return out;
}

PairedBatch make_paired_batch(const std::vector<Waveform>& batch,
                              const NoiseBank& bank, double snr_lo,
                              double snr_hi, int64_t target_len,
                              RngStream& rng) {
  if (batch.empty()) {
    throw std::invalid_argument("make_paired_batch: empty batch");
  }
  if (bank.empty()) {
    throw std::invalid_argument("make_paired_batch: empty noise bank");
  }
  if (!(snr_lo <= snr_hi)) {
    throw std::invalid_argument(cat("make_paired_batch: snr range [", snr_lo,
                                    ", ", snr_hi, "] is empty"));
  }
  if (target_len < 1) {
    throw std::invalid_argument("make_paired_batch: target length must be >= 1");
  }
  PairedBatch out;
  out.pair_state = rng.save();
  for (const Waveform& w : batch) {
    Waveform cropped;
    cropped.sample_rate = w.sample_rate;
    int64_t len = int64_t(w.samples.size());
    if (len > target_len) {
      int64_t off = int64_t(rng.next_below(uint64_t(len - target_len + 1)));
      cropped.samples.assign(w.samples.begin() + off,
                             w.samples.begin() + off + target_len);
    } else {
      cropped.samples = w.samples;
      cropped.samples.resize(size_t(target_len), 0.0);
    }
    size_t clip = size_t(rng.next_below(bank.size()));
    double snr = rng.uniform(snr_lo, snr_hi);
    out.noisy.push_back(mix_at_snr(cropped, bank.clips[clip], snr, rng));
    out.original.push_back(std::move(cropped));
    out.snr_db.push_back(snr);
  }
  return out;
}

}  // namespace w2vs
