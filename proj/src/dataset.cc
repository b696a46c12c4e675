// w2vs/dataset.cc

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

#include "w2vs/dataset.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "w2vs/common.h"

namespace w2vs {

std::vector<ManifestEntry> read_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) {
    throw std::runtime_error(cat("read_manifest: cannot open ", manifest_path));
  }
  std::filesystem::path base =
      std::filesystem::path(manifest_path).parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error(cat("read_manifest: ", manifest_path, ":",
                                   lineno, ": missing tab separator"));
    }
    ManifestEntry e;
    e.path = (base / line.substr(0, tab)).string();
    try {
      e.num_samples = std::stoll(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw std::runtime_error(cat("read_manifest: ", manifest_path, ":",
                                   lineno, ": bad sample count \"",
                                   line.substr(tab + 1), "\""));
    }
    if (e.num_samples <= 0) {
      throw std::runtime_error(cat("read_manifest: ", manifest_path, ":",
                                   lineno, ": sample count must be positive"));
    }
    entries.push_back(std::move(e));
  }
  if (entries.empty()) {
    throw std::runtime_error(cat("read_manifest: ", manifest_path,
                                 " has no entries"));
  }
  return entries;
}

Dataset::Dataset(const std::string& manifest_path)
    : entries_(read_manifest(manifest_path)) {}

Waveform Dataset::load(size_t i) const {
  const ManifestEntry& e = entries_.at(i);
  Waveform w = read_wav(e.path);
  if (int64_t(w.samples.size()) != e.num_samples) {
    throw std::runtime_error(cat("Dataset: ", e.path, " has ",
                                 w.samples.size(),
                                 " samples but the manifest declares ",
                                 e.num_samples));
  }
  return w;
}

NoiseBank load_noise_bank(const std::string& manifest_path) {
  auto entries = read_manifest(manifest_path);
  NoiseBank bank;
  for (const auto& e : entries) {
    Waveform w = read_wav(e.path);
    if (int64_t(w.samples.size()) != e.num_samples) {
      throw std::runtime_error(cat("load_noise_bank: ", e.path, " has ",
                                   w.samples.size(),
                                   " samples but the manifest declares ",
                                   e.num_samples));
    }
    bank.clips.push_back(std::move(w));
    bank.ids.push_back(e.path);
  }
  return bank;
}

Waveform synth_utterance(RngStream& rng, int64_t num_samples,
                         int sample_rate) {
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(size_t(num_samples));
  // Harmonic stack over a slowly wandering fundamental, with an amplitude
  // envelope and a little dither so no window is ever exactly silent.
  double f0 = rng.uniform(90.0, 280.0);
  double drift = rng.uniform(-0.3, 0.3);
  double env_rate = rng.uniform(1.5, 4.0);
  double env_phase = rng.uniform(0.0, 2.0 * M_PI);
  double a1 = rng.uniform(0.15, 0.3);
  double a2 = a1 * rng.uniform(0.3, 0.6);
  double a3 = a1 * rng.uniform(0.1, 0.3);
  double phase = rng.uniform(0.0, 2.0 * M_PI);
  for (int64_t i = 0; i < num_samples; i++) {
    double tsec = double(i) / sample_rate;
    double f = f0 + drift * f0 * std::sin(2.0 * M_PI * 0.8 * tsec);
    phase += 2.0 * M_PI * f / sample_rate;
    double env = 0.55 + 0.45 * std::sin(2.0 * M_PI * env_rate * tsec + env_phase);
    double s = a1 * std::sin(phase) + a2 * std::sin(2.0 * phase) +
               a3 * std::sin(3.0 * phase);
    w.samples[size_t(i)] = env * s + 1e-4 * rng.normal();
  }
  return w;
}

Waveform synth_noise_clip(RngStream& rng, int64_t num_samples,
                          int sample_rate) {
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(size_t(num_samples));
  // One-pole lowpassed white noise plus an occasional hum component.
  double alpha = rng.uniform(0.6, 0.95);
  double amp = rng.uniform(0.08, 0.25);
  bool hum = rng.next_double() < 0.5;
  double hum_f = rng.uniform(50.0, 200.0);
  double hum_a = hum ? amp * rng.uniform(0.3, 0.8) : 0.0;
  double state = 0.0;
  for (int64_t i = 0; i < num_samples; i++) {
    state = alpha * state + (1.0 - alpha) * rng.normal();
    double tsec = double(i) / sample_rate;
    w.samples[size_t(i)] =
        amp * state + hum_a * std::sin(2.0 * M_PI * hum_f * tsec);
  }
  return w;
}

void write_synth_corpus(const std::string& dir, int num_utts, int num_valid,
                        int num_noise, int64_t utt_samples,
                        int64_t noise_samples, int sample_rate,
                        uint64_t seed) {
  if (num_valid >= num_utts) {
    throw std::invalid_argument(
        cat("write_synth_corpus: ", num_valid, " validation utterances of ",
            num_utts, " total leaves no training data"));
  }
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream train(fs::path(dir) / "train.tsv");
  std::ofstream valid(fs::path(dir) / "valid.tsv");
  std::ofstream noise(fs::path(dir) / "noise.tsv");
  if (!train || !valid || !noise) {
    throw std::runtime_error(cat("write_synth_corpus: cannot write to ", dir));
  }
  for (int i = 0; i < num_utts; i++) {
    RngStream r = derived_stream(seed, "synth-utt", uint64_t(i), 0);
    // Mild length variation so cropping paths are exercised.
    int64_t n = utt_samples + int64_t(r.next_below(uint64_t(utt_samples / 4)));
    Waveform w = synth_utterance(r, n, sample_rate);
    std::string name = cat("utt", i, ".wav");
    write_wav((fs::path(dir) / name).string(), w);
    (i < num_utts - num_valid ? train : valid) << name << '\t' << n << '\n';
  }
  for (int i = 0; i < num_noise; i++) {
    RngStream r = derived_stream(seed, "synth-noise", uint64_t(i), 0);
    int64_t n =
        noise_samples + int64_t(r.next_below(uint64_t(noise_samples / 2)));
    Waveform w = synth_noise_clip(r, n, sample_rate);
    std::string name = cat("noise", i, ".wav");
    write_wav((fs::path(dir) / name).string(), w);
    noise << name << '\t' << n << '\n';
  }
}

}  // namespace w2vs
