// tests/acceptance.cc

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

// End-to-end go/no-go gate. Ten numbered checks, one PASS or FAIL line each,
// exit 0 only when every check passes:
//    1  a switch-mode run at lambda 0 equals the explicit baseline bit-exactly
//    2  zero-noise pairs make all four contrastive terms equal
//    3  analytic gradients match central differences on a tiny model
//    4  the contrastive loss matches a brute-force enumeration
//    5  closed-form contrastive values: log(K+1) and softplus(-1)
//    6  mixtures land on the requested SNR; pair draws are uniform
//    7  the diversity loss respects its [-1, -1/V] range and endpoints
//    8  pairing toggles are observable in decision transcripts
//    9  a 1000-step run at desk scale learns within its time budget
//   10  identical runs are byte-identical and an interrupted run resumes
//       bit-exactly

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "w2vs/gradcheck.h"
#include "w2vs/losses.h"
#include "w2vs/trainer.h"

namespace w2vs {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

const std::string& tiny_corpus_dir() {
  static std::string dir = [] {
    auto d = (fs::temp_directory_path() / "w2vs_acceptance_tiny").string();
    fs::remove_all(d);
    write_synth_corpus(d, /*num_utts=*/6, /*num_valid=*/2, /*num_noise=*/3,
                       /*utt_samples=*/800, /*noise_samples=*/600, 16000, 99);
    return d;
  }();
  return dir;
}

// 40 utterances of 3 s each: two minutes of audio, plus validation and noise.
const std::string& desk_corpus_dir() {
  static std::string dir = [] {
    auto d = (fs::temp_directory_path() / "w2vs_acceptance_desk").string();
    fs::remove_all(d);
    write_synth_corpus(d, /*num_utts=*/40, /*num_valid=*/4, /*num_noise=*/8,
                       /*utt_samples=*/48000, /*noise_samples=*/80000, 16000,
                       1);
    return d;
  }();
  return dir;
}

std::string fresh_out(const std::string& leaf) {
  auto d = (fs::temp_directory_path() / "w2vs_acceptance_out" / leaf).string();
  fs::remove_all(d);
  return d;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(cat("cannot open \"", path, "\""));
  return std::string(std::istreambuf_iterator<char>(is),
                     std::istreambuf_iterator<char>());
}

std::vector<std::string> lines_of(const std::string& path) {
  std::istringstream is(slurp(path));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) out.push_back(line);
  return out;
}

TrainConfig tiny_train_config(const std::string& out_leaf) {
  TrainConfig cfg;
  cfg.model.encoder.layers = {{6, 4, 2}};
  cfg.model.encoder.activation = EncoderActivation::kGelu;
  cfg.model.encoder.norm_groups = 3;
  cfg.model.context.blocks = 1;
  cfg.model.context.model_dim = 6;
  cfg.model.context.heads = 2;
  cfg.model.context.ffn_dim = 12;
  cfg.model.context.dropout_p = 0.1;
  cfg.model.context.pos_kernel = 3;
  cfg.model.context.pos_groups = 3;
  cfg.model.quantizer.groups = 1;
  cfg.model.quantizer.entries = 4;
  cfg.model.quantizer.code_dim = 6;
  cfg.model.quantizer.out_dim = 6;
  cfg.model.mask_p_start = 0.3;
  cfg.model.mask_span = 2;
  cfg.seed = 7;
  cfg.batch_pairs = 2;
  cfg.crop_samples = 64;
  cfg.lr = 1e-3;
  cfg.kappa = 0.5;
  cfg.distractors = 2;
  cfg.val_interval = 100;
  cfg.train_manifest = tiny_corpus_dir() + "/train.tsv";
  cfg.valid_manifest = tiny_corpus_dir() + "/valid.tsv";
  cfg.noise_manifest = tiny_corpus_dir() + "/noise.tsv";
  cfg.out_dir = fresh_out(out_leaf);
  return cfg;
}

// The exact batch run_pretraining would hand train_step at step s.
PairedBatch batch_for_step(const TrainConfig& cfg, const Dataset& train,
                           const NoiseBank& bank, int64_t s) {
  const int64_t n = int64_t(train.size());
  const int64_t bpe = n / cfg.batch_pairs;
  const int64_t epoch = (s - 1) / bpe;
  const int64_t slot = (s - 1) % bpe;
  auto perm = derived_stream(cfg.seed, "shuffle", uint64_t(epoch), 0)
                  .shuffled_indices(n);
  std::vector<Waveform> batch;
  for (int64_t j = 0; j < cfg.batch_pairs; j++) {
    batch.push_back(
        train.load(size_t(perm[size_t(slot * cfg.batch_pairs + j)])));
  }
  RngStream rng = derived_stream(cfg.seed, "pair", uint64_t(s), 0);
  auto pair = make_paired_batch(batch, bank, cfg.snr_min, cfg.snr_max,
                                cfg.crop_samples, rng);
  if (cfg.zero_noise) pair.noisy = pair.original;
  return pair;
}

// 1. With lambda 0 the switch-mode step must equal the baseline mode, which
// never builds the switched terms, bit for bit over 50 steps.
Outcome check_lambda_zero_reduction() {
  auto cfg = tiny_train_config("c1_switch");
  cfg.steps = 50;
  cfg.warmup_steps = 5;
  cfg.lambda = 0.0;
  cfg.mode = TrainMode::kSwitch;
  auto base = cfg;
  base.mode = TrainMode::kBaseline;
  base.out_dir = fresh_out("c1_base");
  Dataset train(cfg.train_manifest);
  NoiseBank bank = load_noise_bank(cfg.noise_manifest);
  Trainer a(cfg), b(base);
  for (int64_t s = 1; s <= cfg.steps; s++) {
    auto pair = batch_for_step(cfg, train, bank, s);
    auto ra = a.train_step(pair);
    auto rb = b.train_step(pair);
    if (ra.total != rb.total || ra.l_oo != rb.l_oo || ra.l_nn != rb.l_nn ||
        ra.grad_norm != rb.grad_norm) {
      return {false, cat("step ", s, ": switch total ", ra.total,
                         " vs baseline ", rb.total)};
    }
  }
  return {true,
          "50 steps bit-identical in total, l_oo, l_nn, and grad_norm"};
}

// 2. Identical samples in both halves with every family paired: the four
// contrastive terms must agree exactly at every step.
Outcome check_zero_noise_equality() {
  auto cfg = tiny_train_config("c2");
  cfg.steps = 20;
  cfg.warmup_steps = 2;
  cfg.zero_noise = true;
  Dataset train(cfg.train_manifest);
  NoiseBank bank = load_noise_bank(cfg.noise_manifest);
  Trainer t(cfg);
  for (int64_t s = 1; s <= cfg.steps; s++) {
    auto rec = t.train_step(batch_for_step(cfg, train, bank, s));
    if (rec.l_oo != rec.l_nn || rec.l_oo != rec.l_on ||
        rec.l_oo != rec.l_no) {
      return {false, cat("step ", s, ": terms ", rec.l_oo, ", ", rec.l_nn,
                         ", ", rec.l_on, ", ", rec.l_no, " differ")};
    }
  }
  return {true, "l_oo = l_nn = l_on = l_no bitwise over 20 steps"};
}

// 3. Whole-pipeline gradients on a tiny float64 model against central
// differences, soft quantizer, fixed decisions.
Outcome check_gradients() {
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.crop_samples = 64;
  cfg.lambda = 0.3;
  cfg.alpha = 0.1;
  cfg.kappa = 0.1;
  cfg.distractors = 3;
  cfg.model.encoder.layers = {{16, 4, 2}};
  cfg.model.encoder.norm_groups = 4;
  cfg.model.context.blocks = 1;
  cfg.model.context.model_dim = 16;
  cfg.model.context.heads = 4;
  cfg.model.context.ffn_dim = 64;
  cfg.model.context.dropout_p = 0.1;
  cfg.model.context.pos_kernel = 3;
  cfg.model.context.pos_groups = 4;
  cfg.model.quantizer.groups = 1;
  cfg.model.quantizer.entries = 8;
  cfg.model.quantizer.code_dim = 16;
  cfg.model.quantizer.out_dim = 16;
  cfg.model.mask_p_start = 0.4;
  cfg.model.mask_span = 2;
  validate_train_config(cfg);

  const int64_t t = cfg.crop_samples;
  const int64_t t_frames = output_length(t, cfg.model.encoder);
  RngStream init(cfg.seed, stream_ids::kInit);
  auto model = init_model<double>(cfg.model, init);

  RngStream utt_rng = derived_stream(cfg.seed, "gradcheck-utt", 0, 0);
  Waveform clean = synth_utterance(utt_rng, t, 16000);
  RngStream noise_rng = derived_stream(cfg.seed, "gradcheck-noise", 0, 0);
  Waveform noise = synth_noise_clip(noise_rng, t, 16000);
  RngStream mix_rng = derived_stream(cfg.seed, "gradcheck-mix", 0, 0);
  Waveform noisy =
      mix_at_snr(clean, noise, 0.5 * (cfg.snr_min + cfg.snr_max), mix_rng);

  auto x_o = Tensor<double>::param({1, t}, clean.samples);
  auto x_n = Tensor<double>::param({1, t}, noisy.samples);
  StreamSet streams(cfg.seed);
  auto dec = draw_decisions<double>(cfg.model, 1, t_frames, cfg.distractors,
                                    streams);
  const double tau = anneal_tau(0, cfg.model.tau);
  ContrastiveConfig ccfg;
  ccfg.distractors = cfg.distractors;
  ccfg.kappa = cfg.kappa;
  std::function<Tensor<double>()> fn = [&]() {
    auto o = forward_half(model, x_o, dec, tau, /*hard=*/false);
    auto n = forward_half(model, x_n, dec, tau, false);
    auto parts = switched_loss(o.c, o.q.q, n.c, n.q.q, dec.spec, dec.spec,
                               dec.distractors, cfg.lambda, ccfg);
    auto div_o = diversity_loss(o.q.probs, dec.spec);
    auto div_n = diversity_loss(n.q.probs, dec.spec);
    return pretrain_loss(parts, div_o, div_n, cfg.alpha);
  };
  std::vector<Tensor<double>> params = {x_o, x_n};
  for (auto& kv : named_params(model)) params.push_back(*kv.second);

  auto res = finite_difference_check<double>(fn, params, 1e-5);
  return {res.max_rel_error < 1e-4,
          cat("max relative gradient error ", res.max_rel_error,
              " against central differences (threshold 1e-4)")};
}

// 4. 100 random tiny instances against an independent scalar enumeration of
// the per-anchor softmax over the positive and its distractors.
Outcome check_loss_oracle() {
  double worst = 0;
  for (int it = 0; it < 100; it++) {
    RngStream rng = derived_stream(11, "acc-oracle", uint64_t(it), 0);
    const int64_t tp = 2 + int64_t(rng.next_below(5));  // frames, 2..6
    const int64_t d = 2 + int64_t(rng.next_below(3));   // dims, 2..4
    const int64_t k = 1 + int64_t(rng.next_below(3));   // distractors, 1..3
    const int64_t m = 2 + int64_t(rng.next_below(uint64_t(tp - 1)));

    std::vector<int64_t> all(size_t(tp));
    std::iota(all.begin(), all.end(), 0);
    for (int64_t j = 0; j < m; j++) {
      size_t pick =
          size_t(j) + size_t(rng.next_below(uint64_t(tp - j)));
      std::swap(all[size_t(j)], all[pick]);
    }
    std::vector<int64_t> idx(all.begin(), all.begin() + m);
    std::sort(idx.begin(), idx.end());
    MaskSpec spec;
    spec.idx = {idx};

    std::vector<double> cv(size_t(tp * d)), qv(size_t(tp * d));
    for (auto& x : cv) x = rng.normal();
    for (auto& x : qv) x = rng.normal();
    auto c = Tensor<double>::from_data({1, tp, d}, cv);
    auto q = Tensor<double>::from_data({1, tp, d}, qv);

    ContrastiveConfig ccfg;
    ccfg.distractors = k;
    ccfg.kappa = 0.2 + 1.8 * rng.next_double();
    auto ds = sample_distractors(spec, k, rng);
    double lib = contrastive_loss(c, q, spec, ds, ccfg).item();

    auto dot = [&](const std::vector<double>& a, int64_t i,
                   const std::vector<double>& b, int64_t j) {
      double s = 0;
      for (int64_t x = 0; x < d; x++) {
        s += a[size_t(i * d + x)] * b[size_t(j * d + x)];
      }
      return s;
    };
    std::vector<double> cn(size_t(tp)), qn(size_t(tp));
    for (int64_t i = 0; i < tp; i++) {
      cn[size_t(i)] = std::sqrt(dot(cv, i, cv, i));
      qn[size_t(i)] = std::sqrt(dot(qv, i, qv, i));
    }
    double total = 0;
    for (int64_t a = 0; a < m; a++) {
      int64_t ia = idx[size_t(a)];
      auto sim = [&](int64_t target) {
        return dot(cv, ia, qv, target) /
               (cn[size_t(ia)] * qn[size_t(target)]) / ccfg.kappa;
      };
      std::vector<double> sims = {sim(idx[size_t(a)])};
      for (int64_t o : ds.ords[0][size_t(a)]) {
        sims.push_back(sim(idx[size_t(o)]));
      }
      double mx = *std::max_element(sims.begin(), sims.end());
      double se = 0;
      for (double s : sims) se += std::exp(s - mx);
      total += (mx + std::log(se)) - sims[0];
    }
    worst = std::max(worst, std::abs(lib - total / double(m)));
  }
  return {worst < 1e-10,
          cat("max |library - enumeration| = ", worst, " over 100 instances "
              "(threshold 1e-10)")};
}

// 5. All-equal similarities must score log(K+1); the two-candidate case with
// similarities 1 and 0 at unit temperature must score softplus(-1).
Outcome check_closed_forms() {
  for (int64_t k : {int64_t(1), int64_t(2), int64_t(5), int64_t(100)}) {
    const int64_t m = k + 1, d = 3;
    std::vector<double> cv, qv;
    for (int64_t i = 0; i < m; i++) {
      cv.insert(cv.end(), {1.0 + double(i), 0.5, -0.3});
      qv.insert(qv.end(), {0.3, -0.7, 0.2});
    }
    auto c = Tensor<double>::from_data({1, m, d}, cv);
    auto q = Tensor<double>::from_data({1, m, d}, qv);
    MaskSpec spec;
    spec.idx.emplace_back(size_t(m));
    std::iota(spec.idx[0].begin(), spec.idx[0].end(), 0);
    DistractorSet ds;
    ds.ords.emplace_back();
    for (int64_t a = 0; a < m; a++) {
      std::vector<int64_t> picks;
      for (int64_t o = 0; o < m; o++) {
        if (o != a) picks.push_back(o);
      }
      ds.ords[0].push_back(std::move(picks));
    }
    ContrastiveConfig ccfg;
    ccfg.distractors = k;
    ccfg.kappa = 0.7;
    double got = contrastive_loss(c, q, spec, ds, ccfg).item();
    double want = std::log(double(k + 1));
    if (std::abs(got - want) > 1e-12) {
      return {false, cat("K = ", k, ": got ", got, ", want log(K+1) = ",
                         want)};
    }
  }

  std::vector<double> cv = {1, 0, 0, 1};
  auto c = Tensor<double>::from_data({1, 2, 2}, cv);
  auto q = Tensor<double>::from_data({1, 2, 2}, cv);
  MaskSpec spec;
  spec.idx = {{0, 1}};
  DistractorSet ds;
  ds.ords = {{{1}, {0}}};
  ContrastiveConfig ccfg;
  ccfg.distractors = 1;
  ccfg.kappa = 1.0;
  double got = contrastive_loss(c, q, spec, ds, ccfg).item();
  double want = std::log1p(std::exp(-1.0));  // softplus(-1) = 0.313262
  if (std::abs(got - want) > 1e-6) {
    return {false, cat("similarities (1, 0): got ", got, ", want ", want)};
  }
  return {true, cat("log(K+1) within 1e-12 for K in {1, 2, 5, 100}; "
                    "softplus(-1) case returned ", got)};
}

// 6. Mixture SNR re-measured from the written samples, then a 1% KS
// uniformity test on the pair sampler's draws over [5, 10] dB.
Outcome check_snr() {
  double max_dev = 0;
  for (int i = 0; i < 1000; i++) {
    RngStream rng = derived_stream(13, "acc-snr", uint64_t(i), 0);
    Waveform clean = synth_utterance(rng, 4000, 16000);
    Waveform noise = synth_noise_clip(rng, 3000, 16000);
    double req = 20.0 * rng.next_double();
    Waveform mix = mix_at_snr(clean, noise, req, rng);
    std::vector<double> resid(mix.samples.size());
    for (size_t j = 0; j < resid.size(); j++) {
      resid[j] = mix.samples[j] - clean.samples[j];
    }
    double realized =
        10.0 * std::log10(signal_power(clean) / signal_power(resid));
    max_dev = std::max(max_dev, std::abs(realized - req));
  }
  if (max_dev > 0.01) {
    return {false, cat("a mixture missed its requested SNR by ", max_dev,
                       " dB (allowed 0.01)")};
  }

  NoiseBank bank;
  RngStream clip_rng = derived_stream(13, "acc-snr-bank", 0, 0);
  for (int i = 0; i < 4; i++) {
    bank.clips.push_back(synth_noise_clip(clip_rng, 5000, 16000));
    bank.ids.push_back(cat("clip", i));
  }
  RngStream utt_rng = derived_stream(17, "acc-ks-utt", 0, 0);
  std::vector<Waveform> one = {synth_utterance(utt_rng, 3000, 16000)};
  std::vector<double> draws;
  for (int i = 0; i < 1000; i++) {
    RngStream rng = derived_stream(17, "acc-ks", uint64_t(i), 0);
    draws.push_back(
        make_paired_batch(one, bank, 5.0, 10.0, 2000, rng).snr_db[0]);
  }
  std::sort(draws.begin(), draws.end());
  const double n = double(draws.size());
  double ks = 0;
  for (size_t i = 0; i < draws.size(); i++) {
    double f = (draws[i] - 5.0) / 5.0;
    ks = std::max(ks, std::max(f - double(i) / n, double(i + 1) / n - f));
  }
  const double crit = 1.6276 / std::sqrt(n);  // 1% critical value
  if (ks >= crit) {
    return {false, cat("KS statistic ", ks, " >= 1% critical value ", crit)};
  }
  return {true, cat("max SNR deviation ", max_dev, " dB; KS statistic ", ks,
                    " under the 1% critical value ", crit)};
}

// 7. Random simplex inputs stay inside [-1, -1/V]; the uniform and one-hot
// endpoints land on -1 and -1/V.
Outcome check_diversity_bounds() {
  for (int it = 0; it < 10000; it++) {
    RngStream rng = derived_stream(19, "acc-div", uint64_t(it), 0);
    const int64_t g = 1 + int64_t(rng.next_below(3));
    const int64_t v = 2 + int64_t(rng.next_below(7));
    const int64_t tp = 1 + int64_t(rng.next_below(3));
    MaskSpec spec;
    spec.idx.emplace_back(size_t(tp));
    std::iota(spec.idx[0].begin(), spec.idx[0].end(), 0);
    std::vector<double> pv(size_t(tp * g * v));
    for (int64_t row = 0; row < tp * g; row++) {
      double sum = 0;
      for (int64_t j = 0; j < v; j++) {
        double e = 1e-12 - std::log1p(-rng.next_double());
        pv[size_t(row * v + j)] = e;
        sum += e;
      }
      for (int64_t j = 0; j < v; j++) pv[size_t(row * v + j)] /= sum;
    }
    auto probs = Tensor<double>::from_data({1, tp, g, v}, pv);
    double loss = diversity_loss(probs, spec).item();
    if (loss < -1.0 - 1e-9 || loss > -1.0 / double(v) + 1e-9) {
      return {false, cat("draw ", it, " (G=", g, ", V=", v, "): loss ", loss,
                         " outside [-1, ", -1.0 / double(v), "]")};
    }
  }

  {
    const int64_t g = 2, v = 5, tp = 3;
    MaskSpec spec;
    spec.idx = {{0, 1, 2}};
    std::vector<double> pv(size_t(tp * g * v), 1.0 / double(v));
    auto probs = Tensor<double>::from_data({1, tp, g, v}, pv);
    double loss = diversity_loss(probs, spec).item();
    if (std::abs(loss + 1.0) > 1e-12) {
      return {false, cat("uniform input: loss ", loss, ", want -1")};
    }
  }
  for (int64_t v : {int64_t(2), int64_t(3), int64_t(5), int64_t(8)}) {
    MaskSpec spec;
    spec.idx = {{0}};
    std::vector<double> pv(size_t(v), 0.0);
    pv[size_t(v - 1)] = 1.0;
    auto probs = Tensor<double>::from_data({1, 1, 1, v}, pv);
    double loss = diversity_loss(probs, spec).item();
    if (loss != -1.0 / double(v)) {
      return {false, cat("one-hot input at V=", v, ": loss ", loss,
                         ", want exactly ", -1.0 / double(v))};
    }
  }
  return {true, "10000 simplex draws inside [-1, -1/V]; uniform gives -1, "
                "one-hot gives -1/V exactly"};
}

// 8. Decision transcripts: an unpaired family shows fresh draws on the noisy
// half only; everything else stays identical within the step. The mask
// toggle moves positions but keeps the per-example counts.
Outcome check_ablation_observability() {
  std::string err;
  auto check_run = [&err](const char* leaf,
                          const std::function<void(TrainConfig&)>& mutate,
                          const char* off) -> std::string {
    auto cfg = tiny_train_config(leaf);
    cfg.steps = 2;
    cfg.warmup_steps = 1;
    mutate(cfg);
    run_pretraining(cfg, "", 1.0, /*dump_decisions=*/true);
    auto lines = lines_of(cfg.out_dir + "/decisions.log");
    if (lines.size() != 4) {
      err = cat(leaf, ": ", lines.size(), " transcript lines, want 4");
      return "";
    }
    for (size_t i = 0; i + 1 < lines.size(); i += 2) {
      auto o = nlohmann::json::parse(lines[i]);
      auto n = nlohmann::json::parse(lines[i + 1]);
      if (o["half"] != "original" || n["half"] != "noisy" ||
          o["step"] != n["step"]) {
        err = cat(leaf, ": malformed half pairing at line ", i);
        return "";
      }
      for (const char* fam : {"mask", "dropout", "gumbel", "distractor"}) {
        bool toggled = off != nullptr && std::string(fam) == off;
        if (toggled && o[fam]["hash"] == n[fam]["hash"]) {
          err = cat(leaf, ": family ", fam, " is off but the halves drew "
                    "identical streams");
          return "";
        }
        if (!toggled && o[fam] != n[fam]) {
          err = cat(leaf, ": family ", fam, " is paired but its transcript "
                    "changed across the halves");
          return "";
        }
      }
      if (off != nullptr && std::string(off) == "mask") {
        auto om = o["mask_idx"], nm = n["mask_idx"];
        if (om.size() != nm.size()) {
          err = cat(leaf, ": mask example counts differ");
          return "";
        }
        for (size_t e = 0; e < om.size(); e++) {
          if (om[e].size() != nm[e].size()) {
            err = cat(leaf, ": example ", e, " masked count ", om[e].size(),
                      " vs ", nm[e].size(), " with mask pairing off");
            return "";
          }
        }
        if (om == nm) {
          err = cat(leaf, ": mask pairing is off but positions never moved");
          return "";
        }
      } else if (o["mask_idx"] != n["mask_idx"]) {
        err = cat(leaf, ": mask positions differ though pairing is on");
        return "";
      }
    }
    return lines[0];
  };

  auto l_on = check_run("c8_on", [](TrainConfig&) {}, nullptr);
  if (!err.empty()) return {false, err};
  auto l_dropout = check_run(
      "c8_dropout", [](TrainConfig& c) { c.pairing.dropout_masks = false; },
      "dropout");
  if (!err.empty()) return {false, err};
  auto l_mask = check_run(
      "c8_mask", [](TrainConfig& c) { c.pairing.mask_positions = false; },
      "mask");
  if (!err.empty()) return {false, err};
  if (l_on != l_dropout || l_on != l_mask) {
    return {false, "the first original-half line differs across runs before "
                   "any toggle can have an effect"};
  }
  return {true, "dropout and mask toggles change exactly their own "
                "transcript families; mask counts stay pinned"};
}

TrainConfig desk_config(const std::string& out_leaf) {
  TrainConfig cfg;  // desk-scale defaults: 4 pairs, 16000 samples, 1000 steps
  cfg.train_manifest = desk_corpus_dir() + "/train.tsv";
  cfg.valid_manifest = desk_corpus_dir() + "/valid.tsv";
  cfg.noise_manifest = desk_corpus_dir() + "/noise.tsv";
  cfg.out_dir = fresh_out(out_leaf);
  return cfg;
}

// 9. The 1000-step desk-scale run: late mean loss at least 20% under the
// early mean, final top-1 at least three times the 1/(K+1) chance level,
// inside ten minutes.
Outcome check_smoke_run(std::string* run_dir) {
  auto t0 = Clock::now();
  TrainConfig cfg = desk_config("c9_run1");
  run_pretraining(cfg);
  double secs = seconds_since(t0);
  *run_dir = cfg.out_dir;

  auto lines = lines_of(cfg.out_dir + "/metrics.log");
  if (int64_t(lines.size()) != cfg.steps) {
    return {false, cat(lines.size(), " metric records, want ", cfg.steps)};
  }
  double early = 0, late = 0, top1 = 0;
  for (int i = 0; i < 100; i++) {
    early += nlohmann::json::parse(lines[size_t(i)])["total"].get<double>();
    late += nlohmann::json::parse(lines[size_t(900 + i)])["total"]
                .get<double>();
  }
  early /= 100;
  late /= 100;
  top1 = nlohmann::json::parse(lines.back())["top1"].get<double>();
  const double chance = 1.0 / double(cfg.distractors + 1);

  bool learned = late <= 0.8 * early;
  bool ranked = top1 > 3.0 * chance;
  bool in_time = secs < 600.0;
  std::string detail =
      cat("mean total ", early, " (steps 1-100) to ", late,
          " (steps 901-1000), final top1 ", top1, " vs 3x chance ",
          3.0 * chance, ", ", secs, " s");
  if (!learned) detail += "; loss dropped less than 20%";
  if (!ranked) detail += "; top1 at or under 3x chance";
  if (!in_time) detail += "; over the 600 s budget";
  return {learned && ranked && in_time, detail};
}

// 10. A second identical run must reproduce the metrics bytes, and a run
// interrupted at step 500 then resumed must match the uninterrupted one in
// metrics and both checkpoints.
Outcome check_determinism_and_resume(const std::string& run1_dir) {
  auto t0 = Clock::now();
  std::string ref_dir = run1_dir;
  if (ref_dir.empty()) {  // the smoke check failed to leave a run behind
    TrainConfig cfg = desk_config("c10_ref");
    run_pretraining(cfg);
    ref_dir = cfg.out_dir;
  }

  TrainConfig rerun = desk_config("c10_rerun");
  run_pretraining(rerun);
  if (slurp(ref_dir + "/metrics.log") !=
      slurp(rerun.out_dir + "/metrics.log")) {
    return {false, "two identical runs wrote different metrics bytes"};
  }

  TrainConfig inter = desk_config("c10_interrupted");
  run_pretraining(inter, "", 1.0, false, /*stop_at_step=*/500);
  run_pretraining(inter, inter.out_dir + "/last.ckpt");
  if (slurp(ref_dir + "/metrics.log") !=
      slurp(inter.out_dir + "/metrics.log")) {
    return {false, "the interrupted-and-resumed metrics differ from the "
                   "uninterrupted run"};
  }
  for (const char* ck : {"/last.ckpt", "/best.ckpt"}) {
    if (slurp(ref_dir + ck) != slurp(inter.out_dir + ck)) {
      return {false, cat("the interrupted-and-resumed ", ck + 1,
                         " differs from the uninterrupted run")};
    }
  }
  double secs = seconds_since(t0);
  bool in_time = secs < 1500.0;
  return {in_time, cat("rerun metrics byte-identical; interrupt at step 500 "
                       "plus resume reproduced metrics and both checkpoints "
                       "byte-for-byte, ", secs, " s",
                       in_time ? "" : "; over the 1500 s budget")};
}

}  // namespace
}  // namespace w2vs

int main() {
  using w2vs::Outcome;
  std::string run1_dir;
  struct Check {
    const char* name;
    std::function<Outcome()> fn;
  };
  const std::vector<Check> checks = {
      {"lambda 0 equals baseline mode", w2vs::check_lambda_zero_reduction},
      {"zero-noise four-term equality", w2vs::check_zero_noise_equality},
      {"gradient check", w2vs::check_gradients},
      {"contrastive loss oracle", w2vs::check_loss_oracle},
      {"closed-form loss values", w2vs::check_closed_forms},
      {"SNR exactness and uniformity", w2vs::check_snr},
      {"diversity loss bounds", w2vs::check_diversity_bounds},
      {"pairing ablation observability", w2vs::check_ablation_observability},
      {"1000-step smoke run", [&] { return w2vs::check_smoke_run(&run1_dir); }},
      {"determinism and resume",
       [&] { return w2vs::check_determinism_and_resume(run1_dir); }},
  };

  int failures = 0;
  for (size_t i = 0; i < checks.size(); i++) {
    Outcome out;
    try {
      out = checks[i].fn();
    } catch (const std::exception& e) {
      out = {false, w2vs::cat("exception: ", e.what())};
    }
    failures += out.pass ? 0 : 1;
    std::printf("[%2zu] %s  %s: %s\n", i + 1, out.pass ? "PASS" : "FAIL",
                checks[i].name, out.detail.c_str());
    std::fflush(stdout);
  }
  if (failures == 0) {
    std::printf("all 10 checks passed\n");
    return 0;
  }
  std::printf("%d of 10 checks FAILED\n", failures);
  return 1;
}
