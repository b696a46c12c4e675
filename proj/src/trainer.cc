// src/trainer.cc

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

#include "w2vs/trainer.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>

#include "json.hpp"
#include "w2vs/losses.h"

namespace w2vs {
namespace {

using ordered_json = nlohmann::ordered_json;

// Fixed seed for validation-time noise and decisions, deliberately not tied
// to cfg.seed so validation losses are comparable across runs.
constexpr uint64_t kValSeed = 0x5732565376616cULL;

Tensor<float> waves_to_tensor(const std::vector<Waveform>& ws,
                              int64_t expect_len) {
  std::vector<float> flat;
  flat.reserve(ws.size() * size_t(expect_len));
  for (const auto& w : ws) {
    if (int64_t(w.samples.size()) != expect_len) {
      throw std::invalid_argument(cat("trainer: batch row holds ",
                                      w.samples.size(), " samples; expected ",
                                      expect_len));
    }
    for (double s : w.samples) flat.push_back(float(s));
  }
  return Tensor<float>::from_data({int64_t(ws.size()), expect_len},
                                  std::move(flat));
}

bool all_finite(const std::vector<float>& v) {
  for (float x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

struct HalfPack {
  HalfOutputs<float> out;
  HalfDecisions<float> dec;
};

// The loss pieces a step needs both inside and after the tape scope.
struct StepLoss {
  LossBreakdown<float> parts;
  Tensor<float> div_o, div_n, total;
  ContrastiveStats stats;
};

void throw_first_nonfinite(
    int64_t step,
    const std::vector<std::pair<const char*, const Tensor<float>*>>& order) {
  for (const auto& [name, t] : order) {
    if (t->data_ptr() != nullptr && !all_finite(t->data())) {
      throw std::runtime_error(cat("train step ", step,
                                   ": non-finite values first appear in ",
                                   name));
    }
  }
  throw std::runtime_error(cat("train step ", step,
                               ": loss is non-finite but every scanned "
                               "tensor is finite"));
}

}  // namespace

std::string metrics_line(const MetricsRecord& rec) {
  ordered_json j;
  j["step"] = rec.step;
  j["total"] = rec.total;
  j["l_oo"] = rec.l_oo;
  j["l_nn"] = rec.l_nn;
  j["l_on"] = rec.l_on;
  j["l_no"] = rec.l_no;
  j["l_div"] = rec.l_div;
  j["code_ppl"] = rec.code_ppl;
  j["top1"] = rec.top1;
  j["lr"] = rec.lr;
  j["tau"] = rec.tau;
  j["grad_norm"] = rec.grad_norm;
  if (rec.has_val) j["val_loss"] = rec.val_loss;
  return j.dump();
}

double lr_at(const TrainConfig& cfg, int64_t step) {
  if (step < 1 || step > cfg.steps) {
    throw std::invalid_argument(cat("lr_at: step ", step, " outside [1, ",
                                    cfg.steps, "]"));
  }
  if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps) {
    return cfg.lr * double(step) / double(cfg.warmup_steps);
  }
  int64_t decay_span = cfg.steps - cfg.warmup_steps;
  if (decay_span == 0) return 0.0;
  return cfg.lr * double(cfg.steps - step) / double(decay_span);
}

Trainer::Trainer(const TrainConfig& cfg) : cfg_(cfg), streams_(cfg.seed) {
  validate_train_config(cfg_);
  RngStream init(cfg_.seed, stream_ids::kInit);
  model_ = init_model<float>(cfg_.model, init);
  reg_ = named_params(model_);
  adam_m_.resize(reg_.size());
  adam_v_.resize(reg_.size());
  for (size_t i = 0; i < reg_.size(); i++) {
    adam_m_[i].assign(size_t(reg_[i].second->numel()), 0.0f);
    adam_v_[i].assign(size_t(reg_[i].second->numel()), 0.0f);
  }
}

MetricsRecord Trainer::train_step(const PairedBatch& pair) {
  if (pair.original.empty() || pair.original.size() != pair.noisy.size()) {
    throw std::invalid_argument(cat("train_step: ", pair.original.size(),
                                    " original rows vs ", pair.noisy.size(),
                                    " noisy rows"));
  }
  const int64_t b = int64_t(pair.original.size());
  const int64_t t = cfg_.crop_samples;
  const int64_t t_frames = output_length(t, cfg_.model.encoder);
  const double tau = anneal_tau(step_, cfg_.model.tau);

  for (auto& kv : reg_) kv.second->zero_grad();

  auto x_o = waves_to_tensor(pair.original, t);
  auto x_n = waves_to_tensor(pair.noisy, t);

  MetricsRecord rec;
  rec.step = step_ + 1;
  rec.tau = tau;

  HalfPack po, pn;
  StepLoss sl;
  {
    Tape<float> tape;
    std::array<DrawRecorder, kNumFamilies> recs{};
    if (transcript_ != nullptr) streams_.set_recorders(&recs);
    std::optional<MaskSpec> orig_spec;

    auto halves = paired_forward(
        streams_, cfg_.pairing, [&](Half h, StreamSet& ss) {
          recs = {};
          std::vector<int64_t> counts;
          const std::vector<int64_t>* forced = nullptr;
          if (h == Half::kNoisy && !cfg_.pairing.mask_positions &&
              orig_spec.has_value()) {
            for (const auto& row : orig_spec->idx) {
              counts.push_back(int64_t(row.size()));
            }
            forced = &counts;
          }
          HalfPack p;
          p.dec = draw_decisions<float>(cfg_.model, b, t_frames,
                                        cfg_.distractors, ss, forced);
          if (h == Half::kOriginal) orig_spec = p.dec.spec;
          if (transcript_ != nullptr) {
            ordered_json line;
            line["step"] = rec.step;
            line["half"] = h == Half::kOriginal ? "original" : "noisy";
            for (int f = 0; f < kNumFamilies; f++) {
              ordered_json fam;
              fam["count"] = recs[size_t(f)].count;
              fam["hash"] = recs[size_t(f)].hash;
              line[family_name(Family(f))] = fam;
            }
            line["mask_idx"] = p.dec.spec.idx;
            (*transcript_) << line.dump() << '\n';
          }
          p.out = forward_half(model_, h == Half::kOriginal ? x_o : x_n,
                               p.dec, float(tau), /*hard=*/true);
          return p;
        });
    streams_.set_recorders(nullptr);
    po = std::move(halves.first);
    pn = std::move(halves.second);

    ContrastiveConfig ccfg;
    ccfg.distractors = cfg_.distractors;
    ccfg.kappa = cfg_.kappa;
    if (cfg_.mode == TrainMode::kBaseline) {
      sl.parts.l_oo = contrastive_loss(po.out.c, po.out.q.q, po.dec.spec,
                                       po.dec.distractors, ccfg, &sl.stats);
      sl.parts.l_nn = contrastive_loss(pn.out.c, pn.out.q.q, pn.dec.spec,
                                       pn.dec.distractors, ccfg, &sl.stats);
      sl.parts.lambda = 0;
    } else {
      sl.parts = switched_loss(po.out.c, po.out.q.q, pn.out.c, pn.out.q.q,
                               po.dec.spec, pn.dec.spec, po.dec.distractors,
                               pn.dec.distractors, cfg_.lambda, ccfg,
                               cfg_.pairing.mask_positions, &sl.stats);
    }
    sl.div_o = diversity_loss(po.out.q.probs, po.dec.spec);
    sl.div_n = diversity_loss(pn.out.q.probs, pn.dec.spec);
    sl.total = pretrain_loss(sl.parts, sl.div_o, sl.div_n, cfg_.alpha);

    if (!std::isfinite(sl.total.item())) {
      std::vector<std::pair<const char*, const Tensor<float>*>> order = {
          {"x_original", &x_o},
          {"x_noisy", &x_n},
          {"c_original", &po.out.c},
          {"q_original", &po.out.q.q},
          {"probs_original", &po.out.q.probs},
          {"c_noisy", &pn.out.c},
          {"q_noisy", &pn.out.q.q},
          {"probs_noisy", &pn.out.q.probs},
          {"l_oo", &sl.parts.l_oo},
          {"l_nn", &sl.parts.l_nn},
          {"l_on", &sl.parts.l_on},
          {"l_no", &sl.parts.l_no},
          {"l_div", &sl.parts.l_div},
          {"total", &sl.total}};
      throw_first_nonfinite(rec.step, order);
    }
    tape.backward(sl.total);
  }

  rec.total = sl.total.item();
  rec.l_oo = sl.parts.l_oo.item();
  rec.l_nn = sl.parts.l_nn.item();
  if (cfg_.mode == TrainMode::kSwitch) {
    rec.l_on = sl.parts.l_on.item();
    rec.l_no = sl.parts.l_no.item();
  }
  rec.l_div = sl.parts.l_div.item();
  rec.code_ppl = codebook_perplexities(po.out.q.probs, po.dec.spec);
  rec.top1 = sl.stats.anchors > 0
                 ? double(sl.stats.top1_correct) / double(sl.stats.anchors)
                 : 0.0;

  // Gradient norm accumulated in double; clip and Adam applied in float32.
  double sq = 0;
  std::vector<std::vector<float>> grads(reg_.size());
  for (size_t i = 0; i < reg_.size(); i++) {
    const auto& p = *reg_[i].second;
    grads[i] = p.has_grad()
                   ? p.grad()
                   : std::vector<float>(size_t(p.numel()), 0.0f);
    for (float g : grads[i]) sq += double(g) * double(g);
  }
  rec.grad_norm = std::sqrt(sq);
  double scale = 1.0;
  if (cfg_.grad_clip_norm > 0 && rec.grad_norm > cfg_.grad_clip_norm) {
    scale = cfg_.grad_clip_norm / rec.grad_norm;
  }

  step_ += 1;
  const double lr_t = lr_at(cfg_, std::min(step_, cfg_.steps));
  rec.lr = lr_t;
  const float b1 = float(cfg_.adam_beta1), b2 = float(cfg_.adam_beta2);
  const float bc1 = float(1.0 - std::pow(cfg_.adam_beta1, double(step_)));
  const float bc2 = float(1.0 - std::pow(cfg_.adam_beta2, double(step_)));
  const float eps = float(cfg_.adam_eps);
  const float fscale = float(scale);
  const float flr = float(lr_t);
  for (size_t i = 0; i < reg_.size(); i++) {
    auto& data = reg_[i].second->mutable_data();
    auto& m = adam_m_[i];
    auto& v = adam_v_[i];
    for (size_t j = 0; j < data.size(); j++) {
      float g = grads[i][j] * fscale;
      m[j] = b1 * m[j] + (1.0f - b1) * g;
      v[j] = b2 * v[j] + (1.0f - b2) * g * g;
      float mhat = m[j] / bc1;
      float vhat = v[j] / bc2;
      data[j] -= flr * mhat / (std::sqrt(vhat) + eps);
    }
  }
  return rec;
}

double Trainer::eval_loss(const Dataset& valid, const NoiseBank& bank) {
  if (valid.size() == 0) {
    throw std::invalid_argument("eval_loss: validation manifest is empty");
  }
  const int64_t t = cfg_.crop_samples;
  const int64_t t_frames = output_length(t, cfg_.model.encoder);
  const double tau = anneal_tau(step_, cfg_.model.tau);
  RngStream noise_rng = derived_stream(kValSeed, "val-noise", 0, 0);
  StreamSet val_streams(kValSeed);
  const PairingMode all_on;

  double weighted = 0;
  int64_t rows = 0;
  for (size_t at = 0; at < valid.size(); at += size_t(cfg_.batch_pairs)) {
    std::vector<Waveform> batch;
    for (size_t i = at;
         i < std::min(valid.size(), at + size_t(cfg_.batch_pairs)); i++) {
      batch.push_back(valid.load(i));
    }
    auto pair = make_paired_batch(batch, bank, cfg_.snr_min, cfg_.snr_max, t,
                                  noise_rng);
    if (cfg_.zero_noise) pair.noisy = pair.original;
    const int64_t b = int64_t(batch.size());
    auto x_o = waves_to_tensor(pair.original, t);
    auto x_n = waves_to_tensor(pair.noisy, t);

    auto halves =
        paired_forward(val_streams, all_on, [&](Half h, StreamSet& ss) {
          HalfPack p;
          p.dec = draw_decisions<float>(cfg_.model, b, t_frames,
                                        cfg_.distractors, ss);
          p.dec.dropout.masks.clear();  // evaluation runs without dropout
          p.out = forward_half(model_, h == Half::kOriginal ? x_o : x_n,
                               p.dec, float(tau), /*hard=*/true);
          return p;
        });
    auto& po = halves.first;
    auto& pn = halves.second;

    ContrastiveConfig ccfg;
    ccfg.distractors = cfg_.distractors;
    ccfg.kappa = cfg_.kappa;
    LossBreakdown<float> parts;
    if (cfg_.mode == TrainMode::kBaseline) {
      parts.l_oo = contrastive_loss(po.out.c, po.out.q.q, po.dec.spec,
                                    po.dec.distractors, ccfg);
      parts.l_nn = contrastive_loss(pn.out.c, pn.out.q.q, pn.dec.spec,
                                    pn.dec.distractors, ccfg);
      parts.lambda = 0;
    } else {
      parts = switched_loss(po.out.c, po.out.q.q, pn.out.c, pn.out.q.q,
                            po.dec.spec, pn.dec.spec, po.dec.distractors,
                            pn.dec.distractors, cfg_.lambda, ccfg, true);
    }
    auto div_o = diversity_loss(po.out.q.probs, po.dec.spec);
    auto div_n = diversity_loss(pn.out.q.probs, pn.dec.spec);
    auto total = pretrain_loss(parts, div_o, div_n, cfg_.alpha);
    if (!std::isfinite(total.item())) {
      throw std::runtime_error(cat("eval_loss: non-finite loss on the batch "
                                   "starting at utterance ", at));
    }
    weighted += double(total.item()) * double(b);
    rows += b;
  }
  return weighted / double(rows);
}

bool Trainer::note_validation(double val_loss) {
  if (val_loss < best_val_) {
    best_val_ = val_loss;
    best_step_ = step_;
    return true;
  }
  return false;
}

Checkpoint Trainer::to_checkpoint() const {
  Checkpoint ck;
  ck.step = uint64_t(step_);
  for (size_t i = 0; i < reg_.size(); i++) {
    const auto& [name, p] = reg_[i];
    CheckpointTensor t;
    t.name = name;
    t.dtype = DType::kFloat32;
    t.dims = p->shape();
    t.f32 = p->data();
    ck.params.push_back(std::move(t));
    CheckpointTensor m;
    m.name = cat("adam.m.", name);
    m.dtype = DType::kFloat32;
    m.dims = p->shape();
    m.f32 = adam_m_[i];
    ck.opt.push_back(std::move(m));
    CheckpointTensor v;
    v.name = cat("adam.v.", name);
    v.dtype = DType::kFloat32;
    v.dims = p->shape();
    v.f32 = adam_v_[i];
    ck.opt.push_back(std::move(v));
  }
  for (int f = 0; f < kNumFamilies; f++) {
    const RngStream& s = streams_.stream(Family(f));
    CheckpointTensor t;
    t.name = cat("rng.", family_name(Family(f)));
    t.dtype = DType::kUint64;
    t.dims = {3};
    t.u64 = {s.seed(), s.stream_id(), s.counter()};
    ck.rng.push_back(std::move(t));
  }
  CheckpointTensor bl;
  bl.name = "meta.best_val_loss";
  bl.dtype = DType::kFloat64;
  bl.f64 = {best_val_};
  ck.meta.push_back(std::move(bl));
  CheckpointTensor bs;
  bs.name = "meta.best_val_step";
  bs.dtype = DType::kUint64;
  bs.u64 = {uint64_t(best_step_)};
  ck.meta.push_back(std::move(bs));
  return ck;
}

void Trainer::restore(const Checkpoint& ck) {
  if (ck.params.size() != reg_.size()) {
    throw std::runtime_error(cat("restore: checkpoint holds ",
                                 ck.params.size(), " parameters; the model "
                                 "has ", reg_.size()));
  }
  std::map<std::string, size_t> by_name;
  for (size_t i = 0; i < reg_.size(); i++) by_name[reg_[i].first] = i;

  auto locate = [&](const std::string& name) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw std::runtime_error(cat("restore: checkpoint tensor \"", name,
                                   "\" does not exist in the model"));
    }
    return it->second;
  };
  auto check_payload = [&](const CheckpointTensor& t, size_t i) {
    const auto& p = *reg_[i].second;
    if (t.dtype != DType::kFloat32 || Shape(t.dims) != p.shape()) {
      throw std::runtime_error(cat("restore: tensor \"", t.name,
                                   "\" does not match the model shape"));
    }
  };

  for (const auto& t : ck.params) {
    size_t i = locate(t.name);
    check_payload(t, i);
    reg_[i].second->mutable_data() = t.f32;
  }
  size_t moments = 0;
  for (const auto& t : ck.opt) {
    bool is_m = t.name.rfind("adam.m.", 0) == 0;
    bool is_v = t.name.rfind("adam.v.", 0) == 0;
    if (!is_m && !is_v) {
      throw std::runtime_error(cat("restore: unexpected optimizer tensor \"",
                                   t.name, "\""));
    }
    size_t i = locate(t.name.substr(7));
    check_payload(t, i);
    (is_m ? adam_m_ : adam_v_)[i] = t.f32;
    moments++;
  }
  if (moments != 2 * reg_.size()) {
    throw std::runtime_error(cat("restore: ", moments,
                                 " optimizer tensors for ", reg_.size(),
                                 " parameters"));
  }
  if (ck.rng.size() != size_t(kNumFamilies)) {
    throw std::runtime_error(cat("restore: ", ck.rng.size(),
                                 " rng streams; expected ", kNumFamilies));
  }
  uint64_t rng_seed = 0;
  for (int f = 0; f < kNumFamilies; f++) {
    const auto& t = ck.rng[size_t(f)];
    std::string want = cat("rng.", family_name(Family(f)));
    if (t.name != want || t.dtype != DType::kUint64 || t.u64.size() != 3) {
      throw std::runtime_error(cat("restore: rng tensor ", f,
                                   " is not a \"", want, "\" triple"));
    }
    if (f == 0) {
      rng_seed = t.u64[0];
    } else if (t.u64[0] != rng_seed) {
      throw std::runtime_error("restore: rng streams carry mixed seeds");
    }
  }
  streams_ = StreamSet(rng_seed);
  for (int f = 0; f < kNumFamilies; f++) {
    const auto& t = ck.rng[size_t(f)];
    streams_.stream(Family(f))
        .restore(RngSnapshot{t.u64[0], t.u64[1], t.u64[2]});
  }
  best_val_ = std::numeric_limits<double>::infinity();
  best_step_ = 0;
  for (const auto& t : ck.meta) {
    if (t.name == "meta.best_val_loss" && t.f64.size() == 1) {
      best_val_ = t.f64[0];
    } else if (t.name == "meta.best_val_step" && t.u64.size() == 1) {
      best_step_ = int64_t(t.u64[0]);
    }
  }
  step_ = int64_t(ck.step);
}

RunResult run_pretraining(TrainConfig cfg, const std::string& resume_path,
                          double lr_scale, bool dump_decisions,
                          int64_t stop_at_step) {
  if (!(lr_scale > 0)) {
    throw std::invalid_argument(cat("run_pretraining: lr scale ", lr_scale));
  }
  cfg.lr *= lr_scale;
  validate_train_config(cfg);
  if (cfg.train_manifest.empty()) {
    throw std::invalid_argument("run_pretraining: no training manifest");
  }
  if (cfg.noise_manifest.empty()) {
    throw std::invalid_argument("run_pretraining: no noise manifest");
  }
  Dataset train(cfg.train_manifest);  // empty manifests already throw
  const int64_t n = int64_t(train.size());
  const int64_t bpe = n / cfg.batch_pairs;  // full batches per epoch
  if (bpe == 0) {
    throw std::invalid_argument(cat("run_pretraining: ", n,
                                    " utterances cannot fill a batch of ",
                                    cfg.batch_pairs, " pairs"));
  }
  NoiseBank bank = load_noise_bank(cfg.noise_manifest);
  std::optional<Dataset> valid;
  if (!cfg.valid_manifest.empty()) valid.emplace(cfg.valid_manifest);

  std::filesystem::create_directories(cfg.out_dir);
  RunResult result;
  result.last_path = cfg.out_dir + "/last.ckpt";
  result.best_path = cfg.out_dir + "/best.ckpt";

  Trainer trainer(cfg);
  if (!resume_path.empty()) {
    trainer.restore(load_checkpoint(resume_path));
    if (trainer.step() >= cfg.steps) {
      throw std::invalid_argument(cat("run_pretraining: checkpoint is at "
                                      "step ", trainer.step(),
                                      " but the run ends at ", cfg.steps));
    }
  }

  std::ofstream metrics(cfg.out_dir + "/metrics.log", std::ios::app);
  if (!metrics) {
    throw std::runtime_error(cat("run_pretraining: cannot open \"",
                                 cfg.out_dir, "/metrics.log\""));
  }
  std::ofstream decisions;
  if (dump_decisions) {
    decisions.open(cfg.out_dir + "/decisions.log", std::ios::app);
    if (!decisions) {
      throw std::runtime_error(cat("run_pretraining: cannot open \"",
                                   cfg.out_dir, "/decisions.log\""));
    }
    trainer.set_transcript(&decisions);
  }

  int64_t cached_epoch = -1;
  std::vector<int64_t> perm;
  bool saved_any_best = false;
  for (int64_t s = trainer.step() + 1; s <= cfg.steps; s++) {
    const int64_t epoch = (s - 1) / bpe;
    const int64_t slot = (s - 1) % bpe;
    if (epoch != cached_epoch) {
      perm = derived_stream(cfg.seed, "shuffle", uint64_t(epoch), 0)
                 .shuffled_indices(n);
      cached_epoch = epoch;
    }
    std::vector<Waveform> batch;
    for (int64_t j = 0; j < cfg.batch_pairs; j++) {
      batch.push_back(
          train.load(size_t(perm[size_t(slot * cfg.batch_pairs + j)])));
    }
    RngStream pair_rng = derived_stream(cfg.seed, "pair", uint64_t(s), 0);
    auto pair = make_paired_batch(batch, bank, cfg.snr_min, cfg.snr_max,
                                  cfg.crop_samples, pair_rng);
    if (cfg.zero_noise) pair.noisy = pair.original;

    MetricsRecord rec = trainer.train_step(pair);
    result.steps_run++;

    const bool at_val = s % cfg.val_interval == 0 || s == cfg.steps;
    if (at_val) {
      if (valid.has_value()) {
        rec.val_loss = trainer.eval_loss(*valid, bank);
        rec.has_val = true;
        if (trainer.note_validation(rec.val_loss)) {
          save_checkpoint(trainer.to_checkpoint(), result.best_path);
          saved_any_best = true;
        }
      }
      save_checkpoint(trainer.to_checkpoint(), result.last_path);
    }
    metrics << metrics_line(rec) << '\n';
    metrics.flush();
    if (dump_decisions) decisions.flush();
    if (stop_at_step > 0 && s >= stop_at_step) break;
  }
  // Runs that never recorded a validation best still leave a best.ckpt (the
  // final state). A finite restored best means an earlier segment already
  // wrote the true best; never clobber it.
  if (!saved_any_best && !std::isfinite(trainer.best_val_loss())) {
    save_checkpoint(trainer.to_checkpoint(), result.best_path);
  }
  return result;
}

}  // namespace w2vs
