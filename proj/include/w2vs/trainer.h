// w2vs/trainer.h

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

// The optimization loop: paired forward, four-term loss, global-norm
// clipping, Adam, and bit-reproducible checkpoint round trips. Everything is
// single-threaded and deterministic in (seed, config, data). Network and
// optimizer state are float32; the gradient norm and every reported metric
// accumulate in double.

#ifndef W2VS_TRAINER_H_
#define W2VS_TRAINER_H_

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "w2vs/audio.h"
#include "w2vs/checkpoint.h"
#include "w2vs/dataset.h"
#include "w2vs/model.h"
#include "w2vs/rng.h"
#include "w2vs/trainconfig.h"

namespace w2vs {

// One line of <out_dir>/metrics.log per optimization step.
struct MetricsRecord {
  int64_t step = 0;
  double total = 0;
  double l_oo = 0, l_nn = 0, l_on = 0, l_no = 0, l_div = 0;
  std::vector<double> code_ppl;  // per codebook group, original half
  double top1 = 0;               // own-target anchors ranking the positive first
  double lr = 0, tau = 0, grad_norm = 0;
  bool has_val = false;
  double val_loss = 0;
};

// Serialized as one self-describing JSON object, keys in a fixed order, so
// equal records produce equal bytes.
std::string metrics_line(const MetricsRecord& rec);

// Linear warmup to cfg.lr over cfg.warmup_steps, then linear decay reaching
// zero at cfg.steps. `step` is 1-based.
double lr_at(const TrainConfig& cfg, int64_t step);

class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);

  // One paired batch through forward, backward, clip, Adam, and the step
  // counter. A non-finite loss aborts with a diagnostic naming the first
  // non-finite tensor in the canonical scan order.
  MetricsRecord train_step(const PairedBatch& pair);

  // Mean pair loss over the validation set, fully deterministic: batches in
  // manifest order, decisions and noise from fixed run-independent seeds, no
  // dropout, all pairing families on.
  double eval_loss(const Dataset& valid, const NoiseBank& bank);

  // Records a validation result; true when it strictly improves on the best.
  bool note_validation(double val_loss);

  Checkpoint to_checkpoint() const;
  // Restores parameters, moments, step and stream positions; tensors are
  // matched by name and shape against the current model.
  void restore(const Checkpoint& ck);

  PretrainModel<float>& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }
  int64_t step() const { return step_; }
  double best_val_loss() const { return best_val_; }
  int64_t best_val_step() const { return best_step_; }

  // When set, every train_step writes one decision-transcript line per half
  // (draw counts and hashes per family, plus the mask positions).
  void set_transcript(std::ostream* os) { transcript_ = os; }

 private:
  TrainConfig cfg_;
  PretrainModel<float> model_;
  std::vector<std::pair<std::string, Tensor<float>*>> reg_;
  std::vector<std::vector<float>> adam_m_, adam_v_;
  StreamSet streams_;
  int64_t step_ = 0;
  double best_val_ = std::numeric_limits<double>::infinity();
  int64_t best_step_ = 0;  // 0 until a validation ran
  std::ostream* transcript_ = nullptr;
};

struct RunResult {
  int64_t steps_run = 0;
  std::string last_path;
  std::string best_path;
};

// The whole pre-training run: data from the manifests, one train_step per
// step, periodic validation, best and last checkpoints under cfg.out_dir,
// metrics appended to <out_dir>/metrics.log (and decision transcripts to
// <out_dir>/decisions.log when `dump_decisions`). `resume_path`, when given,
// restores a checkpoint first; `lr_scale` multiplies cfg.lr. `stop_at_step`
// > 0 interrupts the run after that step without touching the schedule, as a
// kill at that point would; resume from last.ckpt continues it, so stops are
// only useful at validation steps.
RunResult run_pretraining(TrainConfig cfg, const std::string& resume_path = "",
                          double lr_scale = 1.0, bool dump_decisions = false,
                          int64_t stop_at_step = 0);

}  // namespace w2vs

#endif  // W2VS_TRAINER_H_
