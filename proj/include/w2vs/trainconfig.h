// w2vs/trainconfig.h

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

// Run configuration: UTF-8 `key = value` files with `#` comments. Unknown
// keys are errors; command-line flags override file values.

#ifndef W2VS_TRAINCONFIG_H_
#define W2VS_TRAINCONFIG_H_

#include <cstdint>
#include <string>

#include "w2vs/model.h"
#include "w2vs/rng.h"

namespace w2vs {

enum class TrainMode { kSwitch, kBaseline };

struct TrainConfig {
  uint64_t seed = 1;
  int64_t steps = 1000;
  int64_t batch_pairs = 4;      // the effective batch is twice this
  int64_t crop_samples = 16000;

  double lr = 3e-3;
  int64_t warmup_steps = 100;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-6;
  double grad_clip_norm = 1.0;

  double lambda = 0.3;
  double alpha = 0.1;
  double kappa = 0.1;
  int64_t distractors = 10;

  double snr_min = 5.0;
  double snr_max = 10.0;
  bool zero_noise = false;      // noisy half carries the original samples

  TrainMode mode = TrainMode::kSwitch;
  PairingMode pairing;

  int64_t val_interval = 100;
  std::string train_manifest;
  std::string valid_manifest;
  std::string noise_manifest;
  std::string out_dir = "out";

  ModelConfig model = desk_model_config();
};

// steps > 0, warmup <= steps, lambda >= 0, alpha >= 0, plus range checks on
// every remaining field and the embedded model config.
void validate_train_config(const TrainConfig& cfg);

// Applies one key/value pair; unknown keys and malformed values throw
// std::invalid_argument naming the key.
void apply_config_kv(TrainConfig& cfg, const std::string& key,
                     const std::string& value);

// Reads a config file into `cfg`. I/O failures throw std::runtime_error;
// syntax and key errors throw std::invalid_argument with the line number.
void load_train_config(const std::string& path, TrainConfig& cfg);

const char* train_mode_name(TrainMode m);

}  // namespace w2vs

#endif  // W2VS_TRAINCONFIG_H_
