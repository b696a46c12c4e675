// src/trainconfig.cc

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

#include "w2vs/trainconfig.h"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "w2vs/common.h"

namespace w2vs {
namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int64_t parse_i64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int64_t x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument(cat("config: key \"", key,
                                    "\" needs an integer, got \"", v, "\""));
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    uint64_t x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument(cat("config: key \"", key,
                                    "\" needs an unsigned integer, got \"", v,
                                    "\""));
  }
}

double parse_f64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument(cat("config: key \"", key,
                                    "\" needs a number, got \"", v, "\""));
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw std::invalid_argument(cat("config: key \"", key,
                                  "\" needs on/off, got \"", v, "\""));
}

// "64x10x5,64x8x4,64x4x2" -> conv layer stack.
std::vector<ConvLayerSpec> parse_layers(const std::string& key,
                                        const std::string& v) {
  std::vector<ConvLayerSpec> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    int64_t f[3];
    size_t start = 0;
    for (int i = 0; i < 3; i++) {
      size_t x = i < 2 ? item.find('x', start) : item.size();
      if (x == std::string::npos) x = std::string::npos;
      if ((i < 2 && x == std::string::npos) || x <= start) {
        throw std::invalid_argument(
            cat("config: key \"", key, "\" needs CHxKERNELxSTRIDE entries, ",
                "got \"", item, "\""));
      }
      f[i] = parse_i64(key, item.substr(start, x - start));
      start = x + 1;
    }
    out.push_back({f[0], f[1], f[2]});
  }
  if (out.empty()) {
    throw std::invalid_argument(cat("config: key \"", key,
                                    "\" lists no layers"));
  }
  return out;
}

}  // namespace

const char* train_mode_name(TrainMode m) {
  return m == TrainMode::kSwitch ? "switch" : "baseline";
}

void apply_config_kv(TrainConfig& cfg, const std::string& key,
                     const std::string& value) {
  if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "steps") cfg.steps = parse_i64(key, value);
  else if (key == "batch_pairs") cfg.batch_pairs = parse_i64(key, value);
  else if (key == "crop_samples") cfg.crop_samples = parse_i64(key, value);
  else if (key == "lr") cfg.lr = parse_f64(key, value);
  else if (key == "warmup_steps") cfg.warmup_steps = parse_i64(key, value);
  else if (key == "adam.beta1") cfg.adam_beta1 = parse_f64(key, value);
  else if (key == "adam.beta2") cfg.adam_beta2 = parse_f64(key, value);
  else if (key == "adam.eps") cfg.adam_eps = parse_f64(key, value);
  else if (key == "grad_clip_norm") cfg.grad_clip_norm = parse_f64(key, value);
  else if (key == "lambda") cfg.lambda = parse_f64(key, value);
  else if (key == "alpha") cfg.alpha = parse_f64(key, value);
  else if (key == "kappa") cfg.kappa = parse_f64(key, value);
  else if (key == "distractors") cfg.distractors = parse_i64(key, value);
  else if (key == "snr.min") cfg.snr_min = parse_f64(key, value);
  else if (key == "snr.max") cfg.snr_max = parse_f64(key, value);
  else if (key == "zero_noise") cfg.zero_noise = parse_bool(key, value);
  else if (key == "mode") {
    if (value == "switch") cfg.mode = TrainMode::kSwitch;
    else if (value == "baseline") cfg.mode = TrainMode::kBaseline;
    else {
      throw std::invalid_argument(cat("config: mode \"", value,
                                      "\" is neither switch nor baseline"));
    }
  }
  else if (key == "pair.mask") cfg.pairing.mask_positions =
      parse_bool(key, value);
  else if (key == "pair.dropout") cfg.pairing.dropout_masks =
      parse_bool(key, value);
  else if (key == "pair.gumbel") cfg.pairing.gumbel_noise =
      parse_bool(key, value);
  else if (key == "pair.distractors") cfg.pairing.distractors =
      parse_bool(key, value);
  else if (key == "val.interval") cfg.val_interval = parse_i64(key, value);
  else if (key == "data.train") cfg.train_manifest = value;
  else if (key == "data.valid") cfg.valid_manifest = value;
  else if (key == "data.noise") cfg.noise_manifest = value;
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "mask.p_start") cfg.model.mask_p_start =
      parse_f64(key, value);
  else if (key == "mask.span") cfg.model.mask_span = parse_i64(key, value);
  else if (key == "encoder.layers") cfg.model.encoder.layers =
      parse_layers(key, value);
  else if (key == "encoder.norm_groups") cfg.model.encoder.norm_groups =
      parse_i64(key, value);
  else if (key == "encoder.activation") {
    if (value == "gelu") cfg.model.encoder.activation =
        EncoderActivation::kGelu;
    else if (value == "identity") cfg.model.encoder.activation =
        EncoderActivation::kIdentity;
    else {
      throw std::invalid_argument(cat("config: encoder activation \"", value,
                                      "\" is neither gelu nor identity"));
    }
  }
  else if (key == "context.blocks") cfg.model.context.blocks =
      parse_i64(key, value);
  else if (key == "context.dim") {
    cfg.model.context.model_dim = parse_i64(key, value);
  }
  else if (key == "context.heads") cfg.model.context.heads =
      parse_i64(key, value);
  else if (key == "context.ffn") cfg.model.context.ffn_dim =
      parse_i64(key, value);
  else if (key == "context.dropout") cfg.model.context.dropout_p =
      parse_f64(key, value);
  else if (key == "context.pos_kernel") cfg.model.context.pos_kernel =
      parse_i64(key, value);
  else if (key == "context.pos_groups") cfg.model.context.pos_groups =
      parse_i64(key, value);
  else if (key == "quantizer.groups") cfg.model.quantizer.groups =
      parse_i64(key, value);
  else if (key == "quantizer.entries") cfg.model.quantizer.entries =
      parse_i64(key, value);
  else if (key == "quantizer.code_dim") cfg.model.quantizer.code_dim =
      parse_i64(key, value);
  else if (key == "quantizer.out_dim") cfg.model.quantizer.out_dim =
      parse_i64(key, value);
  else if (key == "tau.start") cfg.model.tau.tau0 = parse_f64(key, value);
  else if (key == "tau.min") cfg.model.tau.tau_min = parse_f64(key, value);
  else if (key == "tau.decay") cfg.model.tau.decay = parse_f64(key, value);
  else {
    throw std::invalid_argument(cat("config: unknown key \"", key, "\""));
  }
}

void load_train_config(const std::string& path, TrainConfig& cfg) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error(cat("config: cannot open \"", path, "\""));
  }
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    lineno++;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(cat("config: ", path, ":", lineno,
                                      ": expected key = value, got \"", line,
                                      "\""));
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument(cat("config: ", path, ":", lineno,
                                      ": empty key"));
    }
    try {
      apply_config_kv(cfg, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(cat(path, ":", lineno, ": ", e.what()));
    }
  }
}

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.steps <= 0) {
    throw std::invalid_argument(cat("config: steps = ", cfg.steps));
  }
  if (cfg.warmup_steps < 0 || cfg.warmup_steps > cfg.steps) {
    throw std::invalid_argument(cat("config: warmup_steps = ",
                                    cfg.warmup_steps, " with steps = ",
                                    cfg.steps));
  }
  if (cfg.batch_pairs <= 0) {
    throw std::invalid_argument(cat("config: batch_pairs = ",
                                    cfg.batch_pairs));
  }
  if (cfg.lambda < 0) {
    throw std::invalid_argument(cat("config: lambda = ", cfg.lambda));
  }
  if (cfg.alpha < 0) {
    throw std::invalid_argument(cat("config: alpha = ", cfg.alpha));
  }
  if (cfg.kappa <= 0) {
    throw std::invalid_argument(cat("config: kappa = ", cfg.kappa));
  }
  if (cfg.distractors < 1) {
    throw std::invalid_argument(cat("config: distractors = ",
                                    cfg.distractors));
  }
  if (!(cfg.lr > 0)) {
    throw std::invalid_argument(cat("config: lr = ", cfg.lr));
  }
  if (!(cfg.adam_beta1 >= 0 && cfg.adam_beta1 < 1) ||
      !(cfg.adam_beta2 >= 0 && cfg.adam_beta2 < 1) || !(cfg.adam_eps > 0)) {
    throw std::invalid_argument(cat("config: adam betas ", cfg.adam_beta1,
                                    "/", cfg.adam_beta2, ", eps ",
                                    cfg.adam_eps));
  }
  if (cfg.grad_clip_norm < 0) {
    throw std::invalid_argument(cat("config: grad_clip_norm = ",
                                    cfg.grad_clip_norm));
  }
  if (cfg.snr_min > cfg.snr_max) {
    throw std::invalid_argument(cat("config: snr range [", cfg.snr_min, ", ",
                                    cfg.snr_max, "]"));
  }
  if (cfg.val_interval <= 0) {
    throw std::invalid_argument(cat("config: val.interval = ",
                                    cfg.val_interval));
  }
  validate_model_config(cfg.model);
  // The crop must produce at least two latent frames (contrastive targets
  // need a positive and one distractor position).
  if (cfg.crop_samples < min_input_length(cfg.model.encoder) ||
      output_length(cfg.crop_samples, cfg.model.encoder) < 2) {
    throw std::invalid_argument(cat("config: crop_samples = ",
                                    cfg.crop_samples,
                                    " yields fewer than 2 latent frames"));
  }
}

}  // namespace w2vs
