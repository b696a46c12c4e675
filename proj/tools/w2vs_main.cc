// tools/w2vs_main.cc

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

// Command line front end. Exit codes: 0 success, 1 usage error (flags or
// configuration), 2 runtime or data-format error (and a failed grad-check).

#include <cmath>
#include <cstdint>
#include <deque>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "w2vs/gradcheck.h"
#include "w2vs/trainer.h"

namespace w2vs {
namespace {

// Every value-override flag funnels through apply_config_kv, so the command
// line and the config file share one parser and one set of errors. A deque
// keeps the value buffers at stable addresses for CLI11.
struct Override {
  CLI::Option* opt = nullptr;
  std::string key;
  std::string value;
};

class OverrideSet {
 public:
  void bind(CLI::App* cmd, const std::string& flag, const std::string& key,
            const std::string& desc) {
    slots_.push_back({nullptr, key, ""});
    auto& s = slots_.back();
    s.opt = cmd->add_option(flag, s.value, desc);
  }
  void bind_onoff(CLI::App* cmd, const std::string& flag,
                  const std::string& key, const std::string& desc) {
    bind(cmd, flag, key, desc);
    slots_.back().opt->check(CLI::IsMember({"on", "off"}));
  }
  void apply(TrainConfig& cfg) const {
    for (const auto& s : slots_) {
      if (s.opt->count() > 0) apply_config_kv(cfg, s.key, s.value);
    }
  }

 private:
  std::deque<Override> slots_;
};

// Config file first, then the flags on top of it.
TrainConfig resolve_config(const std::string& config_path,
                           const OverrideSet& ovr) {
  TrainConfig cfg;
  if (!config_path.empty()) load_train_config(config_path, cfg);
  ovr.apply(cfg);
  return cfg;
}

void bind_common_overrides(CLI::App* cmd, OverrideSet& ovr) {
  ovr.bind(cmd, "--seed", "seed", "run seed");
  ovr.bind(cmd, "--steps", "steps", "total optimization steps");
  ovr.bind(cmd, "--batch-pairs", "batch_pairs", "pairs per step");
  ovr.bind(cmd, "--crop-samples", "crop_samples", "samples per utterance");
  ovr.bind(cmd, "--lr", "lr", "peak learning rate");
  ovr.bind(cmd, "--warmup-steps", "warmup_steps", "linear warmup length");
  ovr.bind(cmd, "--lambda", "lambda", "switched-term weight");
  ovr.bind(cmd, "--alpha", "alpha", "diversity weight");
  ovr.bind(cmd, "--kappa", "kappa", "contrastive temperature");
  ovr.bind(cmd, "--distractors", "distractors", "negatives per anchor");
  ovr.bind(cmd, "--snr-min", "snr.min", "lowest mixing SNR in dB");
  ovr.bind(cmd, "--snr-max", "snr.max", "highest mixing SNR in dB");
  ovr.bind_onoff(cmd, "--zero-noise", "zero_noise",
                 "copy the original samples into the noisy half");
  ovr.bind(cmd, "--mode", "mode", "switch | baseline");
  ovr.bind_onoff(cmd, "--pair-mask", "pair.mask",
                 "share mask positions across the pair");
  ovr.bind_onoff(cmd, "--pair-dropout", "pair.dropout",
                 "share dropout masks across the pair");
  ovr.bind_onoff(cmd, "--pair-gumbel", "pair.gumbel",
                 "share quantizer noise across the pair");
  ovr.bind_onoff(cmd, "--pair-distractors", "pair.distractors",
                 "share distractor choices across the pair");
  ovr.bind(cmd, "--val-interval", "val.interval", "steps between validations");
  ovr.bind(cmd, "--train-manifest", "data.train", "training manifest");
  ovr.bind(cmd, "--valid-manifest", "data.valid", "validation manifest");
  ovr.bind(cmd, "--noise-manifest", "data.noise", "noise manifest");
  ovr.bind(cmd, "--out-dir", "out_dir", "output directory");
}

int cmd_pretrain(const TrainConfig& cfg, const std::string& resume,
                 double lr_scale, bool dump_decisions, int64_t stop_at_step) {
  RunResult res =
      run_pretraining(cfg, resume, lr_scale, dump_decisions, stop_at_step);
  std::cout << "ran " << res.steps_run << " steps\n"
            << "last checkpoint: " << res.last_path << "\n"
            << "best checkpoint: " << res.best_path << "\n";
  return 0;
}

int cmd_mix_noise(const std::string& in_path, const std::string& noise_path,
                  double snr_db, uint64_t seed, const std::string& out_path) {
  Waveform clean = read_wav(in_path);
  Waveform noise = read_wav(noise_path);
  RngStream rng = derived_stream(seed, "mix", 0, 0);
  Waveform mix = mix_at_snr(clean, noise, snr_db, rng);
  write_wav(out_path, mix);

  std::vector<double> residual(mix.samples.size());
  for (size_t i = 0; i < residual.size(); i++) {
    residual[i] = mix.samples[i] - clean.samples[i];
  }
  double realized =
      10.0 * std::log10(signal_power(clean) / signal_power(residual));
  std::cout << std::setprecision(6) << std::fixed << "requested snr "
            << snr_db << " dB, realized " << realized << " dB\n";
  return 0;
}

// One synthetic pair through the full loss in soft-quantizer mode, gradients
// compared entry by entry against central differences. The batch is a single
// pair; every decision comes from streams derived from cfg.seed, so the
// closure is deterministic under in-place perturbation.
int cmd_grad_check(const TrainConfig& cfg, double eps, double threshold) {
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

  std::vector<std::pair<std::string, Tensor<double>*>> reg =
      named_params(model);
  std::vector<Tensor<double>> params = {x_o, x_n};
  std::vector<std::string> names = {"x_original", "x_noisy"};
  for (auto& kv : reg) {
    params.push_back(*kv.second);
    names.push_back(kv.first);
  }

  auto res = finite_difference_check<double>(fn, params, eps);
  std::cout << std::setprecision(6) << std::scientific
            << "max relative error " << res.max_rel_error << " at "
            << names[res.worst_param] << "[" << res.worst_index
            << "] (analytic " << res.worst_analytic << ", numeric "
            << res.worst_numeric << ")\n";
  if (res.max_rel_error < threshold) {
    std::cout << "gradient check passed (threshold "
              << std::setprecision(1) << threshold << ")\n";
    return 0;
  }
  std::cout << "gradient check FAILED (threshold " << std::setprecision(1)
            << threshold << ")\n";
  return 2;
}

int cmd_eval_loss(const TrainConfig& cfg, const std::string& ckpt_path) {
  if (cfg.valid_manifest.empty()) {
    throw std::invalid_argument("eval-loss: the config names no validation "
                                "manifest");
  }
  Trainer trainer(cfg);
  trainer.restore(load_checkpoint(ckpt_path));
  Dataset valid(cfg.valid_manifest);
  NoiseBank bank = load_noise_bank(cfg.noise_manifest);
  double loss = trainer.eval_loss(valid, bank);
  std::cout << std::setprecision(17) << "validation loss " << loss
            << " at step " << trainer.step() << "\n";
  return 0;
}

const char* dtype_label(DType d) {
  switch (d) {
    case DType::kFloat32: return "f32";
    case DType::kFloat64: return "f64";
    case DType::kUint64: return "u64";
  }
  return "?";
}

int cmd_inspect(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  std::cout << path << ": version " << ck.version << ", step " << ck.step
            << "\n";
  auto section = [](const char* name,
                    const std::vector<CheckpointTensor>& ts) {
    std::cout << name << " (" << ts.size() << " tensors)\n";
    for (const auto& t : ts) {
      std::cout << "  " << t.name << "  " << dtype_label(t.dtype) << " [";
      for (size_t i = 0; i < t.dims.size(); i++) {
        std::cout << (i ? ", " : "") << t.dims[i];
      }
      std::cout << "] " << t.numel() << " scalars\n";
    }
  };
  section("params", ck.params);
  section("opt", ck.opt);
  section("rng", ck.rng);
  section("meta", ck.meta);
  return 0;
}

int cmd_synth_data(const std::string& dir, int utts, int valid, int noise,
                   int64_t utt_samples, int64_t noise_samples, int rate,
                   uint64_t seed) {
  write_synth_corpus(dir, utts, valid, noise, utt_samples, noise_samples,
                     rate, seed);
  std::cout << "wrote " << utts << " utterances (" << valid
            << " held out) and " << noise << " noise clips under " << dir
            << "\n";
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Paired-noise contrastive pre-training for speech, desk "
               "scale"};
  app.require_subcommand(1);

  auto* pre = app.add_subcommand("pretrain", "Run pre-training");
  std::string pre_config, pre_resume;
  double pre_lr_scale = 1.0;
  bool pre_dump = false;
  int64_t pre_stop = 0;
  pre->add_option("--config", pre_config, "key = value config file");
  OverrideSet pre_ovr;
  bind_common_overrides(pre, pre_ovr);
  pre->add_option("--resume", pre_resume, "checkpoint to continue from");
  pre->add_option("--lr-scale", pre_lr_scale,
                  "multiplies the configured learning rate");
  pre->add_flag("--dump-decisions", pre_dump,
                "write per-half decision transcripts");
  pre->add_option("--stop-at-step", pre_stop,
                  "interrupt after this step without changing the schedule");

  auto* mix = app.add_subcommand("mix-noise",
                                 "Mix noise into a clean file at an exact "
                                 "SNR");
  std::string mix_in, mix_noise, mix_out;
  double mix_snr = 10.0;
  uint64_t mix_seed = 1;
  mix->add_option("--in", mix_in, "clean input wav")->required();
  mix->add_option("--noise", mix_noise, "noise wav")->required();
  mix->add_option("--snr", mix_snr, "target SNR in dB")->required();
  mix->add_option("--seed", mix_seed, "crop seed");
  mix->add_option("--out", mix_out, "output wav")->required();

  auto* gc = app.add_subcommand("grad-check",
                                "Compare tape gradients against central "
                                "differences on one synthetic pair");
  std::string gc_config;
  double gc_eps = 1e-5, gc_threshold = 1e-4;
  gc->add_option("--config", gc_config, "key = value config file");
  OverrideSet gc_ovr;
  bind_common_overrides(gc, gc_ovr);
  gc->add_option("--eps", gc_eps, "central-difference step");
  gc->add_option("--threshold", gc_threshold,
                 "largest acceptable relative error");

  auto* ev = app.add_subcommand("eval-loss",
                                "Deterministic validation loss of a "
                                "checkpoint");
  std::string ev_config, ev_ckpt;
  ev->add_option("--config", ev_config, "key = value config file");
  OverrideSet ev_ovr;
  bind_common_overrides(ev, ev_ovr);
  ev->add_option("--ckpt", ev_ckpt, "checkpoint to evaluate")->required();

  auto* ins = app.add_subcommand("inspect-checkpoint",
                                 "Print a checkpoint's sections and tensors");
  std::string ins_path;
  ins->add_option("path", ins_path, "checkpoint file")->required();

  auto* syn = app.add_subcommand("synth-data",
                                 "Write a synthetic tone/noise corpus with "
                                 "manifests");
  std::string syn_dir;
  int syn_utts = 40, syn_valid = 4, syn_noise = 8, syn_rate = 16000;
  int64_t syn_utt_samples = 48000, syn_noise_samples = 80000;
  uint64_t syn_seed = 1;
  syn->add_option("--out-dir", syn_dir, "corpus directory")->required();
  syn->add_option("--utts", syn_utts, "utterance count");
  syn->add_option("--valid", syn_valid, "held-out utterance count");
  syn->add_option("--noise", syn_noise, "noise clip count");
  syn->add_option("--utt-samples", syn_utt_samples, "samples per utterance");
  syn->add_option("--noise-samples", syn_noise_samples,
                  "samples per noise clip");
  syn->add_option("--rate", syn_rate, "sample rate");
  syn->add_option("--seed", syn_seed, "corpus seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (pre->parsed()) {
      return cmd_pretrain(resolve_config(pre_config, pre_ovr), pre_resume,
                          pre_lr_scale, pre_dump, pre_stop);
    }
    if (mix->parsed()) {
      return cmd_mix_noise(mix_in, mix_noise, mix_snr, mix_seed, mix_out);
    }
    if (gc->parsed()) {
      return cmd_grad_check(resolve_config(gc_config, gc_ovr), gc_eps,
                            gc_threshold);
    }
    if (ev->parsed()) {
      return cmd_eval_loss(resolve_config(ev_config, ev_ovr), ev_ckpt);
    }
    if (ins->parsed()) return cmd_inspect(ins_path);
    if (syn->parsed()) {
      return cmd_synth_data(syn_dir, syn_utts, syn_valid, syn_noise,
                            syn_utt_samples, syn_noise_samples, syn_rate,
                            syn_seed);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace
}  // namespace w2vs

int main(int argc, char** argv) { return w2vs::run(argc, argv); }
