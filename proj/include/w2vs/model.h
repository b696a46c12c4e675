// w2vs/model.h

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

// The assembled pre-training model: waveform -> latent frames -> (quantized
// targets, masked contextual vectors). Every random decision a forward pass
// consumes is drawn up front into HalfDecisions, so the two halves of a pair
// can share decisions exactly, family by family.

#ifndef W2VS_MODEL_H_
#define W2VS_MODEL_H_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "w2vs/common.h"
#include "w2vs/context.h"
#include "w2vs/encoder.h"
#include "w2vs/losses.h"
#include "w2vs/mask.h"
#include "w2vs/quantizer.h"
#include "w2vs/rng.h"
#include "w2vs/tensor.h"

namespace w2vs {

struct ModelConfig {
  EncoderConfig encoder;
  QuantizerShape quantizer;
  ContextConfig context;
  TauSchedule tau;
  double mask_p_start = 0.2;
  int64_t mask_span = 3;
};

inline ModelConfig desk_model_config() {
  ModelConfig m;
  m.encoder.layers = {{64, 10, 5}, {64, 8, 4}, {64, 4, 2}};
  m.encoder.activation = EncoderActivation::kGelu;
  m.encoder.norm_groups = 16;
  return m;  // quantizer, context and tau defaults already fit 64 wide
}

inline void validate_model_config(const ModelConfig& m) {
  validate_encoder_config(m.encoder);
  validate_quantizer_shape(m.quantizer);
  validate_context_config(m.context);
  if (m.encoder.out_dim() != m.context.model_dim) {
    throw std::invalid_argument(cat("model config: encoder emits ",
                                    m.encoder.out_dim(),
                                    " channels but the context network takes ",
                                    m.context.model_dim));
  }
  if (m.quantizer.out_dim != m.context.model_dim) {
    throw std::invalid_argument(
        cat("model config: quantizer emits ", m.quantizer.out_dim,
            " dims but contrastive targets must match the context width ",
            m.context.model_dim));
  }
  if (!(m.mask_p_start >= 0.0 && m.mask_p_start <= 1.0) || m.mask_span < 1) {
    throw std::invalid_argument(cat("model config: mask p_start ",
                                    m.mask_p_start, ", span ", m.mask_span));
  }
}

template <typename Real>
struct PretrainModel {
  ModelConfig cfg;
  EncoderParams<Real> encoder;
  QuantizerParams<Real> quantizer;
  ContextParams<Real> context;
};

template <typename Real>
PretrainModel<Real> init_model(const ModelConfig& cfg, RngStream& rng) {
  validate_model_config(cfg);
  PretrainModel<Real> m;
  m.cfg = cfg;
  m.encoder = init_encoder<Real>(cfg.encoder, rng);
  m.quantizer = init_quantizer<Real>(cfg.quantizer, cfg.encoder.out_dim(),
                                     rng);
  m.context = init_context<Real>(cfg.context, rng);
  return m;
}

// Canonical (name, tensor) listing in a fixed order; checkpoints and the
// optimizer both iterate this.
template <typename Real>
std::vector<std::pair<std::string, Tensor<Real>*>> named_params(
    PretrainModel<Real>& m) {
  std::vector<std::pair<std::string, Tensor<Real>*>> out;
  for (size_t i = 0; i < m.encoder.w.size(); i++) {
    out.emplace_back(cat("encoder.conv", i, ".w"), &m.encoder.w[i]);
    out.emplace_back(cat("encoder.conv", i, ".b"), &m.encoder.b[i]);
  }
  if (m.cfg.encoder.norm_groups > 0) {
    out.emplace_back("encoder.norm.gamma", &m.encoder.norm_gamma);
    out.emplace_back("encoder.norm.beta", &m.encoder.norm_beta);
  }
  out.emplace_back("quantizer.logits.w", &m.quantizer.logits_w);
  out.emplace_back("quantizer.logits.b", &m.quantizer.logits_b);
  out.emplace_back("quantizer.entries", &m.quantizer.entries);
  out.emplace_back("quantizer.out.w", &m.quantizer.out_w);
  out.emplace_back("quantizer.out.b", &m.quantizer.out_b);
  out.emplace_back("context.mask_embedding", &m.context.mask_embedding);
  out.emplace_back("context.pos.w", &m.context.pos_w);
  out.emplace_back("context.pos.b", &m.context.pos_b);
  for (size_t i = 0; i < m.context.blocks.size(); i++) {
    auto& b = m.context.blocks[i];
    auto name = [&](const char* leaf) { return cat("context.block", i, ".",
                                                   leaf); };
    out.emplace_back(name("ln1.g"), &b.ln1_g);
    out.emplace_back(name("ln1.b"), &b.ln1_b);
    out.emplace_back(name("qkv.w"), &b.qkv_w);
    out.emplace_back(name("attn_out.w"), &b.attn_out_w);
    out.emplace_back(name("attn_out.b"), &b.attn_out_b);
    out.emplace_back(name("ln2.g"), &b.ln2_g);
    out.emplace_back(name("ln2.b"), &b.ln2_b);
    out.emplace_back(name("ffn1.w"), &b.ffn1_w);
    out.emplace_back(name("ffn1.b"), &b.ffn1_b);
    out.emplace_back(name("ffn2.w"), &b.ffn2_w);
    out.emplace_back(name("ffn2.b"), &b.ffn2_b);
  }
  out.emplace_back("context.final.g", &m.context.final_g);
  out.emplace_back("context.final.b", &m.context.final_b);
  return out;
}

// Every stochastic choice one half consumes, in the fixed draw order
// masks -> dropout -> gumbel -> distractors. Drawing through a StreamSet
// under paired_forward makes any subset of these identical across halves.
template <typename Real>
struct HalfDecisions {
  MaskSpec spec;
  DropoutMasks<Real> dropout;
  Tensor<Real> gumbel;  // (B, T', G, V)
  DistractorSet distractors;
};

// `forced_counts`, when given, pins each example's masked count (used by the
// noisy half when mask pairing is off, so the switched terms stay aligned).
template <typename Real>
HalfDecisions<Real> draw_decisions(const ModelConfig& cfg, int64_t batch,
                                   int64_t t_frames, int64_t distractors,
                                   StreamSet& streams,
                                   const std::vector<int64_t>* forced_counts =
                                       nullptr) {
  HalfDecisions<Real> d;
  if (forced_counts != nullptr) {
    if (int64_t(forced_counts->size()) != batch) {
      throw std::invalid_argument(cat("draw_decisions: ",
                                      forced_counts->size(),
                                      " forced counts for batch ", batch));
    }
    d.spec = sample_masks_with_counts(t_frames, cfg.mask_p_start,
                                      cfg.mask_span, *forced_counts,
                                      streams.stream(Family::kMaskPositions));
  } else {
    d.spec = sample_masks(batch, t_frames, cfg.mask_p_start, cfg.mask_span,
                          streams.stream(Family::kMaskPositions));
  }
  // Contrastive targets need at least two masked frames per example. A lone
  // survivor gets a deterministic neighbor added, so pair replay stays exact
  // (no extra stream draws) and distractor sampling never runs dry.
  if (t_frames < 2) {
    throw std::invalid_argument(cat("draw_decisions: ", t_frames,
                                    " frames; need at least 2"));
  }
  for (auto& row : d.spec.idx) {
    if (row.size() == 1) {
      int64_t t0 = row[0];
      if (t0 > 0) {
        row.insert(row.begin(), t0 - 1);
      } else {
        row.push_back(t0 + 1);
      }
    }
  }
  d.dropout = draw_dropout_masks<Real>(cfg.context, batch, t_frames,
                                       streams.stream(Family::kDropoutMasks));
  d.gumbel = draw_gumbel_noise<Real>(batch, t_frames, cfg.quantizer,
                                     streams.stream(Family::kGumbelNoise));
  d.distractors = sample_distractors(d.spec, distractors,
                                     streams.stream(Family::kDistractors));
  return d;
}

template <typename Real>
struct HalfOutputs {
  Tensor<Real> c;           // (B, T', model_dim) contextual vectors
  QuantizeResult<Real> q;   // targets built from the unmasked latents
};

// One half's pure forward pass: encode, quantize the unmasked latents, mask,
// contextualize. All randomness comes in through `d`.
template <typename Real>
HalfOutputs<Real> forward_half(PretrainModel<Real>& m, const Tensor<Real>& x,
                               const HalfDecisions<Real>& d, Real tau,
                               bool hard) {
  validate_model_config(m.cfg);
  auto z = encode(x, m.cfg.encoder, m.encoder);
  HalfOutputs<Real> out;
  out.q = quantize(z, m.quantizer, m.cfg.quantizer, tau, d.gumbel, hard);
  auto masked = apply_mask(z, d.spec, m.context.mask_embedding);
  out.c = contextualize(masked, m.cfg.context, m.context, &d.dropout);
  return out;
}

}  // namespace w2vs

#endif  // W2VS_MODEL_H_
