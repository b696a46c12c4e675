// w2vs/encoder.h

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

// Feature encoder: a stack of strided valid-mode 1-D convolutions mapping a
// raw waveform batch (B, T) to latent frames (B, T', d). No dropout and no
// padding, so the map is deterministic and the length arithmetic is exact.

#ifndef W2VS_ENCODER_H_
#define W2VS_ENCODER_H_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "w2vs/rng.h"
#include "w2vs/tensor.h"

namespace w2vs {

struct ConvLayerSpec {
  int64_t channels = 0;
  int64_t kernel = 0;
  int64_t stride = 0;
};

enum class EncoderActivation { kGelu, kIdentity };

struct EncoderConfig {
  std::vector<ConvLayerSpec> layers;
  EncoderActivation activation = EncoderActivation::kGelu;
  // Group-norm groups applied after the first layer; 0 disables.
  int64_t norm_groups = 0;

  int64_t out_dim() const { return layers.back().channels; }
  int64_t total_stride() const {
    int64_t s = 1;
    for (const auto& l : layers) s *= l.stride;
    return s;
  }
};

inline void validate_encoder_config(const EncoderConfig& cfg) {
  if (cfg.layers.empty()) {
    throw std::invalid_argument("encoder config: no layers");
  }
  for (size_t i = 0; i < cfg.layers.size(); i++) {
    const auto& l = cfg.layers[i];
    if (l.channels < 1 || l.stride < 1 || l.kernel < l.stride) {
      throw std::invalid_argument(
          cat("encoder config: layer ", i, " (channels ", l.channels,
              ", kernel ", l.kernel, ", stride ", l.stride,
              ") violates kernel >= stride >= 1, channels >= 1"));
    }
  }
  if (cfg.norm_groups < 0 ||
      (cfg.norm_groups > 0 && cfg.layers[0].channels % cfg.norm_groups != 0)) {
    throw std::invalid_argument(cat("encoder config: ", cfg.norm_groups,
                                    " norm groups do not divide ",
                                    cfg.layers[0].channels, " channels"));
  }
}

// Smallest T that yields at least one output frame from every layer.
inline int64_t min_input_length(const EncoderConfig& cfg) {
  int64_t need = 1;
  for (size_t i = cfg.layers.size(); i-- > 0;) {
    need = (need - 1) * cfg.layers[i].stride + cfg.layers[i].kernel;
  }
  return need;
}

// Applies L <- floor((L - kernel) / stride) + 1 per layer, in order.
inline int64_t output_length(int64_t t, const EncoderConfig& cfg) {
  validate_encoder_config(cfg);
  int64_t need = min_input_length(cfg);
  if (t < need) {
    throw std::domain_error(cat("output_length: input length ", t,
                                " is below the minimum ", need,
                                " for this stack"));
  }
  int64_t l = t;
  for (const auto& layer : cfg.layers) {
    l = (l - layer.kernel) / layer.stride + 1;
  }
  return l;
}

template <typename Real>
struct EncoderParams {
  std::vector<Tensor<Real>> w;  // (C_out, C_in, kernel)
  std::vector<Tensor<Real>> b;  // (C_out)
  Tensor<Real> norm_gamma;      // (C_1), only when norm_groups > 0
  Tensor<Real> norm_beta;
};

template <typename Real>
EncoderParams<Real> init_encoder(const EncoderConfig& cfg, RngStream& rng) {
  validate_encoder_config(cfg);
  EncoderParams<Real> p;
  int64_t c_in = 1;
  for (const auto& l : cfg.layers) {
    int64_t fan_in = c_in * l.kernel, fan_out = l.channels * l.kernel;
    double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    std::vector<Real> wv(size_t(l.channels * c_in * l.kernel));
    for (auto& v : wv) v = Real(rng.uniform(-bound, bound));
    p.w.push_back(Tensor<Real>::param({l.channels, c_in, l.kernel},
                                      std::move(wv)));
    p.b.push_back(Tensor<Real>::param(
        {l.channels}, std::vector<Real>(size_t(l.channels), Real(0))));
    c_in = l.channels;
  }
  if (cfg.norm_groups > 0) {
    int64_t c1 = cfg.layers[0].channels;
    p.norm_gamma = Tensor<Real>::param(
        {c1}, std::vector<Real>(size_t(c1), Real(1)));
    p.norm_beta = Tensor<Real>::param(
        {c1}, std::vector<Real>(size_t(c1), Real(0)));
  }
  return p;
}

// (B, T) -> (B, T', d). Group norm (when configured) follows the first
// convolution; the activation follows every layer.
template <typename Real>
Tensor<Real> encode(const Tensor<Real>& x, const EncoderConfig& cfg,
                    const EncoderParams<Real>& p) {
  validate_encoder_config(cfg);
  if (x.rank() != 2) {
    throw std::invalid_argument(cat("encode: input shape ",
                                    shape_str(x.shape()),
                                    "; expected (batch, samples)"));
  }
  output_length(x.dim(1), cfg);  // surfaces the minimum-length error
  if (p.w.size() != cfg.layers.size()) {
    throw std::invalid_argument(cat("encode: ", p.w.size(),
                                    " weight tensors for ", cfg.layers.size(),
                                    " layers"));
  }
  Tensor<Real> h = reshape(x, {x.dim(0), 1, x.dim(1)});
  for (size_t i = 0; i < cfg.layers.size(); i++) {
    h = conv1d(h, p.w[i], p.b[i], cfg.layers[i].stride, 0, 1);
    if (i == 0 && cfg.norm_groups > 0) {
      h = group_norm(h, cfg.norm_groups, p.norm_gamma, p.norm_beta);
    }
    if (cfg.activation == EncoderActivation::kGelu) h = gelu(h);
  }
  return permute(h, {0, 2, 1});
}

}  // namespace w2vs

#endif  // W2VS_ENCODER_H_
