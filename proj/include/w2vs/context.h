// w2vs/context.h

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

// Context network: replaces masked latent frames with a learned embedding,
// adds a convolutional positional embedding, then runs pre-norm transformer
// blocks. All dropout masks arrive pre-drawn from the caller so that the two
// halves of a pair can consume identical randomness.

#ifndef W2VS_CONTEXT_H_
#define W2VS_CONTEXT_H_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "w2vs/mask.h"
#include "w2vs/rng.h"
#include "w2vs/tensor.h"

namespace w2vs {

struct ContextConfig {
  int64_t blocks = 2;
  int64_t model_dim = 64;
  int64_t heads = 4;
  int64_t ffn_dim = 256;
  double dropout_p = 0.1;
  int64_t pos_kernel = 9;  // odd, so symmetric padding preserves length
  int64_t pos_groups = 4;
};

inline void validate_context_config(const ContextConfig& c) {
  if (c.blocks < 1 || c.model_dim < 1 || c.heads < 1 || c.ffn_dim < 1 ||
      c.model_dim % c.heads != 0) {
    throw std::invalid_argument(cat("context config: blocks ", c.blocks,
                                    ", model_dim ", c.model_dim, ", heads ",
                                    c.heads, " (heads must divide model_dim)"));
  }
  if (c.pos_kernel < 1 || c.pos_kernel % 2 == 0 || c.pos_groups < 1 ||
      c.model_dim % c.pos_groups != 0) {
    throw std::invalid_argument(
        cat("context config: positional kernel ", c.pos_kernel,
            " must be odd and groups ", c.pos_groups, " must divide ",
            c.model_dim));
  }
  if (!(c.dropout_p >= 0.0 && c.dropout_p < 1.0)) {
    throw std::invalid_argument(cat("context config: dropout ", c.dropout_p,
                                    " outside [0, 1)"));
  }
}

template <typename Real>
struct BlockParams {
  Tensor<Real> ln1_g, ln1_b;
  // Fused (D, 3D) projection for q, k, v. It carries no bias: a key offset
  // cancels inside the row-wise softmax, so a fused bias would hold
  // parameters the loss can never see.
  Tensor<Real> qkv_w;
  Tensor<Real> attn_out_w, attn_out_b;
  Tensor<Real> ln2_g, ln2_b;
  Tensor<Real> ffn1_w, ffn1_b;
  Tensor<Real> ffn2_w, ffn2_b;
};

template <typename Real>
struct ContextParams {
  Tensor<Real> mask_embedding;  // (D)
  Tensor<Real> pos_w, pos_b;    // conv (D, D/groups, kernel)
  std::vector<BlockParams<Real>> blocks;
  Tensor<Real> final_g, final_b;
};

namespace detail {

template <typename Real>
Tensor<Real> xavier(const Shape& s, int64_t fan_in, int64_t fan_out,
                    RngStream& rng) {
  double bound = std::sqrt(6.0 / double(fan_in + fan_out));
  std::vector<Real> v(size_t(numel_of(s)));
  for (auto& x : v) x = Real(rng.uniform(-bound, bound));
  return Tensor<Real>::param(s, std::move(v));
}

template <typename Real>
Tensor<Real> const_param(const Shape& s, Real value) {
  return Tensor<Real>::param(
      s, std::vector<Real>(size_t(numel_of(s)), value));
}

}  // namespace detail

template <typename Real>
ContextParams<Real> init_context(const ContextConfig& c, RngStream& rng) {
  validate_context_config(c);
  int64_t d = c.model_dim;
  ContextParams<Real> p;
  {
    std::vector<Real> me(static_cast<size_t>(d));
    for (auto& x : me) x = Real(rng.normal() * 0.1);
    p.mask_embedding = Tensor<Real>::param({d}, std::move(me));
  }
  int64_t dg = d / c.pos_groups;
  p.pos_w = detail::xavier<Real>({d, dg, c.pos_kernel}, dg * c.pos_kernel,
                                 dg * c.pos_kernel, rng);
  p.pos_b = detail::const_param<Real>({d}, Real(0));
  for (int64_t i = 0; i < c.blocks; i++) {
    BlockParams<Real> blk;
    blk.ln1_g = detail::const_param<Real>({d}, Real(1));
    blk.ln1_b = detail::const_param<Real>({d}, Real(0));
    blk.qkv_w = detail::xavier<Real>({d, 3 * d}, d, 3 * d, rng);
    blk.attn_out_w = detail::xavier<Real>({d, d}, d, d, rng);
    blk.attn_out_b = detail::const_param<Real>({d}, Real(0));
    blk.ln2_g = detail::const_param<Real>({d}, Real(1));
    blk.ln2_b = detail::const_param<Real>({d}, Real(0));
    blk.ffn1_w = detail::xavier<Real>({d, c.ffn_dim}, d, c.ffn_dim, rng);
    blk.ffn1_b = detail::const_param<Real>({c.ffn_dim}, Real(0));
    blk.ffn2_w = detail::xavier<Real>({c.ffn_dim, d}, c.ffn_dim, d, rng);
    blk.ffn2_b = detail::const_param<Real>({d}, Real(0));
    p.blocks.push_back(std::move(blk));
  }
  p.final_g = detail::const_param<Real>({d}, Real(1));
  p.final_b = detail::const_param<Real>({d}, Real(0));
  return p;
}

// Pre-drawn Bernoulli keep masks; empty (no tensors) when dropout is off.
// Draw order is fixed: input first, then attention and FFN per block.
template <typename Real>
struct DropoutMasks {
  std::vector<Tensor<Real>> masks;
};

template <typename Real>
DropoutMasks<Real> draw_dropout_masks(const ContextConfig& c, int64_t batch,
                                      int64_t t_frames, RngStream& rng) {
  validate_context_config(c);
  DropoutMasks<Real> m;
  if (c.dropout_p == 0.0) return m;
  int64_t count = 1 + 2 * c.blocks;
  for (int64_t i = 0; i < count; i++) {
    std::vector<Real> v(size_t(batch * t_frames * c.model_dim));
    for (auto& x : v) {
      x = rng.next_double() < c.dropout_p ? Real(0) : Real(1);
    }
    m.masks.push_back(Tensor<Real>::from_data({batch, t_frames, c.model_dim},
                                              std::move(v)));
  }
  return m;
}

// Replaces the frames listed in `spec` by the learned embedding, leaving all
// other frames untouched.
template <typename Real>
Tensor<Real> apply_mask(const Tensor<Real>& z, const MaskSpec& spec,
                        const Tensor<Real>& mask_embedding) {
  if (z.rank() != 3) {
    throw std::invalid_argument(cat("apply_mask: input shape ",
                                    shape_str(z.shape())));
  }
  int64_t b = z.dim(0), t = z.dim(1), d = z.dim(2);
  if (spec.batch() != b) {
    throw std::invalid_argument(cat("apply_mask: mask batch ", spec.batch(),
                                    " vs input batch ", b));
  }
  if (mask_embedding.shape() != Shape{d}) {
    throw std::invalid_argument(cat("apply_mask: embedding shape ",
                                    shape_str(mask_embedding.shape()),
                                    "; expected (", d, ")"));
  }
  std::vector<Real> sel(size_t(b * t), Real(0));
  for (int64_t bi = 0; bi < b; bi++) {
    for (int64_t ti : spec.idx[size_t(bi)]) {
      if (ti < 0 || ti >= t) {
        throw std::invalid_argument(cat("apply_mask: index ", ti,
                                        " out of range [0, ", t, ")"));
      }
      sel[size_t(bi * t + ti)] = Real(1);
    }
  }
  auto m = expand(reshape(Tensor<Real>::from_data({b, t}, sel), {b, t, 1}),
                  {b, t, d});
  auto keep = add_scalar(mul_scalar(m, Real(-1)), Real(1));  // 1 - m
  auto emb = expand(reshape(mask_embedding, {1, 1, d}), {b, t, d});
  return add(mul(z, keep), mul(emb, m));
}

// Optional probe: filled with each block's attention distributions.
template <typename Real>
struct ContextCapture {
  std::vector<Tensor<Real>> attn_probs;  // per block, (B*H, T', T')
};

template <typename Real>
Tensor<Real> contextualize(
    const Tensor<Real>& x, const ContextConfig& c,
    const ContextParams<Real>& p,
    std::type_identity_t<const DropoutMasks<Real>*> drop,
    std::type_identity_t<ContextCapture<Real>*> capture = nullptr) {
  validate_context_config(c);
  if (x.rank() != 3 || x.dim(2) != c.model_dim) {
    throw std::invalid_argument(cat("contextualize: input shape ",
                                    shape_str(x.shape()), "; expected (B, T', ",
                                    c.model_dim, ")"));
  }
  if (drop != nullptr && !drop->masks.empty() &&
      int64_t(drop->masks.size()) != 1 + 2 * c.blocks) {
    throw std::invalid_argument(cat("contextualize: ", drop->masks.size(),
                                    " dropout masks for ", 1 + 2 * c.blocks,
                                    " sites"));
  }
  int64_t b = x.dim(0), t = x.dim(1), d = c.model_dim;
  int64_t h = c.heads, hd = d / h;
  Real drop_p = Real(c.dropout_p);
  bool use_drop = drop != nullptr && !drop->masks.empty();
  size_t site = 0;
  auto dropped = [&](const Tensor<Real>& v) {
    if (!use_drop) return v;
    return dropout(v, drop->masks[site++], drop_p);
  };

  // Convolutional positional embedding, residual.
  auto pos = conv1d(permute(x, {0, 2, 1}), p.pos_w, p.pos_b, 1,
                    (c.pos_kernel - 1) / 2, c.pos_groups);
  auto hcur = dropped(add(x, permute(gelu(pos), {0, 2, 1})));

  for (const auto& blk : p.blocks) {
    auto a = layer_norm(hcur, blk.ln1_g, blk.ln1_b);
    auto qkv = reshape(matmul(reshape(a, {b * t, d}), blk.qkv_w),
                       {b, t, 3 * d});
    auto split_heads = [&](int64_t off) {
      auto part = slice(qkv, 2, off, d);
      return reshape(permute(reshape(part, {b, t, h, hd}), {0, 2, 1, 3}),
                     {b * h, t, hd});
    };
    auto q = split_heads(0);
    auto k = split_heads(d);
    auto v = split_heads(2 * d);
    auto scores = mul_scalar(bmm(q, permute(k, {0, 2, 1})),
                             Real(1.0 / std::sqrt(double(hd))));
    auto attn = softmax(scores);  // (B*H, T, T)
    if (capture != nullptr) capture->attn_probs.push_back(attn);
    auto ctx = reshape(permute(reshape(bmm(attn, v), {b, h, t, hd}),
                               {0, 2, 1, 3}),
                       {b, t, d});
    auto attn_out = dropped(linear(ctx, blk.attn_out_w, blk.attn_out_b));
    hcur = add(hcur, attn_out);

    auto f = layer_norm(hcur, blk.ln2_g, blk.ln2_b);
    f = linear(gelu(linear(f, blk.ffn1_w, blk.ffn1_b)), blk.ffn2_w,
               blk.ffn2_b);
    hcur = add(hcur, dropped(f));
  }
  return layer_norm(hcur, p.final_g, p.final_b);
}

}  // namespace w2vs

#endif  // W2VS_CONTEXT_H_
