// w2vs/quantizer.h

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

// Product quantizer: per frame, G independent codebooks of V entries each.
// Selection is Gumbel-softmax with straight-through hard choice by default;
// all Gumbel noise arrives from the caller so paired halves can share it.

#ifndef W2VS_QUANTIZER_H_
#define W2VS_QUANTIZER_H_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "w2vs/mask.h"
#include "w2vs/rng.h"
#include "w2vs/tensor.h"

namespace w2vs {

struct QuantizerShape {
  int64_t groups = 2;     // G
  int64_t entries = 40;   // V per group
  int64_t code_dim = 64;  // e; concatenated codeword width, e/G per group
  int64_t out_dim = 64;   // d_q after the output projection
};

inline void validate_quantizer_shape(const QuantizerShape& s) {
  if (s.groups < 1 || s.entries < 2 || s.code_dim < 1 || s.out_dim < 1 ||
      s.code_dim % s.groups != 0) {
    throw std::invalid_argument(
        cat("quantizer shape: groups ", s.groups, ", entries ", s.entries,
            ", code_dim ", s.code_dim, ", out_dim ", s.out_dim,
            " (need entries >= 2 and groups dividing code_dim)"));
  }
}

struct TauSchedule {
  double tau0 = 2.0;
  double tau_min = 0.5;
  double decay = 0.999;
};

// tau = max(tau_min, tau0 * decay^step).
inline double anneal_tau(int64_t step, const TauSchedule& s) {
  if (!(s.tau0 >= s.tau_min && s.tau_min > 0 && s.decay > 0 && s.decay <= 1)) {
    throw std::invalid_argument(cat("tau schedule: tau0 ", s.tau0, ", tau_min ",
                                    s.tau_min, ", decay ", s.decay));
  }
  if (step < 0) throw std::invalid_argument("anneal_tau: negative step");
  return std::max(s.tau_min, s.tau0 * std::pow(s.decay, double(step)));
}

template <typename Real>
struct QuantizerParams {
  Tensor<Real> logits_w;  // (d_in, G*V)
  Tensor<Real> logits_b;  // (G*V)
  Tensor<Real> entries;   // (G, V, e/G)
  Tensor<Real> out_w;     // (e, d_q)
  Tensor<Real> out_b;     // (d_q)
};

template <typename Real>
QuantizerParams<Real> init_quantizer(const QuantizerShape& s, int64_t in_dim,
                                     RngStream& rng) {
  validate_quantizer_shape(s);
  QuantizerParams<Real> p;
  int64_t gv = s.groups * s.entries;
  double bound = std::sqrt(6.0 / double(in_dim + gv));
  std::vector<Real> lw(size_t(in_dim * gv));
  for (auto& v : lw) v = Real(rng.uniform(-bound, bound));
  p.logits_w = Tensor<Real>::param({in_dim, gv}, std::move(lw));
  p.logits_b =
      Tensor<Real>::param({gv}, std::vector<Real>(size_t(gv), Real(0)));

  int64_t eg = s.code_dim / s.groups;
  std::vector<Real> ev(size_t(s.groups * s.entries * eg));
  for (auto& v : ev) v = Real(rng.normal());
  p.entries = Tensor<Real>::param({s.groups, s.entries, eg}, std::move(ev));

  double ob = std::sqrt(6.0 / double(s.code_dim + s.out_dim));
  std::vector<Real> ow(size_t(s.code_dim * s.out_dim));
  for (auto& v : ow) v = Real(rng.uniform(-ob, ob));
  p.out_w = Tensor<Real>::param({s.code_dim, s.out_dim}, std::move(ow));
  p.out_b = Tensor<Real>::param(
      {s.out_dim}, std::vector<Real>(size_t(s.out_dim), Real(0)));
  return p;
}

// Gumbel noise for one quantizer call, shape (B, T', G, V), drawn from the
// gumbel decision stream.
template <typename Real>
Tensor<Real> draw_gumbel_noise(int64_t batch, int64_t t_frames,
                               const QuantizerShape& s, RngStream& rng) {
  std::vector<Real> v(size_t(batch * t_frames * s.groups * s.entries));
  for (auto& x : v) x = Real(rng.gumbel());
  return Tensor<Real>::from_data({batch, t_frames, s.groups, s.entries},
                                 std::move(v));
}

template <typename Real>
struct QuantizeResult {
  Tensor<Real> q;                // (B, T', d_q)
  Tensor<Real> probs;            // (B, T', G, V) soft selection probabilities
  std::vector<int64_t> indices;  // (B * T' * G), chosen entry per group
};

template <typename Real>
QuantizeResult<Real> quantize(const Tensor<Real>& z,
                              const QuantizerParams<Real>& p,
                              const QuantizerShape& s, Real tau,
                              const Tensor<Real>& gumbel_noise, bool hard) {
  validate_quantizer_shape(s);
  if (z.rank() != 3) {
    throw std::invalid_argument(cat("quantize: input shape ",
                                    shape_str(z.shape()),
                                    "; expected (B, frames, dim)"));
  }
  int64_t b = z.dim(0), t = z.dim(1);
  Shape noise_shape{b, t, s.groups, s.entries};
  if (gumbel_noise.shape() != noise_shape) {
    throw std::invalid_argument(cat("quantize: noise shape ",
                                    shape_str(gumbel_noise.shape()),
                                    "; expected ", shape_str(noise_shape)));
  }
  int64_t rows = b * t * s.groups;
  int64_t eg = s.code_dim / s.groups;

  auto logits = linear(reshape(z, {b * t, z.dim(2)}), p.logits_w, p.logits_b);
  auto sel = gumbel_softmax_st(reshape(logits, {rows, s.entries}), tau,
                               reshape(gumbel_noise, {rows, s.entries}), hard);

  // (B*T', G, V) -> (G, B*T', V) so each group multiplies its own codebook.
  auto by_group = permute(reshape(sel.one_hot, {b * t, s.groups, s.entries}),
                          {1, 0, 2});
  auto words = bmm(by_group, p.entries);            // (G, B*T', e/G)
  auto stacked = permute(words, {1, 0, 2});         // (B*T', G, e/G)
  auto code = reshape(stacked, {b * t, s.groups * eg});
  auto q = linear(code, p.out_w, p.out_b);

  QuantizeResult<Real> res;
  res.q = reshape(q, {b, t, s.out_dim});
  res.probs = reshape(sel.soft, {b, t, s.groups, s.entries});
  res.indices = argmax_last(sel.one_hot);
  return res;
}

// Per-group perplexity of the batch-averaged soft selection over masked
// frames, from forward values only (no tape). V means uniform usage of a
// group's entries, 1 means collapse onto a single entry.
template <typename Real>
std::vector<double> codebook_perplexities(const Tensor<Real>& probs,
                                          const MaskSpec& spec) {
  if (probs.rank() != 4) {
    throw std::invalid_argument(cat("codebook_perplexities: probs shape ",
                                    shape_str(probs.shape()),
                                    "; expected (B, frames, G, V)"));
  }
  int64_t b = probs.dim(0), t = probs.dim(1), g = probs.dim(2),
          v = probs.dim(3);
  if (spec.batch() != b) {
    throw std::invalid_argument(cat("codebook_perplexities: mask batch ",
                                    spec.batch(), " vs probs batch ", b));
  }
  auto rows = spec.flat_rows(t);
  if (rows.empty()) {
    throw std::invalid_argument("codebook_perplexities: no masked frames");
  }
  const auto& pd = *probs.data_ptr();
  std::vector<double> out;
  for (int64_t gi = 0; gi < g; gi++) {
    double entropy = 0;
    for (int64_t vi = 0; vi < v; vi++) {
      double mean = 0;
      for (int64_t r : rows) {
        mean += double(pd[size_t((r * g + gi) * v + vi)]);
      }
      mean /= double(rows.size());
      if (mean > 0) entropy -= mean * std::log(mean);
    }
    out.push_back(std::exp(entropy));
  }
  return out;
}

// Negative mean perplexity of the soft selection, averaged over masked
// frames and normalized so the range is [-1, -1/V]: uniform usage of every
// group scores -1, collapse to single entries scores -1/V.
template <typename Real>
Tensor<Real> diversity_loss(const Tensor<Real>& probs, const MaskSpec& spec) {
  if (probs.rank() != 4) {
    throw std::invalid_argument(cat("diversity_loss: probs shape ",
                                    shape_str(probs.shape()),
                                    "; expected (B, frames, G, V)"));
  }
  int64_t b = probs.dim(0), t = probs.dim(1), g = probs.dim(2),
          v = probs.dim(3);
  if (spec.batch() != b) {
    throw std::invalid_argument(cat("diversity_loss: mask batch ",
                                    spec.batch(), " vs probs batch ", b));
  }
  auto rows = spec.flat_rows(t);
  if (rows.empty()) {
    throw std::invalid_argument("diversity_loss: no masked frames");
  }
  auto flat = reshape(probs, {b * t, g * v});
  auto masked = gather_rows(flat, rows);          // (N, G*V)
  auto pbar = mean_axis0(masked);                 // (G*V)
  auto ent = sum_last(reshape(entropy_term(pbar), {g, v}));  // (G)
  auto ppl = exp(ent);
  return mul_scalar(sum_all(ppl), Real(-1) / Real(g * v));
}

}  // namespace w2vs

#endif  // W2VS_QUANTIZER_H_
