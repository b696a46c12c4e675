// w2vs/losses.h

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

// Contrastive training losses over paired halves. Anchors are contextual
// vectors at masked frames; targets are quantized vectors at the matching
// frames, and distractors come from OTHER masked frames of the same example.
// Distractor choices are stored as ordinals into each example's masked list,
// so one draw can address both halves even when their mask indices differ.

#ifndef W2VS_LOSSES_H_
#define W2VS_LOSSES_H_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "w2vs/mask.h"
#include "w2vs/rng.h"
#include "w2vs/tensor.h"

namespace w2vs {

struct ContrastiveConfig {
  int64_t distractors = 10;  // K
  double kappa = 0.1;        // similarity temperature dividing the cosine
  // When on, the positive similarity joins the denominator sum, which
  // bounds the loss below by zero. When off, the denominator runs over the
  // distractors alone.
  bool include_positive = true;
};

inline void validate_contrastive_config(const ContrastiveConfig& cfg) {
  if (cfg.distractors < 1 || !(cfg.kappa > 0)) {
    throw std::invalid_argument(cat("contrastive config: K = ",
                                    cfg.distractors, ", kappa = ", cfg.kappa,
                                    " (need K >= 1 and kappa > 0)"));
  }
}

// For each example and each masked-position ordinal a, K ordinals into the
// same example's masked list, never equal to a.
struct DistractorSet {
  std::vector<std::vector<std::vector<int64_t>>> ords;

  bool operator==(const DistractorSet&) const = default;
};

// Uniform draws from the other masked ordinals of the same example: without
// replacement while K candidates exist, with replacement otherwise. The
// iteration order (example, then anchor) is fixed so paired halves that
// share the stream replay the same choices.
inline DistractorSet sample_distractors(const MaskSpec& spec, int64_t k,
                                        RngStream& rng) {
  if (k < 1) throw std::invalid_argument(cat("sample_distractors: K = ", k));
  DistractorSet ds;
  for (size_t e = 0; e < spec.idx.size(); e++) {
    int64_t n = int64_t(spec.idx[e].size());
    if (n < 2) {
      throw std::domain_error(
          cat("sample_distractors: example ", e, " has ", n,
              " masked position(s); contrastive targets need at least 2, "
              "raise the mask rate or span"));
    }
    std::vector<std::vector<int64_t>> per_anchor;
    for (int64_t a = 0; a < n; a++) {
      std::vector<int64_t> cand;
      cand.reserve(size_t(n - 1));
      for (int64_t o = 0; o < n; o++) {
        if (o != a) cand.push_back(o);
      }
      std::vector<int64_t> picks;
      if (int64_t(cand.size()) >= k) {
        for (int64_t j = 0; j < k; j++) {
          size_t remaining = cand.size() - size_t(j);
          size_t pick = size_t(j) + size_t(rng.next_below(uint64_t(remaining)));
          std::swap(cand[size_t(j)], cand[pick]);
          picks.push_back(cand[size_t(j)]);
        }
      } else {
        for (int64_t j = 0; j < k; j++) {
          picks.push_back(cand[size_t(rng.next_below(uint64_t(cand.size())))]);
        }
      }
      per_anchor.push_back(std::move(picks));
    }
    ds.ords.push_back(std::move(per_anchor));
  }
  return ds;
}

// Forward-value diagnostics: how often the positive outranks every
// distractor.
struct ContrastiveStats {
  int64_t top1_correct = 0;
  int64_t anchors = 0;
};

namespace detail {

inline void check_distractors(const MaskSpec& spec, const DistractorSet& ds,
                              int64_t k) {
  if (ds.ords.size() != spec.idx.size()) {
    throw std::invalid_argument(cat("distractor set covers ", ds.ords.size(),
                                    " examples; mask has ", spec.idx.size()));
  }
  for (size_t e = 0; e < ds.ords.size(); e++) {
    int64_t n = int64_t(spec.idx[e].size());
    if (int64_t(ds.ords[e].size()) != n) {
      throw std::invalid_argument(cat("distractor set: example ", e, " has ",
                                      ds.ords[e].size(), " anchors for ", n,
                                      " masked positions"));
    }
    for (int64_t a = 0; a < n; a++) {
      const auto& picks = ds.ords[e][size_t(a)];
      if (int64_t(picks.size()) != k) {
        throw std::invalid_argument(cat("distractor set: example ", e,
                                        " anchor ", a, " has ", picks.size(),
                                        " picks; expected ", k));
      }
      for (int64_t o : picks) {
        if (o < 0 || o >= n || o == a) {
          throw std::invalid_argument(cat("distractor set: example ", e,
                                          " anchor ", a, " pick ", o,
                                          " invalid for ", n,
                                          " masked positions"));
        }
      }
    }
  }
}

// Shared core: anchors live at anchor_spec's masked frames of c, targets at
// target_spec's frames of q, aligned by ordinal. The two specs coincide for
// own-target terms and differ only when mask pairing is off.
template <typename Real>
Tensor<Real> contrastive_term(const Tensor<Real>& c, const Tensor<Real>& q,
                              const MaskSpec& anchor_spec,
                              const MaskSpec& target_spec,
                              const DistractorSet& ds,
                              const ContrastiveConfig& cfg,
                              ContrastiveStats* stats = nullptr) {
  validate_contrastive_config(cfg);
  if (c.rank() != 3 || q.shape() != c.shape()) {
    throw std::invalid_argument(cat("contrastive loss: anchors ",
                                    shape_str(c.shape()), " vs targets ",
                                    shape_str(q.shape())));
  }
  int64_t b = c.dim(0), t = c.dim(1), d = c.dim(2);
  if (anchor_spec.batch() != b || target_spec.batch() != b) {
    throw std::invalid_argument(cat("contrastive loss: mask batches ",
                                    anchor_spec.batch(), " and ",
                                    target_spec.batch(), " vs tensor batch ",
                                    b));
  }
  for (size_t e = 0; e < size_t(b); e++) {
    if (anchor_spec.idx[e].size() != target_spec.idx[e].size()) {
      throw std::invalid_argument(
          cat("contrastive loss: example ", e, " has ",
              anchor_spec.idx[e].size(), " anchor frames but ",
              target_spec.idx[e].size(), " target frames"));
    }
    if (anchor_spec.idx[e].empty()) {
      throw std::invalid_argument(cat("contrastive loss: example ", e,
                                      " has no masked positions"));
    }
  }
  int64_t k = cfg.distractors;
  detail::check_distractors(anchor_spec, ds, k);

  auto in_range = [&](int64_t frame, const char* which) {
    if (frame < 0 || frame >= t) {
      throw std::invalid_argument(cat("contrastive loss: ", which, " frame ",
                                      frame, " out of range [0, ", t, ")"));
    }
  };
  std::vector<int64_t> anchor_rows, pos_rows, neg_rows;
  std::vector<Real> weights;
  for (int64_t e = 0; e < b; e++) {
    const auto& aidx = anchor_spec.idx[size_t(e)];
    const auto& tidx = target_spec.idx[size_t(e)];
    int64_t n = int64_t(aidx.size());
    Real w = Real(1) / (Real(b) * Real(n));
    for (int64_t a = 0; a < n; a++) {
      in_range(aidx[size_t(a)], "anchor");
      in_range(tidx[size_t(a)], "target");
      anchor_rows.push_back(e * t + aidx[size_t(a)]);
      pos_rows.push_back(e * t + tidx[size_t(a)]);
      for (int64_t o : ds.ords[size_t(e)][size_t(a)]) {
        neg_rows.push_back(e * t + tidx[size_t(o)]);
      }
      weights.push_back(w);
    }
  }
  int64_t n_total = int64_t(anchor_rows.size());

  auto cf = reshape(c, {b * t, d});
  auto qf = reshape(q, {b * t, d});
  auto anchors = gather_rows(cf, anchor_rows);              // (N, d)
  auto pos = reshape(gather_rows(qf, pos_rows), {n_total, 1, d});
  auto neg = reshape(gather_rows(qf, neg_rows), {n_total, k, d});
  auto cand = cfg.include_positive ? concat<Real>({pos, neg}, 1) : neg;
  int64_t m = cand.dim(1);
  auto tiled = expand(reshape(anchors, {n_total, 1, d}), {n_total, m, d});
  auto sims = mul_scalar(cosine_similarity(tiled, cand),
                         Real(1) / Real(cfg.kappa));        // (N, M)
  auto pos_sim = mul_scalar(cosine_similarity(anchors, reshape(pos,
                                                               {n_total, d})),
                            Real(1) / Real(cfg.kappa));     // (N)

  if (stats != nullptr) {
    const auto& sd = *sims.data_ptr();
    const auto& pd = *pos_sim.data_ptr();
    int64_t off = cfg.include_positive ? 1 : 0;
    for (int64_t i = 0; i < n_total; i++) {
      bool best = true;
      for (int64_t j = 0; j < k; j++) {
        if (sd[size_t(i * m + off + j)] >= pd[size_t(i)]) {
          best = false;
          break;
        }
      }
      stats->top1_correct += best ? 1 : 0;
      stats->anchors++;
    }
  }

  auto per_anchor = sub(logsumexp(sims), pos_sim);          // (N)
  auto w = Tensor<Real>::from_data({n_total}, std::move(weights));
  return sum_all(mul(per_anchor, w));
}

}  // namespace detail

// Mean over masked positions, then over the batch, of
// -log( exp(sim(c_t, q_t)/kappa) / sum over candidates exp(sim/kappa) ).
template <typename Real>
Tensor<Real> contrastive_loss(const Tensor<Real>& c, const Tensor<Real>& q,
                              const MaskSpec& spec, const DistractorSet& ds,
                              const ContrastiveConfig& cfg,
                              ContrastiveStats* stats = nullptr) {
  return detail::contrastive_term(c, q, spec, spec, ds, cfg, stats);
}

template <typename Real>
struct LossBreakdown {
  Tensor<Real> l_oo, l_nn;  // own targets
  Tensor<Real> l_on, l_no;  // switched targets
  Tensor<Real> l_div;       // averaged over the two halves
  Tensor<Real> total;
  double lambda = 0;
  double alpha = 0;
};

// The four-term loss over one pair. Own-target terms anchor each half on its
// own quantized frames; switched terms swap the target tensors while keeping
// each anchor half's distractor ordinals. `stats`, when given, accumulates
// top-1 counts for the own-target terms only.
template <typename Real>
LossBreakdown<Real> switched_loss(
    const Tensor<Real>& c_orig, const Tensor<Real>& q_orig,
    const Tensor<Real>& c_noisy, const Tensor<Real>& q_noisy,
    const MaskSpec& spec_orig, const MaskSpec& spec_noisy,
    const DistractorSet& ds_orig, const DistractorSet& ds_noisy,
    double lambda, const ContrastiveConfig& cfg, bool masks_paired = true,
    ContrastiveStats* stats = nullptr) {
  if (lambda < 0) {
    throw std::invalid_argument(cat("switched_loss: lambda = ", lambda));
  }
  if (masks_paired && !(spec_orig == spec_noisy)) {
    throw std::logic_error(
        "switched_loss: mask pairing is on but the two halves carry "
        "different mask positions");
  }
  LossBreakdown<Real> out;
  out.lambda = lambda;
  out.l_oo = detail::contrastive_term(c_orig, q_orig, spec_orig, spec_orig,
                                      ds_orig, cfg, stats);
  out.l_nn = detail::contrastive_term(c_noisy, q_noisy, spec_noisy,
                                      spec_noisy, ds_noisy, cfg, stats);
  out.l_on = detail::contrastive_term(c_orig, q_noisy, spec_orig, spec_noisy,
                                      ds_orig, cfg);
  out.l_no = detail::contrastive_term(c_noisy, q_orig, spec_noisy, spec_orig,
                                      ds_noisy, cfg);
  return out;
}

// Shared-ordinal form: both halves drew the same distractor ordinals.
template <typename Real>
LossBreakdown<Real> switched_loss(
    const Tensor<Real>& c_orig, const Tensor<Real>& q_orig,
    const Tensor<Real>& c_noisy, const Tensor<Real>& q_noisy,
    const MaskSpec& spec_orig, const MaskSpec& spec_noisy,
    const DistractorSet& ds, double lambda, const ContrastiveConfig& cfg,
    bool masks_paired = true, ContrastiveStats* stats = nullptr) {
  return switched_loss(c_orig, q_orig, c_noisy, q_noisy, spec_orig,
                       spec_noisy, ds, ds, lambda, cfg, masks_paired, stats);
}

// total = l_oo + l_nn + lambda*(l_on + l_no) + alpha*(div_o + div_n)/2.
// Terms with a zero coefficient are left out of the graph entirely, so a
// lambda = 0 run is bit-identical to a run that never built them.
template <typename Real>
Tensor<Real> pretrain_loss(LossBreakdown<Real>& parts,
                           const Tensor<Real>& l_div_original,
                           const Tensor<Real>& l_div_noisy, double alpha) {
  if (alpha < 0) {
    throw std::invalid_argument(cat("pretrain_loss: alpha = ", alpha));
  }
  parts.alpha = alpha;
  parts.l_div = mul_scalar(add(l_div_original, l_div_noisy), Real(0.5));
  auto total = add(parts.l_oo, parts.l_nn);
  if (parts.lambda != 0) {
    total = add(total, mul_scalar(add(parts.l_on, parts.l_no),
                                  Real(parts.lambda)));
  }
  if (alpha != 0) {
    total = add(total, mul_scalar(parts.l_div, Real(alpha)));
  }
  parts.total = total;
  return total;
}

}  // namespace w2vs

#endif  // W2VS_LOSSES_H_
