// w2vs/gradcheck.h

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

#ifndef W2VS_GRADCHECK_H_
#define W2VS_GRADCHECK_H_

#include <functional>
#include <string>
#include <vector>

#include "w2vs/tensor.h"

namespace w2vs {

struct GradCheckResult {
  double max_rel_error = 0;
  // Location of the worst entry, for diagnostics.
  size_t worst_param = 0;
  int64_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
};

// Compares tape gradients of a scalar function against central differences.
// fn must be deterministic given its captured state and must read the
// parameters through their shared buffers, so in-place perturbation is
// visible. Per entry: |analytic - cd| / max(|analytic|, |cd|, 1e-12).
template <typename Real>
GradCheckResult finite_difference_check(
    const std::function<Tensor<Real>()>& fn,
    const std::vector<Tensor<Real>>& params, Real eps) {
  for (auto p : params) p.zero_grad();
  std::vector<std::vector<Real>> analytic;
  {
    Tape<Real> tape;
    Tensor<Real> loss = fn();
    tape.backward(loss);
  }
  for (const auto& p : params) {
    analytic.push_back(p.has_grad() ? p.grad()
                                    : std::vector<Real>(size_t(p.numel()),
                                                        Real(0)));
  }

  GradCheckResult res;
  for (size_t pi = 0; pi < params.size(); pi++) {
    Tensor<Real> p = params[pi];
    auto& data = p.mutable_data();
    for (int64_t i = 0; i < p.numel(); i++) {
      Real orig = data[size_t(i)];
      data[size_t(i)] = orig + eps;
      double lp = double(fn().item());
      data[size_t(i)] = orig - eps;
      double lm = double(fn().item());
      data[size_t(i)] = orig;
      double cd = (lp - lm) / (2.0 * double(eps));
      double an = double(analytic[pi][size_t(i)]);
      double denom = std::max({std::abs(an), std::abs(cd), 1e-12});
      double err = std::abs(an - cd) / denom;
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_param = pi;
        res.worst_index = i;
        res.worst_analytic = an;
        res.worst_numeric = cd;
      }
    }
  }
  return res;
}

}  // namespace w2vs

#endif  // W2VS_GRADCHECK_H_
