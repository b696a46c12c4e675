// w2vs/mask.h

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

#ifndef W2VS_MASK_H_
#define W2VS_MASK_H_

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "w2vs/common.h"
#include "w2vs/rng.h"

namespace w2vs {

// Which frames of each example are masked. Every example has at least one
// masked frame; indices are sorted and unique.
struct MaskSpec {
  std::vector<std::vector<int64_t>> idx;

  int64_t batch() const { return int64_t(idx.size()); }
  int64_t total() const {
    int64_t n = 0;
    for (const auto& v : idx) n += int64_t(v.size());
    return n;
  }
  // Row indices into a (B*T', ...) flattening, batch-major.
  std::vector<int64_t> flat_rows(int64_t t_frames) const {
    std::vector<int64_t> out;
    out.reserve(size_t(total()));
    for (size_t b = 0; b < idx.size(); b++) {
      for (int64_t t : idx[b]) out.push_back(int64_t(b) * t_frames + t);
    }
    return out;
  }
  bool operator==(const MaskSpec&) const = default;
};

// Sorted union of fixed-length spans whose starts are Bernoulli(p_start)
// draws, clipped at t_frames. An empty union forces one random index so the
// contrastive loss always has at least one anchor.
inline std::vector<int64_t> sample_mask_indices(int64_t t_frames,
                                                double p_start, int64_t span,
                                                RngStream& rng) {
  if (t_frames <= 0) {
    throw std::invalid_argument("sample_mask_indices: no frames to mask");
  }
  if (!(p_start >= 0.0 && p_start <= 1.0)) {
    throw std::invalid_argument(cat("sample_mask_indices: p_start = ", p_start,
                                    " outside [0, 1]"));
  }
  if (span < 1 || span > t_frames) {
    throw std::invalid_argument(cat("sample_mask_indices: span ", span,
                                    " outside [1, ", t_frames, "]"));
  }
  std::vector<bool> masked(size_t(t_frames), false);
  for (int64_t t = 0; t < t_frames; t++) {
    if (rng.next_double() < p_start) {
      for (int64_t s = t; s < std::min(t + span, t_frames); s++) {
        masked[size_t(s)] = true;
      }
    }
  }
  std::vector<int64_t> out;
  for (int64_t t = 0; t < t_frames; t++) {
    if (masked[size_t(t)]) out.push_back(t);
  }
  if (out.empty()) out.push_back(int64_t(rng.next_below(uint64_t(t_frames))));
  return out;
}

inline MaskSpec sample_masks(int64_t batch, int64_t t_frames, double p_start,
                             int64_t span, RngStream& rng) {
  MaskSpec spec;
  for (int64_t b = 0; b < batch; b++) {
    spec.idx.push_back(sample_mask_indices(t_frames, p_start, span, rng));
  }
  return spec;
}

// Fresh sampling whose per-example counts are forced to match `counts`:
// surplus masked indices are dropped and missing ones added uniformly at
// random. Used when mask pairing is off but the switched loss still needs
// equal numbers of masked positions in both halves.
inline MaskSpec sample_masks_with_counts(int64_t t_frames, double p_start,
                                         int64_t span,
                                         const std::vector<int64_t>& counts,
                                         RngStream& rng) {
  MaskSpec spec;
  for (int64_t target : counts) {
    if (target < 1 || target > t_frames) {
      throw std::invalid_argument(cat("sample_masks_with_counts: target ",
                                      target, " outside [1, ", t_frames, "]"));
    }
    auto v = sample_mask_indices(t_frames, p_start, span, rng);
    while (int64_t(v.size()) > target) {
      v.erase(v.begin() + int64_t(rng.next_below(uint64_t(v.size()))));
    }
    if (int64_t(v.size()) < target) {
      std::set<int64_t> have(v.begin(), v.end());
      std::vector<int64_t> free;
      for (int64_t t = 0; t < t_frames; t++) {
        if (!have.count(t)) free.push_back(t);
      }
      while (int64_t(v.size()) < target) {
        size_t pick = size_t(rng.next_below(uint64_t(free.size())));
        v.push_back(free[pick]);
        free.erase(free.begin() + int64_t(pick));
      }
      std::sort(v.begin(), v.end());
    }
    spec.idx.push_back(std::move(v));
  }
  return spec;
}

}  // namespace w2vs

#endif  // W2VS_MASK_H_
