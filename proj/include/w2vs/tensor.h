// w2vs/tensor.h

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

// Reverse-mode autodiff over dense row-major tensors. Define-by-run: while a
// Tape is alive on the current thread, ops append entries in creation order,
// which is already a topological order, so backward() is a single reverse
// sweep with additive fan-out accumulation. Ops never own randomness; dropout
// masks and Gumbel noise always arrive as explicit arguments.

#ifndef W2VS_TENSOR_H_
#define W2VS_TENSOR_H_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "w2vs/common.h"

namespace w2vs {

using Shape = std::vector<int64_t>;

inline int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); i++) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

inline std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

// Gradient buffer shared between a tensor and the tape entry that produced
// it. Sized lazily on first accumulation.
template <typename Real>
struct GradSlot {
  std::vector<Real> grad;
  bool has = false;
};

namespace detail {

// Returns the accumulation buffer, zero-filled to n on first touch.
template <typename Real>
inline std::vector<Real>& acc(const std::shared_ptr<GradSlot<Real>>& s,
                              size_t n) {
  if (!s->has) {
    s->grad.assign(n, Real(0));
    s->has = true;
  }
  return s->grad;
}

}  // namespace detail

template <typename Real>
class Tape;

template <typename Real>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& s) {
    return Tensor(s, std::make_shared<std::vector<Real>>(
                         size_t(numel_of(s)), Real(0)));
  }
  static Tensor full(const Shape& s, Real v) {
    return Tensor(s,
                  std::make_shared<std::vector<Real>>(size_t(numel_of(s)), v));
  }
  static Tensor from_data(const Shape& s, std::vector<Real> v) {
    if (int64_t(v.size()) != numel_of(s)) {
      throw std::invalid_argument(cat("Tensor: ", v.size(),
                                      " values for shape ", shape_str(s)));
    }
    return Tensor(s, std::make_shared<std::vector<Real>>(std::move(v)));
  }
  static Tensor scalar(Real v) { return from_data({}, {v}); }
  // Tracked leaf: participates in backward whenever a tape is alive.
  static Tensor param(const Shape& s, std::vector<Real> v) {
    Tensor t = from_data(s, std::move(v));
    t.slot_ = std::make_shared<GradSlot<Real>>();
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return int(shape_.size()); }
  int64_t dim(int i) const {
    return shape_[size_t(i < 0 ? i + rank() : i)];
  }
  int64_t numel() const { return int64_t(data_->size()); }

  const std::vector<Real>& data() const { return *data_; }
  // Direct mutation; callers (optimizer, finite differences) own the
  // consequences for any live tape.
  std::vector<Real>& mutable_data() { return *data_; }

  Real item() const {
    if (numel() != 1) {
      throw std::invalid_argument(
          cat("Tensor::item: shape ", shape_str(shape_), " is not scalar"));
    }
    return (*data_)[0];
  }

  bool tracked() const { return slot_ != nullptr; }
  bool has_grad() const { return slot_ && slot_->has; }
  const std::vector<Real>& grad() const {
    if (!has_grad()) {
      throw std::invalid_argument("Tensor::grad: no gradient accumulated");
    }
    return slot_->grad;
  }
  void zero_grad() {
    if (slot_) {
      slot_->grad.clear();
      slot_->has = false;
    }
  }

  std::shared_ptr<std::vector<Real>> data_ptr() const { return data_; }
  std::shared_ptr<GradSlot<Real>> slot() const { return slot_; }
  void make_slot() {
    if (!slot_) slot_ = std::make_shared<GradSlot<Real>>();
  }
  // Same buffer under a different shape (caller guarantees matching numel).
  Tensor with_shape(const Shape& s) const {
    Tensor t(s, data_);
    return t;
  }

 private:
  Tensor(Shape s, std::shared_ptr<std::vector<Real>> d)
      : shape_(std::move(s)), data_(std::move(d)) {}

  Shape shape_;
  std::shared_ptr<std::vector<Real>> data_;
  std::shared_ptr<GradSlot<Real>> slot_;
};

template <typename Real>
struct TapeEntry {
  const char* op;
  std::shared_ptr<std::vector<Real>> out_data;
  std::shared_ptr<GradSlot<Real>> out_slot;
  std::function<void(const std::vector<Real>&)> bwd;
};

template <typename Real>
class Tape {
 public:
  Tape() {
    prev_ = active_;
    active_ = this;
  }
  ~Tape() { active_ = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  void record(const char* op, const Tensor<Real>& out,
              std::function<void(const std::vector<Real>&)> bwd) {
    entries_.push_back({op, out.data_ptr(), out.slot(), std::move(bwd)});
  }

  size_t size() const { return entries_.size(); }

  // Reverse sweep from a scalar loss. Entries are released as they are
  // consumed, so peak memory decays during the sweep. One sweep per tape.
  void backward(const Tensor<Real>& loss) {
    if (loss.numel() != 1) {
      throw std::invalid_argument(cat("backward: loss has shape ",
                                      shape_str(loss.shape()),
                                      "; expected a scalar"));
    }
    if (!loss.tracked()) {
      throw std::invalid_argument(
          "backward: loss was not recorded on the tape");
    }
    detail::acc(loss.slot(), 1)[0] += Real(1);
    for (size_t i = entries_.size(); i-- > 0;) {
      TapeEntry<Real>& e = entries_[i];
      if (e.out_slot->has) {
        e.bwd(e.out_slot->grad);
        e.out_slot->grad.clear();
        e.out_slot->grad.shrink_to_fit();
        e.out_slot->has = false;
      }
      e.bwd = nullptr;
      e.out_data.reset();
      e.out_slot.reset();
    }
    entries_.clear();
  }

  // First entry, in creation order, whose output holds a non-finite value.
  std::optional<std::string> first_nonfinite() const {
    for (size_t i = 0; i < entries_.size(); i++) {
      const TapeEntry<Real>& e = entries_[i];
      if (!e.out_data) continue;
      for (Real v : *e.out_data) {
        if (!std::isfinite(double(v))) {
          return cat(e.op, " (tape entry ", i, " of ", entries_.size(), ")");
        }
      }
    }
    return std::nullopt;
  }

 private:
  std::vector<TapeEntry<Real>> entries_;
  Tape* prev_ = nullptr;
  inline static thread_local Tape* active_ = nullptr;
};

namespace detail {

template <typename Real>
inline bool want_tape(std::initializer_list<const Tensor<Real>*> ins) {
  if (Tape<Real>::active() == nullptr) return false;
  for (const Tensor<Real>* t : ins) {
    if (t->tracked()) return true;
  }
  return false;
}

template <typename Real>
inline void check_same_shape(const char* op, const Tensor<Real>& a,
                             const Tensor<Real>& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(cat(op, ": shape mismatch ",
                                    shape_str(a.shape()), " vs ",
                                    shape_str(b.shape())));
  }
}

template <typename Real>
using Mat =
    Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MatMap = Eigen::Map<Mat<Real>>;
template <typename Real>
using ConstMatMap = Eigen::Map<const Mat<Real>>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::check_same_shape("add", a, b);
  size_t n = size_t(a.numel());
  std::vector<Real> v(n);
  const auto &da = a.data(), &db = b.data();
  for (size_t i = 0; i < n; i++) v[i] = da[i] + db[i];
  auto out = Tensor<Real>::from_data(a.shape(), std::move(v));
  if (detail::want_tape<Real>({&a, &b})) {
    out.make_slot();
    auto sa = a.slot(), sb = b.slot();
    Tape<Real>::active()->record("add", out, [sa, sb, n](const std::vector<Real>& g) {
      if (sa) {
        auto& ga = detail::acc(sa, n);
        for (size_t i = 0; i < n; i++) ga[i] += g[i];
      }
      if (sb) {
        auto& gb = detail::acc(sb, n);
        for (size_t i = 0; i < n; i++) gb[i] += g[i];
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::check_same_shape("sub", a, b);
  size_t n = size_t(a.numel());
  std::vector<Real> v(n);
  const auto &da = a.data(), &db = b.data();
  for (size_t i = 0; i < n; i++) v[i] = da[i] - db[i];
  auto out = Tensor<Real>::from_data(a.shape(), std::move(v));
  if (detail::want_tape<Real>({&a, &b})) {
    out.make_slot();
    auto sa = a.slot(), sb = b.slot();
    Tape<Real>::active()->record("sub", out, [sa, sb, n](const std::vector<Real>& g) {
      if (sa) {
        auto& ga = detail::acc(sa, n);
        for (size_t i = 0; i < n; i++) ga[i] += g[i];
      }
      if (sb) {
        auto& gb = detail::acc(sb, n);
        for (size_t i = 0; i < n; i++) gb[i] -= g[i];
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::check_same_shape("mul", a, b);
  size_t n = size_t(a.numel());
  std::vector<Real> v(n);
  const auto &da = a.data(), &db = b.data();
  for (size_t i = 0; i < n; i++) v[i] = da[i] * db[i];
  auto out = Tensor<Real>::from_data(a.shape(), std::move(v));
  if (detail::want_tape<Real>({&a, &b})) {
    out.make_slot();
    auto sa = a.slot(), sb = b.slot();
    auto pa = a.data_ptr(), pb = b.data_ptr();
    Tape<Real>::active()->record(
        "mul", out, [sa, sb, pa, pb, n](const std::vector<Real>& g) {
          if (sa) {
            auto& ga = detail::acc(sa, n);
            for (size_t i = 0; i < n; i++) ga[i] += g[i] * (*pb)[i];
          }
          if (sb) {
            auto& gb = detail::acc(sb, n);
            for (size_t i = 0; i < n; i++) gb[i] += g[i] * (*pa)[i];
          }
        });
  }
  return out;
}

template <typename Real>
Tensor<Real> add_scalar(const Tensor<Real>& a, Real s) {
  size_t n = size_t(a.numel());
  std::vector<Real> v(n);
  const auto& da = a.data();
  for (size_t i = 0; i < n; i++) v[i] = da[i] + s;
  auto out = Tensor<Real>::from_data(a.shape(), std::move(v));
  if (detail::want_tape<Real>({&a})) {
    out.make_slot();
    auto sa = a.slot();
    Tape<Real>::active()->record("add_scalar", out,
                                 [sa, n](const std::vector<Real>& g) {
                                   auto& ga = detail::acc(sa, n);
                                   for (size_t i = 0; i < n; i++) ga[i] += g[i];
                                 });
  }
  return out;
}

template <typename Real>
Tensor<Real> mul_scalar(const Tensor<Real>& a, Real s) {
  size_t n = size_t(a.numel());
  std::vector<Real> v(n);
  const auto& da = a.data();
  for (size_t i = 0; i < n; i++) v[i] = da[i] * s;
  auto out = Tensor<Real>::from_data(a.shape(), std::move(v));
  if (detail::want_tape<Real>({&a})) {
    out.make_slot();
    auto sa = a.slot();
    Tape<Real>::active()->record(
        "mul_scalar", out, [sa, s, n](const std::vector<Real>& g) {
          auto& ga = detail::acc(sa, n);
          for (size_t i = 0; i < n; i++) ga[i] += g[i] * s;
        });
  }
  return out;
}

template <typename Real>
Tensor<Real> neg(const Tensor<Real>& a) {
  return mul_scalar(a, Real(-1));
}

template <typename Real>
Tensor<Real> exp(const Tensor<Real>& a) {
  size_t n = size_t(a.numel());
  std::vector<Real> v(n);
  const auto& da = a.data();
  for (size_t i = 0; i < n; i++) v[i] = std::exp(da[i]);
  auto out = Tensor<Real>::from_data(a.shape(), std::move(v));
  if (detail::want_tape<Real>({&a})) {
    out.make_slot();
    auto sa = a.slot();
    auto po = out.data_ptr();
    Tape<Real>::active()->record("exp", out,
                                 [sa, po, n](const std::vector<Real>& g) {
                                   auto& ga = detail::acc(sa, n);
                                   for (size_t i = 0; i < n; i++)
                                     ga[i] += g[i] * (*po)[i];
                                 });
  }
  return out;
}

// Exact-erf form; derivative is the Gaussian CDF plus x times the density.
template <typename Real>
Tensor<Real> gelu(const Tensor<Real>& a) {
  size_t n = size_t(a.numel());
  std::vector<Real> v(n);
  const auto& da = a.data();
  const Real inv_sqrt2 = Real(0.70710678118654752440);
  for (size_t i = 0; i < n; i++) {
    v[i] = Real(0.5) * da[i] * (Real(1) + std::erf(da[i] * inv_sqrt2));
  }
  auto out = Tensor<Real>::from_data(a.shape(), std::move(v));
  if (detail::want_tape<Real>({&a})) {
    out.make_slot();
    auto sa = a.slot();
    auto pa = a.data_ptr();
    Tape<Real>::active()->record(
        "gelu", out, [sa, pa, n, inv_sqrt2](const std::vector<Real>& g) {
          const Real inv_sqrt2pi = Real(0.39894228040143267794);
          auto& ga = detail::acc(sa, n);
          for (size_t i = 0; i < n; i++) {
            Real x = (*pa)[i];
            Real cdf = Real(0.5) * (Real(1) + std::erf(x * inv_sqrt2));
            Real pdf = inv_sqrt2pi * std::exp(Real(-0.5) * x * x);
            ga[i] += g[i] * (cdf + x * pdf);
          }
        });
  }
  return out;
}

// Elementwise -p log p with the 0 log 0 = 0 convention.
template <typename Real>
Tensor<Real> entropy_term(const Tensor<Real>& p) {
  size_t n = size_t(p.numel());
  std::vector<Real> v(n);
  const auto& dp = p.data();
  for (size_t i = 0; i < n; i++) {
    v[i] = dp[i] > Real(0) ? -dp[i] * std::log(dp[i]) : Real(0);
  }
  auto out = Tensor<Real>::from_data(p.shape(), std::move(v));
  if (detail::want_tape<Real>({&p})) {
    out.make_slot();
    auto sp = p.slot();
    auto pp = p.data_ptr();
    Tape<Real>::active()->record(
        "entropy_term", out, [sp, pp, n](const std::vector<Real>& g) {
          auto& gp = detail::acc(sp, n);
          for (size_t i = 0; i < n; i++) {
            Real x = (*pp)[i];
            if (x > Real(0)) gp[i] -= g[i] * (std::log(x) + Real(1));
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

// One dim may be -1 and is inferred. Shares the underlying buffer.
template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& a, Shape s) {
  int64_t known = 1, infer = -1;
  for (size_t i = 0; i < s.size(); i++) {
    if (s[i] == -1) {
      if (infer >= 0)
        throw std::invalid_argument("reshape: more than one -1 dim");
      infer = int64_t(i);
    } else {
      known *= s[i];
    }
  }
  if (infer >= 0) {
    if (known == 0 || a.numel() % known != 0) {
      throw std::invalid_argument(cat("reshape: cannot infer dim for ",
                                      shape_str(a.shape()), " -> ",
                                      shape_str(s)));
    }
    s[size_t(infer)] = a.numel() / known;
  }
  if (numel_of(s) != a.numel()) {
    throw std::invalid_argument(cat("reshape: ", shape_str(a.shape()),
                                    " -> ", shape_str(s),
                                    " changes element count"));
  }
  auto out = a.with_shape(s);
  if (detail::want_tape<Real>({&a})) {
    out.make_slot();
    auto sa = a.slot();
    size_t n = size_t(a.numel());
    Tape<Real>::active()->record("reshape", out,
                                 [sa, n](const std::vector<Real>& g) {
                                   auto& ga = detail::acc(sa, n);
                                   for (size_t i = 0; i < n; i++) ga[i] += g[i];
                                 });
  }
  return out;
}

// out.dim[i] = in.dim[axes[i]]; materializes a contiguous copy.
template <typename Real>
Tensor<Real> permute(const Tensor<Real>& a, const std::vector<int>& axes) {
  int r = a.rank();
  if (int(axes.size()) != r) {
    throw std::invalid_argument(cat("permute: ", axes.size(), " axes for rank ",
                                    r, " tensor"));
  }
  std::vector<bool> seen(size_t(r), false);
  Shape out_shape(static_cast<size_t>(r));
  for (int i = 0; i < r; i++) {
    int ax = axes[size_t(i)];
    if (ax < 0 || ax >= r || seen[size_t(ax)]) {
      throw std::invalid_argument("permute: axes are not a permutation");
    }
    seen[size_t(ax)] = true;
    out_shape[size_t(i)] = a.dim(ax);
  }
  auto in_strides = row_major_strides(a.shape());
  // Stride of out coordinate i inside the input buffer.
  std::vector<int64_t> map_strides(static_cast<size_t>(r));
  for (int i = 0; i < r; i++) map_strides[size_t(i)] = in_strides[size_t(axes[size_t(i)])];

  size_t n = size_t(a.numel());
  std::vector<Real> v(n);
  const auto& da = a.data();
  std::vector<int64_t> coord(size_t(r), 0);
  int64_t in_lin = 0;
  for (size_t o = 0; o < n; o++) {
    v[o] = da[size_t(in_lin)];
    for (int i = r - 1; i >= 0; i--) {
      coord[size_t(i)]++;
      in_lin += map_strides[size_t(i)];
      if (coord[size_t(i)] < out_shape[size_t(i)]) break;
      in_lin -= map_strides[size_t(i)] * out_shape[size_t(i)];
      coord[size_t(i)] = 0;
    }
  }
  auto out = Tensor<Real>::from_data(out_shape, std::move(v));
  if (detail::want_tape<Real>({&a})) {
    out.make_slot();
    auto sa = a.slot();
    Tape<Real>::active()->record(
        "permute", out,
        [sa, n, out_shape, map_strides, r](const std::vector<Real>& g) {
          auto& ga = detail::acc(sa, n);
          std::vector<int64_t> c(size_t(r), 0);
          int64_t lin = 0;
          for (size_t o = 0; o < n; o++) {
            ga[size_t(lin)] += g[o];
            for (int i = r - 1; i >= 0; i--) {
              c[size_t(i)]++;
              lin += map_strides[size_t(i)];
              if (c[size_t(i)] < out_shape[size_t(i)]) break;
              lin -= map_strides[size_t(i)] * out_shape[size_t(i)];
              c[size_t(i)] = 0;
            }
          }
        });
  }
  return out;
}

// Broadcast along size-1 dims to `target`; backward sums over them.
template <typename Real>
Tensor<Real> expand(const Tensor<Real>& a, const Shape& target) {
  int r = a.rank();
  if (int(target.size()) != size_t(r)) {
    throw std::invalid_argument(cat("expand: rank mismatch ",
                                    shape_str(a.shape()), " -> ",
                                    shape_str(target)));
  }
  auto in_strides = row_major_strides(a.shape());
  std::vector<int64_t> map_strides(static_cast<size_t>(r));
  for (int i = 0; i < r; i++) {
    if (a.dim(i) == target[size_t(i)]) {
      map_strides[size_t(i)] = in_strides[size_t(i)];
    } else if (a.dim(i) == 1) {
      map_strides[size_t(i)] = 0;
    } else {
      throw std::invalid_argument(cat("expand: ", shape_str(a.shape()),
                                      " does not broadcast to ",
                                      shape_str(target)));
    }
  }
  size_t n = size_t(numel_of(target));
  std::vector<Real> v(n);
  const auto& da = a.data();
  std::vector<int64_t> coord(size_t(r), 0);
  int64_t in_lin = 0;
  for (size_t o = 0; o < n; o++) {
    v[o] = da[size_t(in_lin)];
    for (int i = r - 1; i >= 0; i--) {
      coord[size_t(i)]++;
      in_lin += map_strides[size_t(i)];
      if (coord[size_t(i)] < target[size_t(i)]) break;
      in_lin -= map_strides[size_t(i)] * target[size_t(i)];
      coord[size_t(i)] = 0;
    }
  }
  auto out = Tensor<Real>::from_data(target, std::move(v));
  if (detail::want_tape<Real>({&a})) {
    out.make_slot();
    auto sa = a.slot();
    size_t an = size_t(a.numel());
    Tape<Real>::active()->record(
        "expand", out,
        [sa, an, n, target, map_strides, r](const std::vector<Real>& g) {
          auto& ga = detail::acc(sa, an);
          std::vector<int64_t> c(size_t(r), 0);
          int64_t lin = 0;
          for (size_t o = 0; o < n; o++) {
            ga[size_t(lin)] += g[o];
            for (int i = r - 1; i >= 0; i--) {
              c[size_t(i)]++;
              lin += map_strides[size_t(i)];
              if (c[size_t(i)] < target[size_t(i)]) break;
              lin -= map_strides[size_t(i)] * target[size_t(i)];
              c[size_t(i)] = 0;
            }
          }
        });
  }
  return out;
}

template <typename Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  int r = parts[0].rank();
  if (axis < 0) axis += r;
  Shape out_shape = parts[0].shape();
  int64_t axis_total = 0;
  for (const auto& p : parts) {
    if (p.rank() != r) throw std::invalid_argument("concat: rank mismatch");
    for (int i = 0; i < r; i++) {
      if (i != axis && p.dim(i) != out_shape[size_t(i)]) {
        throw std::invalid_argument(cat("concat: shape mismatch on axis ", i,
                                        ": ", shape_str(p.shape()), " vs ",
                                        shape_str(out_shape)));
      }
    }
    axis_total += p.dim(axis);
  }
  out_shape[size_t(axis)] = axis_total;

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; i++) outer *= out_shape[size_t(i)];
  for (int i = axis + 1; i < r; i++) inner *= out_shape[size_t(i)];

  size_t n = size_t(numel_of(out_shape));
  std::vector<Real> v(n);
  int64_t offset = 0;
  for (const auto& p : parts) {
    int64_t len = p.dim(axis);
    const auto& dp = p.data();
    for (int64_t o = 0; o < outer; o++) {
      std::copy(dp.begin() + o * len * inner, dp.begin() + (o + 1) * len * inner,
                v.begin() + (o * axis_total + offset) * inner);
    }
    offset += len;
  }
  auto out = Tensor<Real>::from_data(out_shape, std::move(v));

  std::vector<const Tensor<Real>*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  bool track = Tape<Real>::active() != nullptr &&
               std::any_of(ptrs.begin(), ptrs.end(),
                           [](const Tensor<Real>* t) { return t->tracked(); });
  if (track) {
    out.make_slot();
    struct Piece {
      std::shared_ptr<GradSlot<Real>> slot;
      int64_t len;
      size_t numel;
    };
    std::vector<Piece> pieces;
    for (const auto& p : parts) {
      pieces.push_back({p.slot(), p.dim(axis), size_t(p.numel())});
    }
    Tape<Real>::active()->record(
        "concat", out,
        [pieces, outer, inner, axis_total](const std::vector<Real>& g) {
          int64_t off = 0;
          for (const auto& pc : pieces) {
            if (pc.slot) {
              auto& gp = detail::acc(pc.slot, pc.numel);
              for (int64_t o = 0; o < outer; o++) {
                const Real* src = g.data() + (o * axis_total + off) * inner;
                Real* dst = gp.data() + o * pc.len * inner;
                for (int64_t i = 0; i < pc.len * inner; i++) dst[i] += src[i];
              }
            }
            off += pc.len;
          }
        });
  }
  return out;
}

template <typename Real>
Tensor<Real> slice(const Tensor<Real>& a, int axis, int64_t start,
                   int64_t len) {
  int r = a.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r || start < 0 || len < 0 ||
      start + len > a.dim(axis)) {
    throw std::invalid_argument(cat("slice: [", start, ", ", start + len,
                                    ") out of range on axis ", axis, " of ",
                                    shape_str(a.shape())));
  }
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; i++) outer *= a.dim(i);
  for (int i = axis + 1; i < r; i++) inner *= a.dim(i);
  int64_t alen = a.dim(axis);

  Shape out_shape = a.shape();
  out_shape[size_t(axis)] = len;
  std::vector<Real> v(size_t(outer * len * inner));
  const auto& da = a.data();
  for (int64_t o = 0; o < outer; o++) {
    std::copy(da.begin() + (o * alen + start) * inner,
              da.begin() + (o * alen + start + len) * inner,
              v.begin() + o * len * inner);
  }
  auto out = Tensor<Real>::from_data(out_shape, std::move(v));
  if (detail::want_tape<Real>({&a})) {
    out.make_slot();
    auto sa = a.slot();
    size_t an = size_t(a.numel());
    Tape<Real>::active()->record(
        "slice", out,
        [sa, an, outer, inner, alen, start, len](const std::vector<Real>& g) {
          auto& ga = detail::acc(sa, an);
          for (int64_t o = 0; o < outer; o++) {
            const Real* src = g.data() + o * len * inner;
            Real* dst = ga.data() + (o * alen + start) * inner;
            for (int64_t i = 0; i < len * inner; i++) dst[i] += src[i];
          }
        });
  }
  return out;
}

// a is (N, D); returns rows idx as (M, D). Backward scatter-adds, so
// repeated indices accumulate.
template <typename Real>
Tensor<Real> gather_rows(const Tensor<Real>& a,
                         const std::vector<int64_t>& idx) {
  if (a.rank() != 2) {
    throw std::invalid_argument(cat("gather_rows: input rank ", a.rank(),
                                    "; expected 2"));
  }
  int64_t nrows = a.dim(0), d = a.dim(1);
  for (int64_t i : idx) {
    if (i < 0 || i >= nrows) {
      throw std::invalid_argument(cat("gather_rows: index ", i,
                                      " out of range [0, ", nrows, ")"));
    }
  }
  int64_t m = int64_t(idx.size());
  std::vector<Real> v(size_t(m * d));
  const auto& da = a.data();
  for (int64_t i = 0; i < m; i++) {
    std::copy(da.begin() + idx[size_t(i)] * d, da.begin() + (idx[size_t(i)] + 1) * d,
              v.begin() + i * d);
  }
  auto out = Tensor<Real>::from_data({m, d}, std::move(v));
  if (detail::want_tape<Real>({&a})) {
    out.make_slot();
    auto sa = a.slot();
    size_t an = size_t(a.numel());
    Tape<Real>::active()->record(
        "gather_rows", out, [sa, an, idx, m, d](const std::vector<Real>& g) {
          auto& ga = detail::acc(sa, an);
          for (int64_t i = 0; i < m; i++) {
            const Real* src = g.data() + i * d;
            Real* dst = ga.data() + idx[size_t(i)] * d;
            for (int64_t j = 0; j < d; j++) dst[j] += src[j];
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> sum_all(const Tensor<Real>& a) {
  Real s = 0;
  for (Real v : a.data()) s += v;
  auto out = Tensor<Real>::scalar(s);
  if (detail::want_tape<Real>({&a})) {
    out.make_slot();
    auto sa = a.slot();
    size_t n = size_t(a.numel());
    Tape<Real>::active()->record("sum_all", out,
                                 [sa, n](const std::vector<Real>& g) {
                                   auto& ga = detail::acc(sa, n);
                                   for (size_t i = 0; i < n; i++) ga[i] += g[0];
                                 });
  }
  return out;
}

template <typename Real>
Tensor<Real> mean_all(const Tensor<Real>& a) {
  return mul_scalar(sum_all(a), Real(1) / Real(a.numel()));
}

// (N, D) -> (D), mean over rows.
template <typename Real>
Tensor<Real> mean_axis0(const Tensor<Real>& a) {
  if (a.rank() != 2) {
    throw std::invalid_argument(cat("mean_axis0: input rank ", a.rank(),
                                    "; expected 2"));
  }
  int64_t nrows = a.dim(0), d = a.dim(1);
  std::vector<Real> v(size_t(d), Real(0));
  const auto& da = a.data();
  for (int64_t i = 0; i < nrows; i++) {
    for (int64_t j = 0; j < d; j++) v[size_t(j)] += da[size_t(i * d + j)];
  }
  Real inv = Real(1) / Real(nrows);
  for (auto& x : v) x *= inv;
  auto out = Tensor<Real>::from_data({d}, std::move(v));
  if (detail::want_tape<Real>({&a})) {
    out.make_slot();
    auto sa = a.slot();
    Tape<Real>::active()->record(
        "mean_axis0", out, [sa, nrows, d, inv](const std::vector<Real>& g) {
          auto& ga = detail::acc(sa, size_t(nrows * d));
          for (int64_t i = 0; i < nrows; i++) {
            for (int64_t j = 0; j < d; j++) ga[size_t(i * d + j)] += g[size_t(j)] * inv;
          }
        });
  }
  return out;
}

// (..., D) -> (...), sum over the last dim.
template <typename Real>
Tensor<Real> sum_last(const Tensor<Real>& a) {
  if (a.rank() < 1) {
    throw std::invalid_argument("sum_last: scalar input");
  }
  int64_t d = a.dim(-1);
  int64_t rows = a.numel() / d;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  std::vector<Real> v(size_t(rows), Real(0));
  const auto& da = a.data();
  for (int64_t i = 0; i < rows; i++) {
    for (int64_t j = 0; j < d; j++) v[size_t(i)] += da[size_t(i * d + j)];
  }
  auto out = Tensor<Real>::from_data(out_shape, std::move(v));
  if (detail::want_tape<Real>({&a})) {
    out.make_slot();
    auto sa = a.slot();
    Tape<Real>::active()->record(
        "sum_last", out, [sa, rows, d](const std::vector<Real>& g) {
          auto& ga = detail::acc(sa, size_t(rows * d));
          for (int64_t i = 0; i < rows; i++) {
            for (int64_t j = 0; j < d; j++) ga[size_t(i * d + j)] += g[size_t(i)];
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument(cat("matmul: ", shape_str(a.shape()), " x ",
                                    shape_str(b.shape())));
  }
  int64_t m = a.dim(0), k = a.dim(1), n_cols = b.dim(1);
  std::vector<Real> v(size_t(m * n_cols));
  {
    detail::ConstMatMap<Real> A(a.data().data(), m, k);
    detail::ConstMatMap<Real> B(b.data().data(), k, n_cols);
    detail::MatMap<Real> O(v.data(), m, n_cols);
    O.noalias() = A * B;
  }
  auto out = Tensor<Real>::from_data({m, n_cols}, std::move(v));
  if (detail::want_tape<Real>({&a, &b})) {
    out.make_slot();
    auto sa = a.slot(), sb = b.slot();
    auto pa = a.data_ptr(), pb = b.data_ptr();
    Tape<Real>::active()->record(
        "matmul", out,
        [sa, sb, pa, pb, m, k, n_cols](const std::vector<Real>& g) {
          detail::ConstMatMap<Real> G(g.data(), m, n_cols);
          if (sa) {
            auto& ga = detail::acc(sa, size_t(m * k));
            detail::ConstMatMap<Real> B(pb->data(), k, n_cols);
            detail::MatMap<Real>(ga.data(), m, k).noalias() += G * B.transpose();
          }
          if (sb) {
            auto& gb = detail::acc(sb, size_t(k * n_cols));
            detail::ConstMatMap<Real> A(pa->data(), m, k);
            detail::MatMap<Real>(gb.data(), k, n_cols).noalias() +=
                A.transpose() * G;
          }
        });
  }
  return out;
}

// y = x W + b with x (..., in), W (in, out), b (out).
template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w,
                    const Tensor<Real>& b) {
  if (x.rank() < 1 || w.rank() != 2 || b.rank() != 1 ||
      x.dim(-1) != w.dim(0) || b.dim(0) != w.dim(1)) {
    throw std::invalid_argument(cat("linear: x ", shape_str(x.shape()), ", W ",
                                    shape_str(w.shape()), ", b ",
                                    shape_str(b.shape())));
  }
  int64_t in = w.dim(0), out_dim = w.dim(1);
  int64_t rows = x.numel() / in;
  std::vector<Real> v(size_t(rows * out_dim));
  {
    detail::ConstMatMap<Real> X(x.data().data(), rows, in);
    detail::ConstMatMap<Real> W(w.data().data(), in, out_dim);
    detail::MatMap<Real> O(v.data(), rows, out_dim);
    O.noalias() = X * W;
    O.rowwise() +=
        Eigen::Map<const Eigen::RowVector<Real, Eigen::Dynamic>>(b.data().data(),
                                                                 out_dim);
  }
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  out_shape.push_back(out_dim);
  auto out = Tensor<Real>::from_data(out_shape, std::move(v));
  if (detail::want_tape<Real>({&x, &w, &b})) {
    out.make_slot();
    auto sx = x.slot(), sw = w.slot(), sb = b.slot();
    auto px = x.data_ptr(), pw = w.data_ptr();
    Tape<Real>::active()->record(
        "linear", out,
        [sx, sw, sb, px, pw, rows, in, out_dim](const std::vector<Real>& g) {
          detail::ConstMatMap<Real> G(g.data(), rows, out_dim);
          if (sx) {
            auto& gx = detail::acc(sx, size_t(rows * in));
            detail::ConstMatMap<Real> W(pw->data(), in, out_dim);
            detail::MatMap<Real>(gx.data(), rows, in).noalias() +=
                G * W.transpose();
          }
          if (sw) {
            auto& gw = detail::acc(sw, size_t(in * out_dim));
            detail::ConstMatMap<Real> X(px->data(), rows, in);
            detail::MatMap<Real>(gw.data(), in, out_dim).noalias() +=
                X.transpose() * G;
          }
          if (sb) {
            auto& gb = detail::acc(sb, size_t(out_dim));
            Eigen::Map<Eigen::RowVector<Real, Eigen::Dynamic>>(gb.data(),
                                                               out_dim) +=
                G.colwise().sum();
          }
        });
  }
  return out;
}

// (B, M, K) x (B, K, N) -> (B, M, N).
template <typename Real>
Tensor<Real> bmm(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(1)) {
    throw std::invalid_argument(cat("bmm: ", shape_str(a.shape()), " x ",
                                    shape_str(b.shape())));
  }
  int64_t bt = a.dim(0), m = a.dim(1), k = a.dim(2), n_cols = b.dim(2);
  std::vector<Real> v(size_t(bt * m * n_cols));
  for (int64_t i = 0; i < bt; i++) {
    detail::ConstMatMap<Real> A(a.data().data() + i * m * k, m, k);
    detail::ConstMatMap<Real> B(b.data().data() + i * k * n_cols, k, n_cols);
    detail::MatMap<Real> O(v.data() + i * m * n_cols, m, n_cols);
    O.noalias() = A * B;
  }
  auto out = Tensor<Real>::from_data({bt, m, n_cols}, std::move(v));
  if (detail::want_tape<Real>({&a, &b})) {
    out.make_slot();
    auto sa = a.slot(), sb = b.slot();
    auto pa = a.data_ptr(), pb = b.data_ptr();
    Tape<Real>::active()->record(
        "bmm", out,
        [sa, sb, pa, pb, bt, m, k, n_cols](const std::vector<Real>& g) {
          for (int64_t i = 0; i < bt; i++) {
            detail::ConstMatMap<Real> G(g.data() + i * m * n_cols, m, n_cols);
            if (sa) {
              auto& ga = detail::acc(sa, size_t(bt * m * k));
              detail::ConstMatMap<Real> B(pb->data() + i * k * n_cols, k,
                                          n_cols);
              detail::MatMap<Real>(ga.data() + i * m * k, m, k).noalias() +=
                  G * B.transpose();
            }
            if (sb) {
              auto& gb = detail::acc(sb, size_t(bt * k * n_cols));
              detail::ConstMatMap<Real> A(pa->data() + i * m * k, m, k);
              detail::MatMap<Real>(gb.data() + i * k * n_cols, k, n_cols)
                  .noalias() += A.transpose() * G;
            }
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

namespace detail {

// col(c*k + kk, t) = x_b(c, t*stride + kk - pad), zero outside.
template <typename Real>
void im2col(const Real* xb, int64_t c_in, int64_t l, int64_t k, int64_t stride,
            int64_t pad, int64_t l_out, Real* col) {
  for (int64_t c = 0; c < c_in; c++) {
    for (int64_t kk = 0; kk < k; kk++) {
      Real* row = col + (c * k + kk) * l_out;
      for (int64_t t = 0; t < l_out; t++) {
        int64_t src = t * stride + kk - pad;
        row[t] = (src >= 0 && src < l) ? xb[c * l + src] : Real(0);
      }
    }
  }
}

template <typename Real>
void col2im_add(const Real* col, int64_t c_in, int64_t l, int64_t k,
                int64_t stride, int64_t pad, int64_t l_out, Real* xb) {
  for (int64_t c = 0; c < c_in; c++) {
    for (int64_t kk = 0; kk < k; kk++) {
      const Real* row = col + (c * k + kk) * l_out;
      for (int64_t t = 0; t < l_out; t++) {
        int64_t dst = t * stride + kk - pad;
        if (dst >= 0 && dst < l) xb[c * l + dst] += row[t];
      }
    }
  }
}

}  // namespace detail

// x (B, C_in, L), w (C_out, C_in/groups, k), bias (C_out) -> (B, C_out, L_out)
// with L_out = (L + 2 pad - k) / stride + 1.
template <typename Real>
Tensor<Real> conv1d(const Tensor<Real>& x, const Tensor<Real>& w,
                    const Tensor<Real>& bias, int64_t stride, int64_t pad,
                    int64_t groups) {
  if (x.rank() != 3 || w.rank() != 3 || bias.rank() != 1) {
    throw std::invalid_argument(cat("conv1d: x ", shape_str(x.shape()), ", w ",
                                    shape_str(w.shape()), ", bias ",
                                    shape_str(bias.shape())));
  }
  int64_t b = x.dim(0), c_in = x.dim(1), l = x.dim(2);
  int64_t c_out = w.dim(0), c_in_g = w.dim(1), k = w.dim(2);
  if (groups < 1 || c_in % groups != 0 || c_out % groups != 0 ||
      c_in_g != c_in / groups || bias.dim(0) != c_out || stride < 1) {
    throw std::invalid_argument(cat("conv1d: incompatible x ",
                                    shape_str(x.shape()), ", w ",
                                    shape_str(w.shape()), ", groups ", groups));
  }
  int64_t l_out = (l + 2 * pad - k) / stride + 1;
  if (l + 2 * pad < k) {
    throw std::invalid_argument(cat("conv1d: input length ", l, " with pad ",
                                    pad, " is below kernel size ", k));
  }
  int64_t c_out_g = c_out / groups;

  std::vector<Real> col(size_t(c_in * k * l_out));
  std::vector<Real> v(size_t(b * c_out * l_out));
  const auto& dx = x.data();
  const auto& dw = w.data();
  const auto& db = bias.data();
  for (int64_t bi = 0; bi < b; bi++) {
    detail::im2col(dx.data() + bi * c_in * l, c_in, l, k, stride, pad, l_out,
                   col.data());
    for (int64_t gi = 0; gi < groups; gi++) {
      detail::ConstMatMap<Real> W(dw.data() + gi * c_out_g * c_in_g * k,
                                  c_out_g, c_in_g * k);
      detail::ConstMatMap<Real> C(col.data() + gi * c_in_g * k * l_out,
                                  c_in_g * k, l_out);
      detail::MatMap<Real> O(v.data() + (bi * c_out + gi * c_out_g) * l_out,
                             c_out_g, l_out);
      O.noalias() = W * C;
      for (int64_t co = 0; co < c_out_g; co++) {
        O.row(co).array() += db[size_t(gi * c_out_g + co)];
      }
    }
  }
  auto out = Tensor<Real>::from_data({b, c_out, l_out}, std::move(v));
  if (detail::want_tape<Real>({&x, &w, &bias})) {
    out.make_slot();
    auto sx = x.slot(), sw = w.slot(), sb = bias.slot();
    auto px = x.data_ptr(), pw = w.data_ptr();
    Tape<Real>::active()->record(
        "conv1d", out,
        [sx, sw, sb, px, pw, b, c_in, l, c_out, c_in_g, k, stride, pad, groups,
         l_out, c_out_g](const std::vector<Real>& g) {
          // im2col is recomputed per batch element rather than saved.
          std::vector<Real> col(size_t(c_in * k * l_out));
          std::vector<Real> dcol(size_t(c_in * k * l_out));
          for (int64_t bi = 0; bi < b; bi++) {
            detail::im2col(px->data() + bi * c_in * l, c_in, l, k, stride, pad,
                           l_out, col.data());
            for (int64_t gi = 0; gi < groups; gi++) {
              detail::ConstMatMap<Real> G(
                  g.data() + (bi * c_out + gi * c_out_g) * l_out, c_out_g,
                  l_out);
              if (sw) {
                auto& gw = detail::acc(sw, size_t(c_out * c_in_g * k));
                detail::ConstMatMap<Real> C(col.data() + gi * c_in_g * k * l_out,
                                            c_in_g * k, l_out);
                detail::MatMap<Real>(gw.data() + gi * c_out_g * c_in_g * k,
                                     c_out_g, c_in_g * k)
                    .noalias() += G * C.transpose();
              }
              if (sx) {
                detail::ConstMatMap<Real> W(pw->data() + gi * c_out_g * c_in_g * k,
                                            c_out_g, c_in_g * k);
                detail::MatMap<Real>(dcol.data() + gi * c_in_g * k * l_out,
                                     c_in_g * k, l_out)
                    .noalias() = W.transpose() * G;
              }
              if (sb) {
                auto& gb = detail::acc(sb, size_t(c_out));
                for (int64_t co = 0; co < c_out_g; co++) {
                  gb[size_t(gi * c_out_g + co)] += G.row(co).sum();
                }
              }
            }
            if (sx) {
              auto& gx = detail::acc(sx, size_t(b * c_in * l));
              detail::col2im_add(dcol.data(), c_in, l, k, stride, pad, l_out,
                                 gx.data() + bi * c_in * l);
            }
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

// Normalizes the last dim with biased variance, then applies gamma/beta.
template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gamma,
                        const Tensor<Real>& beta, Real eps = Real(1e-5)) {
  if (x.rank() < 1 || gamma.rank() != 1 || beta.rank() != 1 ||
      gamma.dim(0) != x.dim(-1) || beta.dim(0) != x.dim(-1)) {
    throw std::invalid_argument(cat("layer_norm: x ", shape_str(x.shape()),
                                    ", gamma ", shape_str(gamma.shape()),
                                    ", beta ", shape_str(beta.shape())));
  }
  int64_t d = x.dim(-1);
  int64_t rows = x.numel() / d;
  std::vector<Real> v(size_t(rows * d));
  std::vector<Real> xhat(size_t(rows * d));
  std::vector<Real> invstd(static_cast<size_t>(rows));
  const auto& dx = x.data();
  const auto& dg = gamma.data();
  const auto& dbta = beta.data();
  for (int64_t i = 0; i < rows; i++) {
    const Real* row = dx.data() + i * d;
    Real mu = 0;
    for (int64_t j = 0; j < d; j++) mu += row[j];
    mu /= Real(d);
    Real var = 0;
    for (int64_t j = 0; j < d; j++) var += (row[j] - mu) * (row[j] - mu);
    var /= Real(d);
    Real is = Real(1) / std::sqrt(var + eps);
    invstd[size_t(i)] = is;
    for (int64_t j = 0; j < d; j++) {
      Real xh = (row[j] - mu) * is;
      xhat[size_t(i * d + j)] = xh;
      v[size_t(i * d + j)] = dg[size_t(j)] * xh + dbta[size_t(j)];
    }
  }
  auto out = Tensor<Real>::from_data(x.shape(), std::move(v));
  if (detail::want_tape<Real>({&x, &gamma, &beta})) {
    out.make_slot();
    auto sx = x.slot(), sg = gamma.slot(), sb = beta.slot();
    auto ph = std::make_shared<std::vector<Real>>(std::move(xhat));
    auto pi = std::make_shared<std::vector<Real>>(std::move(invstd));
    auto pg = gamma.data_ptr();
    Tape<Real>::active()->record(
        "layer_norm", out,
        [sx, sg, sb, ph, pi, pg, rows, d](const std::vector<Real>& g) {
          for (int64_t i = 0; i < rows; i++) {
            const Real* gr = g.data() + i * d;
            const Real* xh = ph->data() + i * d;
            if (sg) {
              auto& gg = detail::acc(sg, size_t(d));
              for (int64_t j = 0; j < d; j++) gg[size_t(j)] += gr[j] * xh[j];
            }
            if (sb) {
              auto& gb = detail::acc(sb, size_t(d));
              for (int64_t j = 0; j < d; j++) gb[size_t(j)] += gr[j];
            }
            if (sx) {
              auto& gx = detail::acc(sx, size_t(rows * d));
              Real mean_h = 0, mean_hx = 0;
              for (int64_t j = 0; j < d; j++) {
                Real h = (*pg)[size_t(j)] * gr[j];
                mean_h += h;
                mean_hx += h * xh[j];
              }
              mean_h /= Real(d);
              mean_hx /= Real(d);
              Real is = (*pi)[size_t(i)];
              for (int64_t j = 0; j < d; j++) {
                Real h = (*pg)[size_t(j)] * gr[j];
                gx[size_t(i * d + j)] += is * (h - mean_h - xh[j] * mean_hx);
              }
            }
          }
        });
  }
  return out;
}

// x (B, C, L): each (batch, group) block of C/groups channels is normalized
// over channels and time together, then gamma/beta apply per channel.
template <typename Real>
Tensor<Real> group_norm(const Tensor<Real>& x, int64_t groups,
                        const Tensor<Real>& gamma, const Tensor<Real>& beta,
                        Real eps = Real(1e-5)) {
  if (x.rank() != 3 || gamma.rank() != 1 || beta.rank() != 1 ||
      gamma.dim(0) != x.dim(1) || beta.dim(0) != x.dim(1) || groups < 1 ||
      x.dim(1) % groups != 0) {
    throw std::invalid_argument(cat("group_norm: x ", shape_str(x.shape()),
                                    ", groups ", groups, ", gamma ",
                                    shape_str(gamma.shape())));
  }
  int64_t b = x.dim(0), c = x.dim(1), l = x.dim(2);
  int64_t cg = c / groups;
  int64_t block = cg * l;
  std::vector<Real> v(size_t(b * c * l));
  std::vector<Real> xhat(size_t(b * c * l));
  std::vector<Real> invstd(size_t(b * groups));
  const auto& dx = x.data();
  const auto& dg = gamma.data();
  const auto& dbta = beta.data();
  for (int64_t bi = 0; bi < b; bi++) {
    for (int64_t gi = 0; gi < groups; gi++) {
      const Real* blk = dx.data() + bi * c * l + gi * block;
      Real mu = 0;
      for (int64_t j = 0; j < block; j++) mu += blk[j];
      mu /= Real(block);
      Real var = 0;
      for (int64_t j = 0; j < block; j++) var += (blk[j] - mu) * (blk[j] - mu);
      var /= Real(block);
      Real is = Real(1) / std::sqrt(var + eps);
      invstd[size_t(bi * groups + gi)] = is;
      for (int64_t j = 0; j < block; j++) {
        int64_t ch = gi * cg + j / l;
        Real xh = (blk[j] - mu) * is;
        xhat[size_t(bi * c * l + gi * block + j)] = xh;
        v[size_t(bi * c * l + gi * block + j)] =
            dg[size_t(ch)] * xh + dbta[size_t(ch)];
      }
    }
  }
  auto out = Tensor<Real>::from_data(x.shape(), std::move(v));
  if (detail::want_tape<Real>({&x, &gamma, &beta})) {
    out.make_slot();
    auto sx = x.slot(), sg = gamma.slot(), sb = beta.slot();
    auto ph = std::make_shared<std::vector<Real>>(std::move(xhat));
    auto pi = std::make_shared<std::vector<Real>>(std::move(invstd));
    auto pg = gamma.data_ptr();
    Tape<Real>::active()->record(
        "group_norm", out,
        [sx, sg, sb, ph, pi, pg, b, c, l, groups, cg,
         block](const std::vector<Real>& g) {
          for (int64_t bi = 0; bi < b; bi++) {
            for (int64_t gi = 0; gi < groups; gi++) {
              int64_t base = bi * c * l + gi * block;
              const Real* gr = g.data() + base;
              const Real* xh = ph->data() + base;
              if (sg) {
                auto& gg = detail::acc(sg, size_t(c));
                for (int64_t j = 0; j < block; j++) {
                  gg[size_t(gi * cg + j / l)] += gr[j] * xh[j];
                }
              }
              if (sb) {
                auto& gb = detail::acc(sb, size_t(c));
                for (int64_t j = 0; j < block; j++) {
                  gb[size_t(gi * cg + j / l)] += gr[j];
                }
              }
              if (sx) {
                auto& gx = detail::acc(sx, size_t(b * c * l));
                Real mean_h = 0, mean_hx = 0;
                for (int64_t j = 0; j < block; j++) {
                  Real h = (*pg)[size_t(gi * cg + j / l)] * gr[j];
                  mean_h += h;
                  mean_hx += h * xh[j];
                }
                mean_h /= Real(block);
                mean_hx /= Real(block);
                Real is = (*pi)[size_t(bi * groups + gi)];
                for (int64_t j = 0; j < block; j++) {
                  Real h = (*pg)[size_t(gi * cg + j / l)] * gr[j];
                  gx[size_t(base + j)] += is * (h - mean_h - xh[j] * mean_hx);
                }
              }
            }
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Softmax family
// ---------------------------------------------------------------------------

namespace detail {

template <typename Real>
void softmax_rows(const Real* in, int64_t rows, int64_t d, Real* out) {
  for (int64_t i = 0; i < rows; i++) {
    const Real* r = in + i * d;
    Real* o = out + i * d;
    Real mx = r[0];
    for (int64_t j = 1; j < d; j++) mx = std::max(mx, r[j]);
    Real sum = 0;
    for (int64_t j = 0; j < d; j++) {
      o[j] = std::exp(r[j] - mx);
      sum += o[j];
    }
    Real inv = Real(1) / sum;
    for (int64_t j = 0; j < d; j++) o[j] *= inv;
  }
}

// dx_i = y_i (g_i - sum_j g_j y_j), scaled by `scale`.
template <typename Real>
void softmax_backward_rows(const Real* y, const Real* g, int64_t rows,
                           int64_t d, Real scale, Real* gx) {
  for (int64_t i = 0; i < rows; i++) {
    const Real* yr = y + i * d;
    const Real* gr = g + i * d;
    Real dot = 0;
    for (int64_t j = 0; j < d; j++) dot += gr[j] * yr[j];
    for (int64_t j = 0; j < d; j++) {
      gx[i * d + j] += scale * yr[j] * (gr[j] - dot);
    }
  }
}

}  // namespace detail

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x) {
  if (x.rank() < 1) throw std::invalid_argument("softmax: scalar input");
  int64_t d = x.dim(-1);
  int64_t rows = x.numel() / d;
  std::vector<Real> v(size_t(rows * d));
  detail::softmax_rows(x.data().data(), rows, d, v.data());
  auto out = Tensor<Real>::from_data(x.shape(), std::move(v));
  if (detail::want_tape<Real>({&x})) {
    out.make_slot();
    auto sx = x.slot();
    auto po = out.data_ptr();
    Tape<Real>::active()->record(
        "softmax", out, [sx, po, rows, d](const std::vector<Real>& g) {
          auto& gx = detail::acc(sx, size_t(rows * d));
          detail::softmax_backward_rows(po->data(), g.data(), rows, d, Real(1),
                                        gx.data());
        });
  }
  return out;
}

// (..., D) -> (...): log sum exp over the last dim, max-shifted.
template <typename Real>
Tensor<Real> logsumexp(const Tensor<Real>& x) {
  if (x.rank() < 1) throw std::invalid_argument("logsumexp: scalar input");
  int64_t d = x.dim(-1);
  int64_t rows = x.numel() / d;
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  std::vector<Real> v(static_cast<size_t>(rows));
  const auto& dx = x.data();
  for (int64_t i = 0; i < rows; i++) {
    const Real* r = dx.data() + i * d;
    Real mx = r[0];
    for (int64_t j = 1; j < d; j++) mx = std::max(mx, r[j]);
    Real sum = 0;
    for (int64_t j = 0; j < d; j++) sum += std::exp(r[j] - mx);
    v[size_t(i)] = mx + std::log(sum);
  }
  auto out = Tensor<Real>::from_data(out_shape, std::move(v));
  if (detail::want_tape<Real>({&x})) {
    out.make_slot();
    auto sx = x.slot();
    auto px = x.data_ptr();
    auto po = out.data_ptr();
    Tape<Real>::active()->record(
        "logsumexp", out, [sx, px, po, rows, d](const std::vector<Real>& g) {
          auto& gx = detail::acc(sx, size_t(rows * d));
          for (int64_t i = 0; i < rows; i++) {
            const Real* r = px->data() + i * d;
            Real lse = (*po)[size_t(i)];
            for (int64_t j = 0; j < d; j++) {
              gx[size_t(i * d + j)] += g[size_t(i)] * std::exp(r[j] - lse);
            }
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

// Inverted dropout with a caller-supplied 0/1 mask: x * mask / (1 - p).
// The op is fully deterministic; all randomness lives in the mask.
template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, const Tensor<Real>& mask, Real p) {
  detail::check_same_shape("dropout", x, mask);
  if (!(p >= Real(0) && p < Real(1))) {
    throw std::domain_error(cat("dropout: p = ", double(p),
                                " outside [0, 1)"));
  }
  Real scale = Real(1) / (Real(1) - p);
  size_t n = size_t(x.numel());
  std::vector<Real> v(n);
  const auto &dx = x.data(), &dm = mask.data();
  for (size_t i = 0; i < n; i++) v[i] = dx[i] * dm[i] * scale;
  auto out = Tensor<Real>::from_data(x.shape(), std::move(v));
  if (detail::want_tape<Real>({&x})) {
    out.make_slot();
    auto sx = x.slot();
    auto pm = mask.data_ptr();
    Tape<Real>::active()->record(
        "dropout", out, [sx, pm, scale, n](const std::vector<Real>& g) {
          auto& gx = detail::acc(sx, n);
          for (size_t i = 0; i < n; i++) gx[i] += g[i] * (*pm)[i] * scale;
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cosine similarity
// ---------------------------------------------------------------------------

// (..., D) x (..., D) -> (...): dot(a,b)/(|a||b|) over the last dim.
template <typename Real>
Tensor<Real> cosine_similarity(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::check_same_shape("cosine_similarity", a, b);
  if (a.rank() < 1 || a.dim(-1) < 1) {
    throw std::invalid_argument("cosine_similarity: empty vectors");
  }
  int64_t d = a.dim(-1);
  int64_t rows = a.numel() / d;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  std::vector<Real> v(static_cast<size_t>(rows));
  std::vector<Real> norms(size_t(rows * 2));
  const auto &da = a.data(), &db = b.data();
  for (int64_t i = 0; i < rows; i++) {
    const Real* ra = da.data() + i * d;
    const Real* rb = db.data() + i * d;
    Real dot = 0, na = 0, nb = 0;
    for (int64_t j = 0; j < d; j++) {
      dot += ra[j] * rb[j];
      na += ra[j] * ra[j];
      nb += rb[j] * rb[j];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na == Real(0)) {
      throw std::domain_error(cat("cosine_similarity: first argument has zero "
                                  "norm at row ",
                                  i));
    }
    if (nb == Real(0)) {
      throw std::domain_error(cat("cosine_similarity: second argument has "
                                  "zero norm at row ",
                                  i));
    }
    norms[size_t(2 * i)] = na;
    norms[size_t(2 * i + 1)] = nb;
    v[size_t(i)] = dot / (na * nb);
  }
  auto out = Tensor<Real>::from_data(out_shape, std::move(v));
  if (detail::want_tape<Real>({&a, &b})) {
    out.make_slot();
    auto sa = a.slot(), sb = b.slot();
    auto pa = a.data_ptr(), pb = b.data_ptr();
    auto po = out.data_ptr();
    auto pn = std::make_shared<std::vector<Real>>(std::move(norms));
    Tape<Real>::active()->record(
        "cosine_similarity", out,
        [sa, sb, pa, pb, po, pn, rows, d](const std::vector<Real>& g) {
          for (int64_t i = 0; i < rows; i++) {
            const Real* ra = pa->data() + i * d;
            const Real* rb = pb->data() + i * d;
            Real na = (*pn)[size_t(2 * i)], nb = (*pn)[size_t(2 * i + 1)];
            Real cosv = (*po)[size_t(i)];
            Real gi = g[size_t(i)];
            if (sa) {
              auto& ga = detail::acc(sa, size_t(rows * d));
              Real c1 = Real(1) / (na * nb), c2 = cosv / (na * na);
              for (int64_t j = 0; j < d; j++) {
                ga[size_t(i * d + j)] += gi * (rb[j] * c1 - ra[j] * c2);
              }
            }
            if (sb) {
              auto& gb = detail::acc(sb, size_t(rows * d));
              Real c1 = Real(1) / (na * nb), c2 = cosv / (nb * nb);
              for (int64_t j = 0; j < d; j++) {
                gb[size_t(i * d + j)] += gi * (ra[j] * c1 - rb[j] * c2);
              }
            }
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gumbel softmax with straight-through selection
// ---------------------------------------------------------------------------

template <typename Real>
struct GumbelOut {
  Tensor<Real> one_hot;  // hard selection (equals soft when hard = false)
  Tensor<Real> soft;     // softmax((logits + noise) / tau)
};

// Noise is supplied by the caller so that paired halves can replay it.
// Gradients through one_hot are routed through soft unchanged
// (straight-through), then through the softmax Jacobian scaled by 1/tau.
template <typename Real>
GumbelOut<Real> gumbel_softmax_st(const Tensor<Real>& logits, Real tau,
                                  const Tensor<Real>& noise, bool hard) {
  detail::check_same_shape("gumbel_softmax_st", logits, noise);
  if (!(tau > Real(0))) {
    throw std::domain_error(cat("gumbel_softmax_st: tau = ", double(tau),
                                " must be > 0"));
  }
  int64_t d = logits.dim(-1);
  int64_t rows = logits.numel() / d;
  Real inv_tau = Real(1) / tau;
  std::vector<Real> scaled(size_t(rows * d));
  const auto &dl = logits.data(), &dn = noise.data();
  for (size_t i = 0; i < size_t(rows * d); i++) {
    scaled[i] = (dl[i] + dn[i]) * inv_tau;
  }
  std::vector<Real> sv(size_t(rows * d));
  detail::softmax_rows(scaled.data(), rows, d, sv.data());
  auto soft = Tensor<Real>::from_data(logits.shape(), std::move(sv));
  if (detail::want_tape<Real>({&logits})) {
    soft.make_slot();
    auto sl = logits.slot();
    auto po = soft.data_ptr();
    Tape<Real>::active()->record(
        "gumbel_softmax", soft,
        [sl, po, rows, d, inv_tau](const std::vector<Real>& g) {
          auto& gl = detail::acc(sl, size_t(rows * d));
          detail::softmax_backward_rows(po->data(), g.data(), rows, d, inv_tau,
                                        gl.data());
        });
  }
  if (!hard) return {soft, soft};

  std::vector<Real> hv(size_t(rows * d), Real(0));
  const auto& ds = soft.data();
  for (int64_t i = 0; i < rows; i++) {
    const Real* r = ds.data() + i * d;
    int64_t best = 0;
    for (int64_t j = 1; j < d; j++) {
      if (r[j] > r[best]) best = j;
    }
    hv[size_t(i * d + best)] = Real(1);
  }
  auto one_hot = Tensor<Real>::from_data(logits.shape(), std::move(hv));
  if (detail::want_tape<Real>({&soft})) {
    one_hot.make_slot();
    auto ss = soft.slot();
    size_t n = size_t(rows * d);
    Tape<Real>::active()->record("straight_through", one_hot,
                                 [ss, n](const std::vector<Real>& g) {
                                   auto& gs = detail::acc(ss, n);
                                   for (size_t i = 0; i < n; i++) gs[i] += g[i];
                                 });
  }
  return {one_hot, soft};
}

// Row argmax over the last dim (ties to the lowest index). Not recorded.
template <typename Real>
std::vector<int64_t> argmax_last(const Tensor<Real>& x) {
  if (x.rank() < 1) throw std::invalid_argument("argmax_last: scalar input");
  int64_t d = x.dim(-1);
  int64_t rows = x.numel() / d;
  std::vector<int64_t> out(static_cast<size_t>(rows));
  const auto& dx = x.data();
  for (int64_t i = 0; i < rows; i++) {
    const Real* r = dx.data() + i * d;
    int64_t best = 0;
    for (int64_t j = 1; j < d; j++) {
      if (r[j] > r[best]) best = j;
    }
    out[size_t(i)] = best;
  }
  return out;
}

}  // namespace w2vs

#endif  // W2VS_TENSOR_H_
