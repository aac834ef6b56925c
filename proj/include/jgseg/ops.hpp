// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor ops. Reductions and broadcasts come in adjoint pairs
// so every backward is again built from ops in this file.

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <utility>
#include <vector>

#include "jgseg/autodiff.hpp"

namespace jgseg::ad {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

constexpr std::int64_t kParallelCutoff = 1 << 16;

template <typename F>
void ew_loop(std::int64_t n, F&& f) {
  if (n >= kParallelCutoff) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) f(i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) f(i);
  }
}

template <typename T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw InvalidArgument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
}

template <typename T>
void check_rank(const Var<T>& x, int rank, const char* op) {
  if (x.value().rank() != rank)
    throw InvalidArgument(std::string(op) + ": expected rank " + std::to_string(rank) +
                          ", got shape " + shape_str(x.shape()));
}

}  // namespace detail

template <typename T>
Var<T> constant(Tensor<T> t) {
  return Var<T>(std::move(t), false);
}

template <typename T>
Var<T> scalar_const(T v) {
  return Var<T>(Tensor<T>::scalar(v), false);
}

// ---------------------------------------------------------------------------
// Elementwise binary
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  T* po = out.data();
  detail::ew_loop(out.numel(), [&](std::int64_t i) { po[i] = pa[i] + pb[i]; });
  return make_op<T>(std::move(out), {a, b},
                    [](const Var<T>& g) -> std::vector<Var<T>> { return {g, g}; });
}

template <typename T>
Var<T> neg(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.value().data();
  T* po = out.data();
  detail::ew_loop(out.numel(), [&](std::int64_t i) { po[i] = -px[i]; });
  return make_op<T>(std::move(out), {x},
                    [](const Var<T>& g) -> std::vector<Var<T>> { return {neg(g)}; });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  T* po = out.data();
  detail::ew_loop(out.numel(), [&](std::int64_t i) { po[i] = pa[i] - pb[i]; });
  return make_op<T>(std::move(out), {a, b},
                    [](const Var<T>& g) -> std::vector<Var<T>> { return {g, neg(g)}; });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  T* po = out.data();
  detail::ew_loop(out.numel(), [&](std::int64_t i) { po[i] = pa[i] * pb[i]; });
  return make_op<T>(std::move(out), {a, b},
                    [a, b](const Var<T>& g) -> std::vector<Var<T>> {
                      return {mul(g, b), mul(g, a)};
                    });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape(a, b, "div");
  Tensor<T> out(a.shape());
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  T* po = out.data();
  detail::ew_loop(out.numel(), [&](std::int64_t i) { po[i] = pa[i] / pb[i]; });
  return make_op<T>(std::move(out), {a, b},
                    [a, b](const Var<T>& g) -> std::vector<Var<T>> {
                      Var<T> da = div(g, b);
                      Var<T> db = neg(div(mul(g, a), mul(b, b)));
                      return {da, db};
                    });
}

// ---------------------------------------------------------------------------
// Elementwise with a compile-time-constant scalar
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add_scalar(const Var<T>& x, T c) {
  Tensor<T> out(x.shape());
  const T* px = x.value().data();
  T* po = out.data();
  detail::ew_loop(out.numel(), [&](std::int64_t i) { po[i] = px[i] + c; });
  return make_op<T>(std::move(out), {x},
                    [](const Var<T>& g) -> std::vector<Var<T>> { return {g}; });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& x, T c) {
  Tensor<T> out(x.shape());
  const T* px = x.value().data();
  T* po = out.data();
  detail::ew_loop(out.numel(), [&](std::int64_t i) { po[i] = px[i] * c; });
  return make_op<T>(std::move(out), {x},
                    [c](const Var<T>& g) -> std::vector<Var<T>> { return {mul_scalar(g, c)}; });
}

// ---------------------------------------------------------------------------
// Elementwise unary
// ---------------------------------------------------------------------------

template <typename T>
Var<T> exp(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.value().data();
  T* po = out.data();
  detail::ew_loop(out.numel(), [&](std::int64_t i) { po[i] = std::exp(px[i]); });
  return make_op<T>(std::move(out), {x},
                    [x](const Var<T>& g) -> std::vector<Var<T>> { return {mul(g, exp(x))}; });
}

template <typename T>
Var<T> log(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.value().data();
  T* po = out.data();
  detail::ew_loop(out.numel(), [&](std::int64_t i) { po[i] = std::log(px[i]); });
  return make_op<T>(std::move(out), {x},
                    [x](const Var<T>& g) -> std::vector<Var<T>> { return {div(g, x)}; });
}

template <typename T>
Var<T> sqrt(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.value().data();
  T* po = out.data();
  detail::ew_loop(out.numel(), [&](std::int64_t i) { po[i] = std::sqrt(px[i]); });
  return make_op<T>(std::move(out), {x}, [x](const Var<T>& g) -> std::vector<Var<T>> {
    return {mul_scalar(div(g, sqrt(x)), T(0.5))};
  });
}

template <typename T>
Var<T> rsqrt(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.value().data();
  T* po = out.data();
  detail::ew_loop(out.numel(), [&](std::int64_t i) { po[i] = T(1) / std::sqrt(px[i]); });
  return make_op<T>(std::move(out), {x}, [x](const Var<T>& g) -> std::vector<Var<T>> {
    Var<T> r = rsqrt(x);
    return {mul_scalar(mul(g, mul(r, mul(r, r))), T(-0.5))};
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.value().data();
  T* po = out.data();
  detail::ew_loop(out.numel(), [&](std::int64_t i) {
    const T v = px[i];
    po[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  });
  return make_op<T>(std::move(out), {x}, [x](const Var<T>& g) -> std::vector<Var<T>> {
    Var<T> s = sigmoid(x);
    return {mul(g, mul(s, add_scalar(neg(s), T(1))))};
  });
}

// log(1 + e^x), numerically stable.
template <typename T>
Var<T> softplus(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.value().data();
  T* po = out.data();
  detail::ew_loop(out.numel(), [&](std::int64_t i) {
    const T v = px[i];
    po[i] = std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
  });
  return make_op<T>(std::move(out), {x}, [x](const Var<T>& g) -> std::vector<Var<T>> {
    return {mul(g, sigmoid(x))};
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  Tensor<T> out(x.shape());
  Tensor<T> mask(x.shape());
  const T* px = x.value().data();
  T* po = out.data();
  T* pm = mask.data();
  detail::ew_loop(out.numel(), [&](std::int64_t i) {
    const bool pos = px[i] > T(0);
    pm[i] = pos ? T(1) : slope;
    po[i] = px[i] * pm[i];
  });
  // Piecewise-linear: the mask is locally constant, so treating it as a
  // constant in backward is exact (also at second order, a.e.).
  Var<T> mask_c = constant(std::move(mask));
  return make_op<T>(std::move(out), {x}, [mask_c](const Var<T>& g) -> std::vector<Var<T>> {
    return {mul(g, mask_c)};
  });
}

template <typename T>
Var<T> abs(const Var<T>& x) {
  Tensor<T> out(x.shape());
  Tensor<T> sign(x.shape());
  const T* px = x.value().data();
  T* po = out.data();
  T* ps = sign.data();
  detail::ew_loop(out.numel(), [&](std::int64_t i) {
    ps[i] = px[i] >= T(0) ? T(1) : T(-1);
    po[i] = px[i] * ps[i];
  });
  Var<T> sign_c = constant(std::move(sign));
  return make_op<T>(std::move(out), {x}, [sign_c](const Var<T>& g) -> std::vector<Var<T>> {
    return {mul(g, sign_c)};
  });
}

template <typename T>
Var<T> square(const Var<T>& x) {
  return mul(x, x);
}

// ---------------------------------------------------------------------------
// Shape
// ---------------------------------------------------------------------------

template <typename T>
Var<T> reshape(const Var<T>& x, Shape s) {
  Shape orig = x.shape();
  return make_op<T>(x.value().reshaped(std::move(s)), {x},
                    [orig](const Var<T>& g) -> std::vector<Var<T>> {
                      return {reshape(g, orig)};
                    });
}

// ---------------------------------------------------------------------------
// Matrix ops (2-D)
// ---------------------------------------------------------------------------

template <typename T>
Var<T> transpose(const Var<T>& x) {
  detail::check_rank(x, 2, "transpose");
  const int m = x.shape()[0], n = x.shape()[1];
  Tensor<T> out({n, m});
  Eigen::Map<const RowMat<T>> xm(x.value().data(), m, n);
  Eigen::Map<RowMat<T>> om(out.data(), n, m);
  om = xm.transpose();
  return make_op<T>(std::move(out), {x},
                    [](const Var<T>& g) -> std::vector<Var<T>> { return {transpose(g)}; });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::check_rank(a, 2, "matmul");
  detail::check_rank(b, 2, "matmul");
  const int m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2)
    throw InvalidArgument("matmul: inner dims " + shape_str(a.shape()) + " x " +
                          shape_str(b.shape()));
  Tensor<T> out({m, n});
  Eigen::Map<const RowMat<T>> am(a.value().data(), m, k);
  Eigen::Map<const RowMat<T>> bm(b.value().data(), k, n);
  Eigen::Map<RowMat<T>> om(out.data(), m, n);
  om.noalias() = am * bm;
  return make_op<T>(std::move(out), {a, b},
                    [a, b](const Var<T>& g) -> std::vector<Var<T>> {
                      return {matmul(g, transpose(b)), matmul(transpose(a), g)};
                    });
}

// ---------------------------------------------------------------------------
// Reductions and their broadcast adjoints
// ---------------------------------------------------------------------------

template <typename T>
Var<T> broadcast_all(const Var<T>& s, const Shape& shape);

template <typename T>
Var<T> sum_all(const Var<T>& x) {
  const T* px = x.value().data();
  T acc = T(0);
  for (std::int64_t i = 0; i < x.numel(); ++i) acc += px[i];
  Shape orig = x.shape();
  return make_op<T>(Tensor<T>::scalar(acc), {x},
                    [orig](const Var<T>& g) -> std::vector<Var<T>> {
                      return {broadcast_all(g, orig)};
                    });
}

template <typename T>
Var<T> broadcast_all(const Var<T>& s, const Shape& shape) {
  if (s.numel() != 1) throw InvalidArgument("broadcast_all expects scalar");
  Tensor<T> out = Tensor<T>::full(shape, s.value()[0]);
  return make_op<T>(std::move(out), {s},
                    [](const Var<T>& g) -> std::vector<Var<T>> { return {sum_all(g)}; });
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
  return mul_scalar(sum_all(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Var<T> bcast_rows(const Var<T>& b, int n);

// [N,D] -> [D]
template <typename T>
Var<T> sum_rows(const Var<T>& x) {
  detail::check_rank(x, 2, "sum_rows");
  const int n = x.shape()[0], d = x.shape()[1];
  Tensor<T> out({d});
  const T* px = x.value().data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out[j] += px[static_cast<std::int64_t>(i) * d + j];
  return make_op<T>(std::move(out), {x},
                    [n](const Var<T>& g) -> std::vector<Var<T>> { return {bcast_rows(g, n)}; });
}

// [D] -> [N,D]
template <typename T>
Var<T> bcast_rows(const Var<T>& b, int n) {
  detail::check_rank(b, 1, "bcast_rows");
  const int d = b.shape()[0];
  Tensor<T> out({n, d});
  const T* pb = b.value().data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out[static_cast<std::int64_t>(i) * d + j] = pb[j];
  return make_op<T>(std::move(out), {b},
                    [](const Var<T>& g) -> std::vector<Var<T>> { return {sum_rows(g)}; });
}

template <typename T>
Var<T> bcast_cols(const Var<T>& v, int d);

// [N,D] -> [N]
template <typename T>
Var<T> sum_cols(const Var<T>& x) {
  detail::check_rank(x, 2, "sum_cols");
  const int n = x.shape()[0], d = x.shape()[1];
  Tensor<T> out({n});
  const T* px = x.value().data();
  for (int i = 0; i < n; ++i) {
    T acc = T(0);
    for (int j = 0; j < d; ++j) acc += px[static_cast<std::int64_t>(i) * d + j];
    out[i] = acc;
  }
  return make_op<T>(std::move(out), {x},
                    [d](const Var<T>& g) -> std::vector<Var<T>> { return {bcast_cols(g, d)}; });
}

// [N] -> [N,D]
template <typename T>
Var<T> bcast_cols(const Var<T>& v, int d) {
  detail::check_rank(v, 1, "bcast_cols");
  const int n = v.shape()[0];
  Tensor<T> out({n, d});
  const T* pv = v.value().data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out[static_cast<std::int64_t>(i) * d + j] = pv[i];
  return make_op<T>(std::move(out), {v},
                    [](const Var<T>& g) -> std::vector<Var<T>> { return {sum_cols(g)}; });
}

template <typename T>
Var<T> bcast_hw(const Var<T>& s, int h, int w);

// [N,C,H,W] -> [N,C]
template <typename T>
Var<T> sum_hw(const Var<T>& x) {
  detail::check_rank(x, 4, "sum_hw");
  const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  Tensor<T> out({n, c});
  const T* px = x.value().data();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  detail::ew_loop(static_cast<std::int64_t>(n) * c, [&](std::int64_t nc) {
    const T* p = px + nc * hw;
    T acc = T(0);
    for (std::int64_t i = 0; i < hw; ++i) acc += p[i];
    out[nc] = acc;
  });
  return make_op<T>(std::move(out), {x}, [h, w](const Var<T>& g) -> std::vector<Var<T>> {
    return {bcast_hw(g, h, w)};
  });
}

// [N,C] -> [N,C,H,W]
template <typename T>
Var<T> bcast_hw(const Var<T>& s, int h, int w) {
  detail::check_rank(s, 2, "bcast_hw");
  const int n = s.shape()[0], c = s.shape()[1];
  Tensor<T> out({n, c, h, w});
  const T* ps = s.value().data();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  detail::ew_loop(static_cast<std::int64_t>(n) * c, [&](std::int64_t nc) {
    T* p = out.data() + nc * hw;
    const T v = ps[nc];
    for (std::int64_t i = 0; i < hw; ++i) p[i] = v;
  });
  return make_op<T>(std::move(out), {s},
                    [](const Var<T>& g) -> std::vector<Var<T>> { return {sum_hw(g)}; });
}

template <typename T>
Var<T> bcast_c(const Var<T>& b, int n, int h, int w);

// [N,C,H,W] -> [C]
template <typename T>
Var<T> sum_nhw(const Var<T>& x) {
  detail::check_rank(x, 4, "sum_nhw");
  const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  Tensor<T> out({c});
  const T* px = x.value().data();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const T* p = px + (static_cast<std::int64_t>(i) * c + j) * hw;
      T acc = T(0);
      for (std::int64_t k = 0; k < hw; ++k) acc += p[k];
      out[j] += acc;
    }
  return make_op<T>(std::move(out), {x}, [n, h, w](const Var<T>& g) -> std::vector<Var<T>> {
    return {bcast_c(g, n, h, w)};
  });
}

// [C] -> [N,C,H,W]
template <typename T>
Var<T> bcast_c(const Var<T>& b, int n, int h, int w) {
  detail::check_rank(b, 1, "bcast_c");
  const int c = b.shape()[0];
  Tensor<T> out({n, c, h, w});
  const T* pb = b.value().data();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  detail::ew_loop(static_cast<std::int64_t>(n) * c, [&](std::int64_t nc) {
    T* p = out.data() + nc * hw;
    const T v = pb[nc % c];
    for (std::int64_t i = 0; i < hw; ++i) p[i] = v;
  });
  return make_op<T>(std::move(out), {b},
                    [](const Var<T>& g) -> std::vector<Var<T>> { return {sum_nhw(g)}; });
}

template <typename T>
Var<T> bcast_cmap(const Var<T>& m, int c);

// [N,C,H,W] -> [N,1,H,W]
template <typename T>
Var<T> sum_c(const Var<T>& x) {
  detail::check_rank(x, 4, "sum_c");
  const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  Tensor<T> out({n, 1, h, w});
  const T* px = x.value().data();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  detail::ew_loop(n, [&](std::int64_t i) {
    T* po = out.data() + i * hw;
    for (int j = 0; j < c; ++j) {
      const T* p = px + (i * c + j) * hw;
      for (std::int64_t k = 0; k < hw; ++k) po[k] += p[k];
    }
  });
  return make_op<T>(std::move(out), {x},
                    [c](const Var<T>& g) -> std::vector<Var<T>> { return {bcast_cmap(g, c)}; });
}

// [N,1,H,W] -> [N,C,H,W]
template <typename T>
Var<T> bcast_cmap(const Var<T>& m, int c) {
  detail::check_rank(m, 4, "bcast_cmap");
  if (m.shape()[1] != 1) throw InvalidArgument("bcast_cmap expects channel dim 1");
  const int n = m.shape()[0], h = m.shape()[2], w = m.shape()[3];
  Tensor<T> out({n, c, h, w});
  const T* pm = m.value().data();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  detail::ew_loop(static_cast<std::int64_t>(n) * c, [&](std::int64_t nc) {
    const std::int64_t i = nc / c;
    T* p = out.data() + nc * hw;
    const T* q = pm + i * hw;
    for (std::int64_t k = 0; k < hw; ++k) p[k] = q[k];
  });
  return make_op<T>(std::move(out), {m},
                    [](const Var<T>& g) -> std::vector<Var<T>> { return {sum_c(g)}; });
}

// ---------------------------------------------------------------------------
// Channel concat / slice / embed
// ---------------------------------------------------------------------------

template <typename T>
Var<T> slice_c(const Var<T>& x, int c0, int len);

template <typename T>
Var<T> embed_c(const Var<T>& x, int c0, int c_total);

template <typename T>
Var<T> concat_c(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw InvalidArgument("concat_c: empty input list");
  detail::check_rank(xs[0], 4, "concat_c");
  const int n = xs[0].shape()[0], h = xs[0].shape()[2], w = xs[0].shape()[3];
  int c_total = 0;
  for (const auto& x : xs) {
    detail::check_rank(x, 4, "concat_c");
    if (x.shape()[0] != n || x.shape()[2] != h || x.shape()[3] != w)
      throw InvalidArgument("concat_c: incompatible shapes");
    c_total += x.shape()[1];
  }
  Tensor<T> out({n, c_total, h, w});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  int c_off = 0;
  for (const auto& x : xs) {
    const int c = x.shape()[1];
    const T* px = x.value().data();
    for (int i = 0; i < n; ++i) {
      T* po = out.data() + ((static_cast<std::int64_t>(i) * c_total) + c_off) * hw;
      const T* p = px + static_cast<std::int64_t>(i) * c * hw;
      std::copy(p, p + static_cast<std::int64_t>(c) * hw, po);
    }
    c_off += c;
  }
  std::vector<int> offsets, lens;
  c_off = 0;
  for (const auto& x : xs) {
    offsets.push_back(c_off);
    lens.push_back(x.shape()[1]);
    c_off += x.shape()[1];
  }
  return make_op<T>(std::move(out), xs,
                    [offsets, lens](const Var<T>& g) -> std::vector<Var<T>> {
                      std::vector<Var<T>> gs;
                      for (size_t i = 0; i < offsets.size(); ++i)
                        gs.push_back(slice_c(g, offsets[i], lens[i]));
                      return gs;
                    });
}

template <typename T>
Var<T> slice_c(const Var<T>& x, int c0, int len) {
  detail::check_rank(x, 4, "slice_c");
  const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (c0 < 0 || c0 + len > c) throw InvalidArgument("slice_c: range out of bounds");
  Tensor<T> out({n, len, h, w});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const T* px = x.value().data();
  for (int i = 0; i < n; ++i) {
    const T* p = px + (static_cast<std::int64_t>(i) * c + c0) * hw;
    T* po = out.data() + static_cast<std::int64_t>(i) * len * hw;
    std::copy(p, p + static_cast<std::int64_t>(len) * hw, po);
  }
  return make_op<T>(std::move(out), {x},
                    [c0, c](const Var<T>& g) -> std::vector<Var<T>> {
                      return {embed_c(g, c0, c)};
                    });
}

// Places x into channels [c0, c0+len) of a zero tensor with c_total channels.
template <typename T>
Var<T> embed_c(const Var<T>& x, int c0, int c_total) {
  detail::check_rank(x, 4, "embed_c");
  const int n = x.shape()[0], len = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (c0 < 0 || c0 + len > c_total) throw InvalidArgument("embed_c: range out of bounds");
  Tensor<T> out({n, c_total, h, w});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const T* px = x.value().data();
  for (int i = 0; i < n; ++i) {
    const T* p = px + static_cast<std::int64_t>(i) * len * hw;
    T* po = out.data() + (static_cast<std::int64_t>(i) * c_total + c0) * hw;
    std::copy(p, p + static_cast<std::int64_t>(len) * hw, po);
  }
  const int len_c = len;
  return make_op<T>(std::move(out), {x},
                    [c0, len_c](const Var<T>& g) -> std::vector<Var<T>> {
                      return {slice_c(g, c0, len_c)};
                    });
}

template <typename T>
Var<T> embed_batch(const Var<T>& x, int n0, int n_total);

// Rows [n0, n0+len) along the leading dim.
template <typename T>
Var<T> slice_batch(const Var<T>& x, int n0, int len) {
  if (x.value().rank() < 1) throw InvalidArgument("slice_batch: rank >= 1 expected");
  const int n = x.shape()[0];
  if (n0 < 0 || n0 + len > n) throw InvalidArgument("slice_batch: range out of bounds");
  const std::int64_t stride = x.numel() / n;
  Shape out_shape = x.shape();
  out_shape[0] = len;
  Tensor<T> out(out_shape);
  std::copy(x.value().data() + n0 * stride, x.value().data() + (n0 + len) * stride, out.data());
  return make_op<T>(std::move(out), {x},
                    [n0, n](const Var<T>& g) -> std::vector<Var<T>> {
                      return {embed_batch(g, n0, n)};
                    });
}

// Places x into rows [n0, n0+len) of a zero tensor with n_total rows.
template <typename T>
Var<T> embed_batch(const Var<T>& x, int n0, int n_total) {
  const int len = x.shape()[0];
  if (n0 < 0 || n0 + len > n_total) throw InvalidArgument("embed_batch: range out of bounds");
  const std::int64_t stride = x.numel() / len;
  Shape out_shape = x.shape();
  out_shape[0] = n_total;
  Tensor<T> out(out_shape);
  std::copy(x.value().data(), x.value().data() + x.numel(), out.data() + n0 * stride);
  return make_op<T>(std::move(out), {x},
                    [n0, len](const Var<T>& g) -> std::vector<Var<T>> {
                      return {slice_batch(g, n0, len)};
                    });
}

// ---------------------------------------------------------------------------
// Label gather/scatter (labels are constants)
// ---------------------------------------------------------------------------

template <typename T>
Var<T> scatter_label(const Var<T>& g, const Tensor<int>& labels, int c);

// out[n,h,w] = x[n, labels[n,h,w], h, w]
template <typename T>
Var<T> select_label(const Var<T>& x, const Tensor<int>& labels) {
  detail::check_rank(x, 4, "select_label");
  const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (labels.shape() != Shape{n, h, w})
    throw InvalidArgument("select_label: labels shape " + shape_str(labels.shape()) +
                          " does not match logits " + shape_str(x.shape()));
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor<T> out({n, h, w});
  const T* px = x.value().data();
  for (int i = 0; i < n; ++i)
    for (std::int64_t k = 0; k < hw; ++k) {
      const int lab = labels[i * hw + k];
      if (lab < 0 || lab >= c)
        throw InvalidArgument("select_label: label " + std::to_string(lab) +
                              " out of range [0," + std::to_string(c) + ")");
      out[i * hw + k] = px[(static_cast<std::int64_t>(i) * c + lab) * hw + k];
    }
  Tensor<int> labs = labels;
  return make_op<T>(std::move(out), {x},
                    [labs, c](const Var<T>& g) -> std::vector<Var<T>> {
                      return {scatter_label(g, labs, c)};
                    });
}

// out[n, labels[n,h,w], h, w] = g[n,h,w]; zero elsewhere.
template <typename T>
Var<T> scatter_label(const Var<T>& g, const Tensor<int>& labels, int c) {
  detail::check_rank(g, 3, "scatter_label");
  const int n = g.shape()[0], h = g.shape()[1], w = g.shape()[2];
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor<T> out({n, c, h, w});
  const T* pg = g.value().data();
  for (int i = 0; i < n; ++i)
    for (std::int64_t k = 0; k < hw; ++k) {
      const int lab = labels[i * hw + k];
      out[(static_cast<std::int64_t>(i) * c + lab) * hw + k] = pg[i * hw + k];
    }
  Tensor<int> labs = labels;
  return make_op<T>(std::move(out), {g},
                    [labs](const Var<T>& gg) -> std::vector<Var<T>> {
                      return {select_label(gg, labs)};
                    });
}

// ---------------------------------------------------------------------------
// Operator sugar
// ---------------------------------------------------------------------------

template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) {
  return add(a, b);
}
template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) {
  return sub(a, b);
}
template <typename T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) {
  return mul(a, b);
}

}  // namespace jgseg::ad
