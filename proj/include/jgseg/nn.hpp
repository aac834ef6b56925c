// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Small layer building blocks over the op layer.

#pragma once

#include <cmath>
#include <string>

#include "jgseg/conv.hpp"
#include "jgseg/param_store.hpp"

namespace jgseg::nn {

// He-style normal init for leaky-relu nets.
template <typename T>
Tensor<T> he_normal(SeededRng& rng, const Shape& shape, std::int64_t fan_in) {
  Tensor<T> t = normal_sample<T>(rng, shape);
  const T scale = static_cast<T>(std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] *= scale;
  return t;
}

template <typename T>
struct Dense {
  ad::Var<T> w;  // [out, in]
  ad::Var<T> b;  // [out]

  Dense() = default;
  Dense(ParameterStore<T>& ps, const std::string& prefix, const std::string& group, int in,
        int out, SeededRng& rng, T bias_init = T(0)) {
    w = ps.add(prefix + ".w", group, he_normal<T>(rng, {out, in}, in));
    b = ps.add(prefix + ".b", group, Tensor<T>::full({out}, bias_init));
  }

  ad::Var<T> forward(const ad::Var<T>& x) const {
    const int n = x.shape()[0];
    return ad::add(ad::matmul(x, ad::transpose(w)), ad::bcast_rows(b, n));
  }
};

template <typename T>
struct Conv {
  ad::Var<T> w;  // [cout, cin, k, k]
  ad::Var<T> b;  // [cout]
  ad::ConvSpec spec;

  Conv() = default;
  Conv(ParameterStore<T>& ps, const std::string& prefix, const std::string& group, int cin,
       int cout, int k, ad::ConvSpec cs, SeededRng& rng, bool zero_init = false) {
    spec = cs;
    Tensor<T> init = zero_init ? Tensor<T>({cout, cin, k, k})
                               : he_normal<T>(rng, {cout, cin, k, k},
                                              static_cast<std::int64_t>(cin) * k * k);
    w = ps.add(prefix + ".w", group, std::move(init));
    b = ps.add(prefix + ".b", group, Tensor<T>({cout}));
  }

  ad::Var<T> forward(const ad::Var<T>& x) const {
    ad::Var<T> y = ad::conv2d(x, w, spec);
    return ad::add(y, ad::bcast_c(b, y.shape()[0], y.shape()[2], y.shape()[3]));
  }
};

// Per-channel RMS normalization over spatial dims: x / sqrt(mean_hw(x^2) + eps).
template <typename T>
ad::Var<T> rms_norm_hw(const ad::Var<T>& x, T eps = T(1e-8)) {
  const int h = x.shape()[2], w = x.shape()[3];
  ad::Var<T> ms = ad::mul_scalar(ad::sum_hw(ad::mul(x, x)), T(1) / static_cast<T>(h) / w);
  ad::Var<T> inv = ad::rsqrt(ad::add_scalar(ms, eps));
  return ad::mul(x, ad::bcast_hw(inv, h, w));
}

// Mean squared difference over all elements.
template <typename T>
ad::Var<T> mse(const ad::Var<T>& a, const ad::Var<T>& b) {
  ad::Var<T> d = ad::sub(a, b);
  return ad::mean_all(ad::mul(d, d));
}

// Per-pixel channel softmax of [N,C,H,W] logits, numerically stabilized.
template <typename T>
ad::Var<T> softmax_c(const ad::Var<T>& logits) {
  const int n = logits.shape()[0], c = logits.shape()[1], h = logits.shape()[2],
            w = logits.shape()[3];
  // Shift by the per-pixel max (a constant: softmax is shift-invariant).
  Tensor<T> mx({n, 1, h, w});
  const T* p = logits.value().data();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int i = 0; i < n; ++i)
    for (std::int64_t k = 0; k < hw; ++k) {
      T m = p[(static_cast<std::int64_t>(i) * c) * hw + k];
      for (int j = 1; j < c; ++j)
        m = std::max(m, p[(static_cast<std::int64_t>(i) * c + j) * hw + k]);
      mx[i * hw + k] = m;
    }
  ad::Var<T> shifted = ad::sub(logits, ad::bcast_cmap(ad::constant(std::move(mx)), c));
  ad::Var<T> e = ad::exp(shifted);
  return ad::div(e, ad::bcast_cmap(ad::sum_c(e), c));
}

// Per-pixel log-softmax, same stabilization.
template <typename T>
ad::Var<T> log_softmax_c(const ad::Var<T>& logits) {
  const int n = logits.shape()[0], c = logits.shape()[1], h = logits.shape()[2],
            w = logits.shape()[3];
  Tensor<T> mx({n, 1, h, w});
  const T* p = logits.value().data();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int i = 0; i < n; ++i)
    for (std::int64_t k = 0; k < hw; ++k) {
      T m = p[(static_cast<std::int64_t>(i) * c) * hw + k];
      for (int j = 1; j < c; ++j)
        m = std::max(m, p[(static_cast<std::int64_t>(i) * c + j) * hw + k]);
      mx[i * hw + k] = m;
    }
  ad::Var<T> shifted = ad::sub(logits, ad::bcast_cmap(ad::constant(std::move(mx)), c));
  ad::Var<T> lse = ad::log(ad::sum_c(ad::exp(shifted)));
  return ad::sub(shifted, ad::bcast_cmap(lse, c));
}

// One-hot [N,C,H,W] from integer labels [N,H,W].
template <typename T>
Tensor<T> one_hot(const Tensor<int>& labels, int c) {
  if (labels.rank() != 3) throw InvalidArgument("one_hot expects [N,H,W] labels");
  const int n = labels.dim(0), h = labels.dim(1), w = labels.dim(2);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor<T> out({n, c, h, w});
  for (int i = 0; i < n; ++i)
    for (std::int64_t k = 0; k < hw; ++k) {
      const int lab = labels[i * hw + k];
      if (lab < 0 || lab >= c)
        throw InvalidArgument("one_hot: label " + std::to_string(lab) + " out of range [0," +
                              std::to_string(c) + ")");
      out[(static_cast<std::int64_t>(i) * c + lab) * hw + k] = T(1);
    }
  return out;
}

// Argmax over the channel dim: [N,C,H,W] -> int [N,H,W].
template <typename T>
Tensor<int> argmax_c(const Tensor<T>& logits) {
  if (logits.rank() != 4) throw InvalidArgument("argmax_c expects [N,C,H,W]");
  const int n = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor<int> out({n, h, w});
  for (int i = 0; i < n; ++i)
    for (std::int64_t k = 0; k < hw; ++k) {
      int best = 0;
      T bv = logits[(static_cast<std::int64_t>(i) * c) * hw + k];
      for (int j = 1; j < c; ++j) {
        const T v = logits[(static_cast<std::int64_t>(i) * c + j) * hw + k];
        if (v > bv) {
          bv = v;
          best = j;
        }
      }
      out[i * hw + k] = best;
    }
  return out;
}

}  // namespace jgseg::nn
