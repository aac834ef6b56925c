// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Convolution, pooling and resampling ops on [N,C,H,W] tensors.
//
// conv2d, conv2d_input_grad and conv2d_weight_grad are the three
// contractions of one trilinear form, so each one's backward is expressed
// through the other two and gradients stay differentiable to any order.
// Kernels are im2col + GEMM, parallelized over the batch; weight gradients
// are reduced in sample order so results do not depend on thread count.

#pragma once

#include <Eigen/Core>
#include <vector>

#include "jgseg/ops.hpp"

namespace jgseg::ad {

struct ConvSpec {
  int stride = 1;
  int pad = 0;
};

namespace detail {

inline int conv_out_size(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
std::vector<T>& conv_scratch() {
  thread_local std::vector<T> buf;
  return buf;
}

// cols has rows (ci*kh*kw), columns (oh*ow).
template <typename T>
void im2col(const T* x, int c, int h, int w, int kh, int kw, int stride, int pad,
            int oh, int ow, T* cols) {
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* row = cols + ((static_cast<std::int64_t>(ci) * kh + ki) * kw + kj) *
                            (static_cast<std::int64_t>(oh) * ow);
        for (int i = 0; i < oh; ++i) {
          const int ih = i * stride - pad + ki;
          if (ih < 0 || ih >= h) {
            std::fill(row + static_cast<std::int64_t>(i) * ow,
                      row + static_cast<std::int64_t>(i + 1) * ow, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::int64_t>(ci) * h + ih) * w;
          T* dst = row + static_cast<std::int64_t>(i) * ow;
          for (int j = 0; j < ow; ++j) {
            const int iw = j * stride - pad + kj;
            dst[j] = (iw >= 0 && iw < w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int c, int h, int w, int kh, int kw, int stride, int pad,
                int oh, int ow, T* x) {
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* row = cols + ((static_cast<std::int64_t>(ci) * kh + ki) * kw + kj) *
                                  (static_cast<std::int64_t>(oh) * ow);
        for (int i = 0; i < oh; ++i) {
          const int ih = i * stride - pad + ki;
          if (ih < 0 || ih >= h) continue;
          T* dst = x + (static_cast<std::int64_t>(ci) * h + ih) * w;
          const T* src = row + static_cast<std::int64_t>(i) * ow;
          for (int j = 0; j < ow; ++j) {
            const int iw = j * stride - pad + kj;
            if (iw >= 0 && iw < w) dst[iw] += src[j];
          }
        }
      }
    }
  }
}

template <typename T>
void check_conv_args(const Var<T>& x, const Var<T>& w, const char* op) {
  check_rank(x, 4, op);
  check_rank(w, 4, op);
  if (x.shape()[1] != w.shape()[1])
    throw InvalidArgument(std::string(op) + ": input channels " + shape_str(x.shape()) +
                          " vs weight " + shape_str(w.shape()));
}

}  // namespace detail

template <typename T>
Var<T> conv2d_input_grad(const Var<T>& gy, const Var<T>& w, ConvSpec spec, int in_h, int in_w);
template <typename T>
Var<T> conv2d_weight_grad(const Var<T>& x, const Var<T>& gy, ConvSpec spec, int kh, int kw);

// x: [N,Cin,H,W], w: [Cout,Cin,kh,kw] -> [N,Cout,OH,OW]
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, ConvSpec spec = {}) {
  detail::check_conv_args(x, w, "conv2d");
  const int n = x.shape()[0], cin = x.shape()[1], h = x.shape()[2], ww = x.shape()[3];
  const int cout = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
  const int oh = detail::conv_out_size(h, kh, spec.stride, spec.pad);
  const int ow = detail::conv_out_size(ww, kw, spec.stride, spec.pad);
  if (oh <= 0 || ow <= 0) throw InvalidArgument("conv2d: non-positive output size");
  Tensor<T> out({n, cout, oh, ow});
  const std::int64_t ckk = static_cast<std::int64_t>(cin) * kh * kw;
  const std::int64_t ohw = static_cast<std::int64_t>(oh) * ow;
  const bool direct = kh == 1 && kw == 1 && spec.stride == 1 && spec.pad == 0;
  Eigen::Map<const RowMat<T>> wm(w.value().data(), cout, ckk);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const T* xp = x.value().data() + static_cast<std::int64_t>(i) * cin * h * ww;
    Eigen::Map<RowMat<T>> om(out.data() + static_cast<std::int64_t>(i) * cout * ohw, cout, ohw);
    if (direct) {
      Eigen::Map<const RowMat<T>> cm(xp, ckk, ohw);
      om.noalias() = wm * cm;
    } else {
      auto& buf = detail::conv_scratch<T>();
      buf.resize(static_cast<size_t>(ckk * ohw));
      detail::im2col(xp, cin, h, ww, kh, kw, spec.stride, spec.pad, oh, ow, buf.data());
      Eigen::Map<const RowMat<T>> cm(buf.data(), ckk, ohw);
      om.noalias() = wm * cm;
    }
  }
  return make_op<T>(std::move(out), {x, w},
                    [x, w, spec, h, ww, kh, kw](const Var<T>& g) -> std::vector<Var<T>> {
                      return {conv2d_input_grad(g, w, spec, h, ww),
                              conv2d_weight_grad(x, g, spec, kh, kw)};
                    });
}

// Adjoint of conv2d in its input: gy: [N,Cout,OH,OW] -> [N,Cin,in_h,in_w]
template <typename T>
Var<T> conv2d_input_grad(const Var<T>& gy, const Var<T>& w, ConvSpec spec, int in_h, int in_w) {
  detail::check_rank(gy, 4, "conv2d_input_grad");
  detail::check_rank(w, 4, "conv2d_input_grad");
  const int n = gy.shape()[0], cout = gy.shape()[1], oh = gy.shape()[2], ow = gy.shape()[3];
  if (cout != w.shape()[0]) throw InvalidArgument("conv2d_input_grad: channel mismatch");
  const int cin = w.shape()[1], kh = w.shape()[2], kw = w.shape()[3];
  Tensor<T> out({n, cin, in_h, in_w});
  const std::int64_t ckk = static_cast<std::int64_t>(cin) * kh * kw;
  const std::int64_t ohw = static_cast<std::int64_t>(oh) * ow;
  Eigen::Map<const RowMat<T>> wm(w.value().data(), cout, ckk);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const T* gp = gy.value().data() + static_cast<std::int64_t>(i) * cout * ohw;
    Eigen::Map<const RowMat<T>> gm(gp, cout, ohw);
    auto& buf = detail::conv_scratch<T>();
    buf.resize(static_cast<size_t>(ckk * ohw));
    Eigen::Map<RowMat<T>> cm(buf.data(), ckk, ohw);
    cm.noalias() = wm.transpose() * gm;
    T* op = out.data() + static_cast<std::int64_t>(i) * cin * in_h * in_w;
    detail::col2im_add(buf.data(), cin, in_h, in_w, kh, kw, spec.stride, spec.pad, oh, ow, op);
  }
  return make_op<T>(std::move(out), {gy, w},
                    [gy, w, spec, kh, kw](const Var<T>& d) -> std::vector<Var<T>> {
                      return {conv2d(d, w, spec), conv2d_weight_grad(d, gy, spec, kh, kw)};
                    });
}

// Adjoint of conv2d in its weight: -> [Cout,Cin,kh,kw]
template <typename T>
Var<T> conv2d_weight_grad(const Var<T>& x, const Var<T>& gy, ConvSpec spec, int kh, int kw) {
  detail::check_rank(x, 4, "conv2d_weight_grad");
  detail::check_rank(gy, 4, "conv2d_weight_grad");
  const int n = x.shape()[0], cin = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const int cout = gy.shape()[1], oh = gy.shape()[2], ow = gy.shape()[3];
  if (gy.shape()[0] != n) throw InvalidArgument("conv2d_weight_grad: batch mismatch");
  const std::int64_t ckk = static_cast<std::int64_t>(cin) * kh * kw;
  const std::int64_t ohw = static_cast<std::int64_t>(oh) * ow;
  std::vector<Tensor<T>> partial(static_cast<size_t>(n), Tensor<T>({cout, cin, kh, kw}));
  const bool direct = kh == 1 && kw == 1 && spec.stride == 1 && spec.pad == 0;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const T* xp = x.value().data() + static_cast<std::int64_t>(i) * cin * h * w;
    const T* gp = gy.value().data() + static_cast<std::int64_t>(i) * cout * ohw;
    Eigen::Map<const RowMat<T>> gm(gp, cout, ohw);
    Eigen::Map<RowMat<T>> pm(partial[static_cast<size_t>(i)].data(), cout, ckk);
    if (direct) {
      Eigen::Map<const RowMat<T>> cm(xp, ckk, ohw);
      pm.noalias() = gm * cm.transpose();
    } else {
      auto& buf = detail::conv_scratch<T>();
      buf.resize(static_cast<size_t>(ckk * ohw));
      detail::im2col(xp, cin, h, w, kh, kw, spec.stride, spec.pad, oh, ow, buf.data());
      Eigen::Map<const RowMat<T>> cm(buf.data(), ckk, ohw);
      pm.noalias() = gm * cm.transpose();
    }
  }
  Tensor<T> out({cout, cin, kh, kw});
  for (int i = 0; i < n; ++i) {  // fixed order: bit-deterministic
    const T* p = partial[static_cast<size_t>(i)].data();
    for (std::int64_t k = 0; k < out.numel(); ++k) out[k] += p[k];
  }
  return make_op<T>(std::move(out), {x, gy},
                    [x, gy, spec](const Var<T>& d) -> std::vector<Var<T>> {
                      return {conv2d_input_grad(gy, d, spec, x.shape()[2], x.shape()[3]),
                              conv2d(x, d, spec)};
                    });
}

// 2x2 average pooling, stride 2.
template <typename T>
Var<T> upsample2(const Var<T>& x);

template <typename T>
Var<T> avgpool2(const Var<T>& x) {
  detail::check_rank(x, 4, "avgpool2");
  const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (h % 2 != 0 || w % 2 != 0) throw InvalidArgument("avgpool2: odd spatial size");
  const int oh = h / 2, ow = w / 2;
  Tensor<T> out({n, c, oh, ow});
  const T* px = x.value().data();
  detail::ew_loop(static_cast<std::int64_t>(n) * c, [&](std::int64_t nc) {
    const T* p = px + nc * h * w;
    T* q = out.data() + nc * oh * ow;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j)
        q[i * ow + j] = (p[(2 * i) * w + 2 * j] + p[(2 * i) * w + 2 * j + 1] +
                         p[(2 * i + 1) * w + 2 * j] + p[(2 * i + 1) * w + 2 * j + 1]) *
                        T(0.25);
  });
  return make_op<T>(std::move(out), {x}, [](const Var<T>& g) -> std::vector<Var<T>> {
    return {mul_scalar(upsample2(g), T(0.25))};
  });
}

// Nearest-neighbor 2x upsampling.
template <typename T>
Var<T> upsample2(const Var<T>& x) {
  detail::check_rank(x, 4, "upsample2");
  const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  Tensor<T> out({n, c, 2 * h, 2 * w});
  const T* px = x.value().data();
  detail::ew_loop(static_cast<std::int64_t>(n) * c, [&](std::int64_t nc) {
    const T* p = px + nc * h * w;
    T* q = out.data() + nc * 4 * h * w;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const T v = p[i * w + j];
        q[(2 * i) * 2 * w + 2 * j] = v;
        q[(2 * i) * 2 * w + 2 * j + 1] = v;
        q[(2 * i + 1) * 2 * w + 2 * j] = v;
        q[(2 * i + 1) * 2 * w + 2 * j + 1] = v;
      }
  });
  return make_op<T>(std::move(out), {x}, [](const Var<T>& g) -> std::vector<Var<T>> {
    return {mul_scalar(avgpool2(g), T(4))};
  });
}

}  // namespace jgseg::ad
