// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Test-time segmentation: embed a target image in W+ (encoder init plus
// iterative optimization of the reconstruction + encoder-consistency
// objective), then decode the label mask from the optimized code. Only the
// code is optimized; networks stay frozen throughout.
//
// Independent inversions are batched for throughput: per-image losses are
// summed and gradients clipped per image, so a batched run equals the same
// images inverted one by one.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "jgseg/objectives.hpp"
#include "jgseg/optimizer.hpp"

namespace jgseg {

struct InversionConfig {
  int steps = 300;
  double lr = 0.05;
  double lr_end = 0.005;  // cosine ramp-down target
  int consistency_every = 1;
  double grad_clip = 10.0;

  void validate() const {
    if (steps < 0) throw InvalidArgument("inversion steps must be >= 0");
    if (consistency_every < 1) throw InvalidArgument("consistency_every must be >= 1");
  }
};

struct InversionResult {
  Tensor<float> w_plus;       // [L, dw]
  Tensor<float> image;        // reconstruction [C, H, W]
  Tensor<float> logits;       // [C_cls, H, W]
  std::vector<double> trace;  // objective per step, length steps + 1 (with init)
  double final_loss = 0.0;
  double final_pixel_mse = 0.0;
};

namespace detail {

template <typename T>
struct FreezeGuard {
  const Generator<T>& gen;
  const Encoder<T>& enc;
  bool gen_was, enc_was;
  FreezeGuard(const Generator<T>& g, const Encoder<T>& e)
      : gen(g), enc(e), gen_was(g.frozen()), enc_was(e.frozen()) {
    const_cast<Generator<T>&>(gen).set_frozen(true);
    const_cast<Encoder<T>&>(enc).set_frozen(true);
  }
  ~FreezeGuard() {
    const_cast<Generator<T>&>(gen).set_frozen(gen_was);
    const_cast<Encoder<T>&>(enc).set_frozen(enc_was);
  }
};

}  // namespace detail

// `init` overrides the default encoder initialization with explicit codes
// ([L, dw] each, one per batch element).
inline std::vector<InversionResult> invert_batch(const Generator<float>& gen,
                                                 const Encoder<float>& enc,
                                                 const Tensor<float>& targets,
                                                 const PerceptualNet<float>& pnet,
                                                 const LossWeights& lw,
                                                 const InversionConfig& cfg,
                                                 const std::vector<Tensor<float>>* init = nullptr) {
  cfg.validate();
  const auto& gcfg = gen.config();
  if (targets.rank() != 4 || targets.dim(1) != gcfg.img_channels ||
      targets.dim(2) != gcfg.resolution || targets.dim(3) != gcfg.resolution)
    throw InvalidArgument("invert: targets shape " + shape_str(targets.shape()) +
                          " does not match the model resolution");
  const int batch = targets.dim(0);
  detail::FreezeGuard<float> freeze(gen, enc);
  ad::Var<float> xv = ad::constant(targets);

  const int L = gcfg.style_sites();
  std::vector<ad::Var<float>> sites;
  if (init) {
    if (static_cast<int>(init->size()) != batch)
      throw InvalidArgument("invert: init size does not match the batch");
    for (int l = 0; l < L; ++l) {
      Tensor<float> row({batch, gcfg.dw});
      for (int b = 0; b < batch; ++b) {
        const Tensor<float>& code = (*init)[static_cast<size_t>(b)];
        if (code.shape() != Shape{L, gcfg.dw})
          throw InvalidArgument("invert: init code must be [L, dw]");
        for (int j = 0; j < gcfg.dw; ++j)
          row[static_cast<std::int64_t>(b) * gcfg.dw + j] =
              code[static_cast<std::int64_t>(l) * gcfg.dw + j];
      }
      sites.emplace_back(std::move(row), /*requires_grad=*/true);
    }
  } else {
    ad::NoGrad ng;
    auto enc_init = enc.encode_sites(xv);
    for (int l = 0; l < L; ++l)
      sites.emplace_back(enc_init[static_cast<size_t>(l)].value(), /*requires_grad=*/true);
  }
  std::vector<Adam<float>::Item> items;
  for (int l = 0; l < L; ++l)
    items.push_back({"wplus." + std::to_string(l), sites[static_cast<size_t>(l)]});
  Adam<float> opt(std::move(items), cfg.lr, 0.9, 0.999);

  std::vector<InversionResult> res(static_cast<size_t>(batch));

  // Per-image objective, summed over the batch for the backward pass.
  auto forward_loss = [&](bool with_consistency) {
    auto syn = gen.synthesize(sites, NoiseMode::zero());
    ad::Var<float> per_img = perceptual_distance_per_image(syn.image, xv, pnet);
    per_img = ad::add(per_img,
                      ad::mul_scalar(mse_per_image(syn.image, xv), static_cast<float>(lw.lambda3)));
    if (with_consistency && lw.lambda2 > 0) {
      auto esites = enc.encode_sites(syn.image);
      ad::Var<float> acc;
      for (int l = 0; l < L; ++l) {
        ad::Var<float> d = ad::sub(sites[static_cast<size_t>(l)], esites[static_cast<size_t>(l)]);
        ad::Var<float> s = ad::sum_cols(ad::mul(d, d));  // [B]
        acc = l == 0 ? s : ad::add(acc, s);
      }
      const float denom = static_cast<float>(L) * static_cast<float>(gcfg.dw);
      per_img = ad::add(per_img, ad::mul_scalar(acc, static_cast<float>(lw.lambda2) / denom));
    }
    return std::make_pair(per_img, syn);
  };

  for (int t = 0; t < cfg.steps; ++t) {
    const bool consistency = (t % cfg.consistency_every) == 0;
    auto [per_img, syn] = forward_loss(consistency);
    bool finite = true;
    for (int b = 0; b < batch; ++b) {
      const double lv = static_cast<double>(per_img.value()[b]);
      res[static_cast<size_t>(b)].trace.push_back(lv);
      finite &= std::isfinite(lv);
    }
    if (!finite)
      throw DivergedInversion("non-finite inversion loss at step " + std::to_string(t),
                              res[0].trace);
    ad::backward(ad::sum_all(per_img));
    // Per-image gradient clip by global norm over the image's code rows.
    if (cfg.grad_clip > 0) {
      std::vector<double> norm2(static_cast<size_t>(batch), 0.0);
      for (auto& s : sites) {
        if (!s.has_grad()) continue;
        const Tensor<float>& g = s.grad();
        for (int b = 0; b < batch; ++b)
          for (int j = 0; j < gcfg.dw; ++j) {
            const double v = g[static_cast<std::int64_t>(b) * gcfg.dw + j];
            norm2[static_cast<size_t>(b)] += v * v;
          }
      }
      for (auto& s : sites) {
        if (!s.has_grad()) continue;
        Tensor<float>& g = s.mutable_grad();
        for (int b = 0; b < batch; ++b) {
          const double norm = std::sqrt(norm2[static_cast<size_t>(b)]);
          if (norm > cfg.grad_clip) {
            const float scale = static_cast<float>(cfg.grad_clip / norm);
            for (int j = 0; j < gcfg.dw; ++j)
              g[static_cast<std::int64_t>(b) * gcfg.dw + j] *= scale;
          }
        }
      }
    }
    // Cosine ramp-down of the step size.
    const double frac = cfg.steps <= 1 ? 1.0 : static_cast<double>(t) / (cfg.steps - 1);
    opt.set_lr(cfg.lr_end + 0.5 * (cfg.lr - cfg.lr_end) * (1.0 + std::cos(M_PI * frac)));
    opt.step();
    opt.zero_grads();
  }

  // Final evaluation at the optimized codes (also the steps == 0 path).
  {
    ad::NoGrad ng;
    auto [per_img, syn] = forward_loss(true);
    const int r = gcfg.resolution;
    const std::int64_t img_stride = static_cast<std::int64_t>(gcfg.img_channels) * r * r;
    const std::int64_t log_stride = static_cast<std::int64_t>(gcfg.num_classes) * r * r;
    for (int b = 0; b < batch; ++b) {
      InversionResult& rb = res[static_cast<size_t>(b)];
      rb.trace.push_back(static_cast<double>(per_img.value()[b]));
      rb.final_loss = rb.trace.back();
      rb.image = Tensor<float>({gcfg.img_channels, r, r});
      std::copy(syn.image.value().data() + b * img_stride,
                syn.image.value().data() + (b + 1) * img_stride, rb.image.data());
      rb.logits = Tensor<float>({gcfg.num_classes, r, r});
      std::copy(syn.logits.value().data() + b * log_stride,
                syn.logits.value().data() + (b + 1) * log_stride, rb.logits.data());
      double mse = 0;
      for (std::int64_t i = 0; i < img_stride; ++i) {
        const double d = rb.image[i] - targets[b * img_stride + i];
        mse += d * d;
      }
      rb.final_pixel_mse = mse / static_cast<double>(img_stride);
      rb.w_plus = Tensor<float>({L, gcfg.dw});
      for (int l = 0; l < L; ++l)
        for (int j = 0; j < gcfg.dw; ++j)
          rb.w_plus[static_cast<std::int64_t>(l) * gcfg.dw + j] =
              sites[static_cast<size_t>(l)].value()[static_cast<std::int64_t>(b) * gcfg.dw + j];
    }
  }
  return res;
}

// Single-image inversion; [C,H,W] or [1,C,H,W] target.
inline InversionResult invert(const Generator<float>& gen, const Encoder<float>& enc,
                              const Tensor<float>& target, const PerceptualNet<float>& pnet,
                              const LossWeights& lw, const InversionConfig& cfg) {
  Tensor<float> x = target.rank() == 3
                        ? target.reshaped({1, target.dim(0), target.dim(1), target.dim(2)})
                        : target;
  return invert_batch(gen, enc, x, pnet, lw, cfg)[0];
}

// Full test-time segmentation: argmax over the inverted code's logits.
inline Tensor<int> segment(const Generator<float>& gen, const Encoder<float>& enc,
                           const Tensor<float>& target, const PerceptualNet<float>& pnet,
                           const LossWeights& lw, const InversionConfig& cfg,
                           InversionResult* result_out = nullptr) {
  InversionResult res = invert(gen, enc, target, pnet, lw, cfg);
  const int r = gen.config().resolution;
  Tensor<int> labels =
      nn::argmax_c(res.logits.reshaped({1, gen.config().num_classes, r, r}));
  if (result_out) *result_out = std::move(res);
  return labels.reshaped({r, r});
}

// Encoder-only segmentation: argmax of G_y(E(x)); equals segment with steps=0.
inline Tensor<int> encode_only_segment(const Generator<float>& gen, const Encoder<float>& enc,
                                       const Tensor<float>& target) {
  detail::FreezeGuard<float> freeze(gen, enc);
  ad::NoGrad ng;
  const auto& gcfg = gen.config();
  Tensor<float> x = target.rank() == 3
                        ? target.reshaped({1, target.dim(0), target.dim(1), target.dim(2)})
                        : target;
  auto sites = enc.encode_sites(ad::constant(std::move(x)));
  auto syn = gen.synthesize(sites, NoiseMode::zero());
  const int r = gcfg.resolution;
  return nn::argmax_c(syn.logits.value()).reshaped({r, r});
}

}  // namespace jgseg
