// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Discriminators: D_r scores raw images with a residual downsampling trunk;
// D_m is a multi-scale patch critic over channel-concatenated image+mask
// pairs, enforcing image-label alignment.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "jgseg/nn.hpp"

namespace jgseg {

struct CriticConfig {
  int resolution = 64;
  int img_channels = 1;
  int num_classes = 2;
  int base_channels = 32;     // channels at the input resolution
  int max_channels = 256;
  int pair_scales = 2;        // D_m scale count
  int pair_base_channels = 32;
  float leaky_slope = 0.2f;
  // Real one-hot masks can optionally be smoothed toward uniform by eps to
  // shrink the discreteness gap against generated softmax masks.
  float real_mask_smooth = 0.0f;
};

// Image-only critic D_r: residual downsampling to a scalar logit per image.
template <typename T>
class ImageCritic {
 public:
  ImageCritic(ParameterStore<T>& ps, const CriticConfig& cfg, SeededRng& rng) : cfg_(cfg) {
    int c = cfg.base_channels;
    stem_ = nn::Conv<T>(ps, "D_r.stem", groups::kDr, cfg.img_channels, c, 3, {1, 1}, rng);
    int res = cfg.resolution;
    int lvl = 0;
    while (res > 4) {
      const int cn = std::min(cfg.max_channels, c * 2);
      const std::string p = "D_r.l" + std::to_string(lvl);
      Res r;
      r.conv1 = nn::Conv<T>(ps, p + ".conv1", groups::kDr, c, c, 3, {1, 1}, rng);
      r.conv2 = nn::Conv<T>(ps, p + ".conv2", groups::kDr, c, cn, 3, {1, 1}, rng);
      r.skip = nn::Conv<T>(ps, p + ".skip", groups::kDr, c, cn, 1, {1, 0}, rng);
      res_.push_back(std::move(r));
      c = cn;
      res /= 2;
      ++lvl;
    }
    final_conv_ = nn::Conv<T>(ps, "D_r.final", groups::kDr, c, c, 3, {1, 1}, rng);
    fc_ = nn::Dense<T>(ps, "D_r.fc", groups::kDr, c * res * res, c, rng);
    out_ = nn::Dense<T>(ps, "D_r.out", groups::kDr, c, 1, rng);
    params_ = ps.group_vars(groups::kDr);
  }

  const std::vector<ad::Var<T>>& params() const { return params_; }
  void set_frozen(bool f) {
    frozen_ = f;
    for (auto& p : params_) p.set_requires_grad(!f);
  }
  bool frozen() const { return frozen_; }

  // x: [N, C_img, R, R] -> [N, 1]
  ad::Var<T> score_image(const ad::Var<T>& x) const {
    if (x.value().rank() != 4 || x.shape()[1] != cfg_.img_channels ||
        x.shape()[2] != cfg_.resolution || x.shape()[3] != cfg_.resolution)
      throw InvalidArgument("score_image: expected [N," + std::to_string(cfg_.img_channels) +
                            "," + std::to_string(cfg_.resolution) + "," +
                            std::to_string(cfg_.resolution) + "], got " + shape_str(x.shape()));
    const T slope = T(cfg_.leaky_slope);
    const T inv_sqrt2 = T(1) / std::sqrt(T(2));
    ad::Var<T> h = ad::leaky_relu(stem_.forward(x), slope);
    for (const auto& r : res_) {
      ad::Var<T> skip = r.skip.forward(ad::avgpool2(h));
      ad::Var<T> y = ad::leaky_relu(r.conv1.forward(h), slope);
      y = ad::avgpool2(ad::leaky_relu(r.conv2.forward(y), slope));
      h = ad::mul_scalar(ad::add(y, skip), inv_sqrt2);
    }
    h = ad::leaky_relu(final_conv_.forward(h), slope);
    const int n = h.shape()[0];
    h = ad::reshape(h, {n, static_cast<int>(h.numel() / n)});
    h = ad::leaky_relu(fc_.forward(h), slope);
    return out_.forward(h);
  }

 private:
  struct Res {
    nn::Conv<T> conv1, conv2, skip;
  };
  CriticConfig cfg_;
  nn::Conv<T> stem_;
  std::vector<Res> res_;
  nn::Conv<T> final_conv_;
  nn::Dense<T> fc_, out_;
  std::vector<ad::Var<T>> params_;
  bool frozen_ = false;
};

// Image + per-pixel class probabilities, ready for concatenation.
template <typename T>
struct PairInput {
  ad::Var<T> image;       // [N, C_img, H, W]
  ad::Var<T> mask_probs;  // [N, C_cls, H, W], per-pixel simplex
};

// Real labels become (optionally smoothed) one-hot probabilities; generated
// logits become softmax probabilities, keeping the path differentiable.
template <typename T>
PairInput<T> encode_pair(const ad::Var<T>& image, const Tensor<int>& labels, int num_classes,
                         float smooth = 0.0f) {
  Tensor<T> probs = nn::one_hot<T>(labels, num_classes);
  if (smooth > 0.0f) {
    const T off = static_cast<T>(smooth) / static_cast<T>(num_classes);
    const T on = T(1) - static_cast<T>(smooth) + off;
    for (std::int64_t i = 0; i < probs.numel(); ++i)
      probs[i] = probs[i] > T(0.5) ? on : off;
  }
  return {image, ad::constant(std::move(probs))};
}

template <typename T>
PairInput<T> encode_pair(const ad::Var<T>& image, const ad::Var<T>& mask_logits) {
  return {image, nn::softmax_c(mask_logits)};
}

// Multi-scale patch critic D_m.
template <typename T>
class PairCritic {
 public:
  PairCritic(ParameterStore<T>& ps, const CriticConfig& cfg, SeededRng& rng) : cfg_(cfg) {
    const int cin = cfg.img_channels + cfg.num_classes;
    int log2_res = 0;
    for (int r = cfg.resolution; r > 1; r /= 2) ++log2_res;
    // One shared depth across scales: patch maps then shrink strictly with
    // the scale index while the coarsest one keeps spatial extent > 1.
    const int blocks = std::max(1, std::min(4, log2_res - cfg.pair_scales));
    for (int s = 0; s < cfg.pair_scales; ++s) {
      Branch br;
      int c = cfg.pair_base_channels;
      int in_c = cin;
      for (int b = 0; b < blocks; ++b) {
        const std::string p = "D_m.s" + std::to_string(s) + ".b" + std::to_string(b);
        br.convs.emplace_back(ps, p, groups::kDm, in_c, c, 3, ad::ConvSpec{2, 1}, rng);
        in_c = c;
        c = std::min(cfg.max_channels, c * 2);
      }
      br.out = nn::Conv<T>(ps, "D_m.s" + std::to_string(s) + ".out", groups::kDm, in_c, 1, 1,
                           ad::ConvSpec{1, 0}, rng);
      branches_.push_back(std::move(br));
    }
    params_ = ps.group_vars(groups::kDm);
  }

  const std::vector<ad::Var<T>>& params() const { return params_; }
  void set_frozen(bool f) {
    frozen_ = f;
    for (auto& p : params_) p.set_requires_grad(!f);
  }
  bool frozen() const { return frozen_; }

  // Patch logit maps, one per scale; scale s consumes the pair downsampled 2^s.
  std::vector<ad::Var<T>> score_pair(const PairInput<T>& pair) const {
    if (pair.image.value().rank() != 4 || pair.mask_probs.value().rank() != 4)
      throw InvalidArgument("score_pair: rank-4 inputs expected");
    if (pair.image.shape()[2] != cfg_.resolution || pair.image.shape()[3] != cfg_.resolution ||
        pair.image.shape()[1] != cfg_.img_channels)
      throw InvalidArgument("score_pair: image shape " + shape_str(pair.image.shape()));
    if (pair.mask_probs.shape()[1] != cfg_.num_classes ||
        pair.mask_probs.shape()[2] != cfg_.resolution ||
        pair.mask_probs.shape()[0] != pair.image.shape()[0])
      throw InvalidArgument("score_pair: mask shape " + shape_str(pair.mask_probs.shape()));
    ad::Var<T> x = ad::concat_c<T>({pair.image, pair.mask_probs});
    std::vector<ad::Var<T>> maps;
    const T slope = T(cfg_.leaky_slope);
    for (size_t s = 0; s < branches_.size(); ++s) {
      if (s > 0) x = ad::avgpool2(x);
      ad::Var<T> h = x;
      for (const auto& cv : branches_[s].convs) h = ad::leaky_relu(cv.forward(h), slope);
      maps.push_back(branches_[s].out.forward(h));
    }
    return maps;
  }

  int scales() const { return static_cast<int>(branches_.size()); }

 private:
  struct Branch {
    std::vector<nn::Conv<T>> convs;
    nn::Conv<T> out;
  };
  CriticConfig cfg_;
  std::vector<Branch> branches_;
  std::vector<ad::Var<T>> params_;
  bool frozen_ = false;
};

}  // namespace jgseg
