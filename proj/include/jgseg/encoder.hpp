// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Encoder E: X -> W+. A small feature pyramid (4 stride-2 stages) with one
// head per style site; coarse sites read the deepest features.

#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "jgseg/nn.hpp"

namespace jgseg {

struct EncoderConfig {
  int resolution = 64;
  int img_channels = 1;
  int dw = 128;
  int style_sites = 10;
  int base_channels = 32;
  int max_channels = 256;
  int stages = 4;
  float leaky_slope = 0.2f;
};

template <typename T>
class Encoder {
 public:
  Encoder(ParameterStore<T>& ps, const EncoderConfig& cfg, SeededRng& rng) : cfg_(cfg) {
    stem_ = nn::Conv<T>(ps, "E.stem", groups::kE, cfg.img_channels, cfg.base_channels, 3, {1, 1},
                        rng);
    int c = cfg.base_channels;
    for (int s = 0; s < cfg.stages; ++s) {
      const int cn = std::min(cfg.max_channels, c * 2);
      stages_.emplace_back(ps, "E.stage" + std::to_string(s), groups::kE, c, cn, 3,
                           ad::ConvSpec{2, 1}, rng);
      stage_channels_.push_back(cn);
      c = cn;
    }
    // Site l belongs to level l/2; level 0 (coarsest) reads the deepest stage.
    for (int l = 0; l < cfg.style_sites; ++l) {
      const int level = l / 2;
      const int stage = std::max(0, cfg.stages - 1 - level);
      head_stage_.push_back(stage);
      heads_.emplace_back(ps, "E.head" + std::to_string(l), groups::kE,
                          stage_channels_[static_cast<size_t>(stage)], cfg.dw, rng);
    }
    params_ = ps.group_vars(groups::kE);
  }

  // x: [N, C_img, R, R] -> per-site style rows, each [N, dw].
  std::vector<ad::Var<T>> encode_sites(const ad::Var<T>& x) const {
    if (x.value().rank() != 4 || x.shape()[1] != cfg_.img_channels ||
        x.shape()[2] != cfg_.resolution || x.shape()[3] != cfg_.resolution)
      throw InvalidArgument("encode: expected [N," + std::to_string(cfg_.img_channels) + "," +
                            std::to_string(cfg_.resolution) + "," +
                            std::to_string(cfg_.resolution) + "], got " + shape_str(x.shape()));
    const T slope = T(cfg_.leaky_slope);
    ad::Var<T> h = ad::leaky_relu(stem_.forward(x), slope);
    std::vector<ad::Var<T>> pooled;  // per stage, [N, C_s]
    for (const auto& st : stages_) {
      h = ad::leaky_relu(st.forward(h), slope);
      const int hh = h.shape()[2], ww = h.shape()[3];
      pooled.push_back(ad::mul_scalar(ad::sum_hw(h), T(1) / static_cast<T>(hh * ww)));
    }
    std::vector<ad::Var<T>> sites;
    for (size_t l = 0; l < heads_.size(); ++l)
      sites.push_back(heads_[l].forward(pooled[static_cast<size_t>(head_stage_[l])]));
    return sites;
  }

  // Value-level convenience for a single image [C,R,R] or batch [N,C,R,R]:
  // returns the [L, dw] code of the first batch element.
  Tensor<T> encode_wplus(const Tensor<T>& image) const {
    ad::NoGrad ng;
    Tensor<T> x = image.rank() == 3
                      ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)})
                      : image;
    auto sites = encode_sites(ad::constant(std::move(x)));
    Tensor<T> out({cfg_.style_sites, cfg_.dw});
    for (int l = 0; l < cfg_.style_sites; ++l)
      for (int j = 0; j < cfg_.dw; ++j)
        out[static_cast<std::int64_t>(l) * cfg_.dw + j] = sites[static_cast<size_t>(l)].value()[j];
    return out;
  }

  const EncoderConfig& config() const { return cfg_; }

  const std::vector<ad::Var<T>>& params() const { return params_; }
  void set_frozen(bool f) {
    frozen_ = f;
    for (auto& p : params_) p.set_requires_grad(!f);
  }
  bool frozen() const { return frozen_; }

 private:
  EncoderConfig cfg_;
  nn::Conv<T> stem_;
  std::vector<nn::Conv<T>> stages_;
  std::vector<int> stage_channels_;
  std::vector<int> head_stage_;
  std::vector<nn::Dense<T>> heads_;
  std::vector<ad::Var<T>> params_;
  bool frozen_ = false;
};

}  // namespace jgseg
