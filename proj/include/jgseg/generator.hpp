// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Joint image+label generator: mapping network, style-modulated synthesis
// trunk, and per-resolution tImage/tSeg heads merged by upsample-and-sum.
// The trunk and mapping are shared by both outputs; the heads are the only
// branch-exclusive parameters, which is what makes the stop-gradient
// training rule meaningful.

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "jgseg/nn.hpp"

namespace jgseg {

struct GeneratorConfig {
  int resolution = 64;      // power of two >= 8
  int base_resolution = 4;  // learned-constant resolution
  int dz = 64;
  int dw = 128;
  int mapping_layers = 4;
  int mapping_width = 128;
  float leaky_slope = 0.2f;
  int img_channels = 1;  // 1 or 3
  int num_classes = 2;
  std::vector<int> channels;  // per level, coarse to fine; empty = default
  bool per_layer_noise = true;
  bool path_length_reg = false;  // reserved, not implemented

  int levels() const {
    int l = 0;
    for (int r = base_resolution; r < resolution; r *= 2) ++l;
    return l + 1;
  }
  // Two style sites per level, one per conv block.
  int style_sites() const { return 2 * levels(); }

  std::vector<int> effective_channels() const {
    if (!channels.empty()) return channels;
    std::vector<int> out;
    for (int i = 0; i < levels(); ++i) out.push_back(std::max(16, 256 >> (i + 1)));
    return out;
  }

  void validate() const {
    if (resolution < 8 || (resolution & (resolution - 1)) != 0)
      throw InvalidArgument("resolution must be a power of two >= 8");
    if (base_resolution < 4 || (base_resolution & (base_resolution - 1)) != 0)
      throw InvalidArgument("base_resolution must be a power of two >= 4");
    if (img_channels != 1 && img_channels != 3)
      throw InvalidArgument("img_channels must be 1 or 3");
    if (num_classes < 2) throw InvalidArgument("num_classes must be >= 2");
    if (!channels.empty() && static_cast<int>(channels.size()) != levels())
      throw InvalidArgument("channel schedule must have one entry per level");
    for (int c : effective_channels())
      if (c <= 0) throw InvalidArgument("channel schedule must be positive");
  }
};

// How per-layer noise inputs are produced during synthesis.
struct NoiseMode {
  enum Kind { kZero, kFixed, kFresh } kind = kZero;
  std::uint64_t seed = 0;   // kFixed
  SeededRng* rng = nullptr; // kFresh

  static NoiseMode zero() { return {kZero, 0, nullptr}; }
  static NoiseMode fixed(std::uint64_t seed) { return {kFixed, seed, nullptr}; }
  static NoiseMode fresh(SeededRng& rng) { return {kFresh, 0, &rng}; }
};

// w-bar + psi * (w - w-bar), elementwise; psi in [0, 1].
template <typename T>
Tensor<T> truncate(const Tensor<T>& w, const Tensor<T>& w_bar, double psi) {
  if (psi < 0.0 || psi > 1.0) throw InvalidArgument("truncation psi must be in [0,1]");
  if (!w.same_shape(w_bar)) throw InvalidArgument("truncate: shape mismatch");
  Tensor<T> out(w.shape());
  for (std::int64_t i = 0; i < w.numel(); ++i)
    out[i] = w_bar[i] + static_cast<T>(psi) * (w[i] - w_bar[i]);
  return out;
}

template <typename T>
class Generator {
 public:
  Generator(ParameterStore<T>& ps, const GeneratorConfig& cfg, SeededRng& rng) : cfg_(cfg) {
    cfg_.validate();
    const auto ch = cfg_.effective_channels();
    // Mapping network Z -> W.
    int in = cfg_.dz;
    for (int i = 0; i < cfg_.mapping_layers; ++i) {
      const int out = i + 1 == cfg_.mapping_layers ? cfg_.dw : cfg_.mapping_width;
      mapping_.emplace_back(ps, "G.mapping.fc" + std::to_string(i), groups::kGMapping, in, out,
                            rng);
      in = out;
    }
    // Learned constant input at the base resolution.
    const_input_ = ps.add("G.synth.const", groups::kGShared,
                          normal_sample<T>(rng, {ch[0], cfg_.base_resolution, cfg_.base_resolution}));
    // Synthesis trunk: two modulated conv blocks per level.
    int prev_c = ch[0];
    for (int lvl = 0; lvl < cfg_.levels(); ++lvl) {
      const int c = ch[static_cast<size_t>(lvl)];
      for (int blk = 0; blk < 2; ++blk) {
        const std::string p = "G.synth.l" + std::to_string(lvl) + ".b" + std::to_string(blk);
        Block b;
        const int cin = blk == 0 ? prev_c : c;
        b.affine = nn::Dense<T>(ps, p + ".affine", groups::kGShared, cfg_.dw, cin, rng,
                                /*bias_init=*/T(1));
        b.conv = nn::Conv<T>(ps, p + ".conv", groups::kGShared, cin, c, 3, {1, 1}, rng);
        b.noise_strength = ps.add(p + ".noise", groups::kGShared, Tensor<T>({c}));
        blocks_.push_back(std::move(b));
      }
      heads_img_.emplace_back(ps, "G.tImage.l" + std::to_string(lvl), groups::kGTImage, c,
                              cfg_.img_channels, 1, ad::ConvSpec{1, 0}, rng);
      heads_seg_.emplace_back(ps, "G.tSeg.l" + std::to_string(lvl), groups::kGTSeg, c,
                              cfg_.num_classes, 1, ad::ConvSpec{1, 0}, rng);
      prev_c = c;
    }
    for (const char* g : {groups::kGMapping, groups::kGShared, groups::kGTImage, groups::kGTSeg})
      for (auto& v : ps.group_vars(g)) params_.push_back(v);
  }

  const GeneratorConfig& config() const { return cfg_; }

  const std::vector<ad::Var<T>>& params() const { return params_; }

  // Frozen parameters take no gradients; synthesis still works.
  void set_frozen(bool f) {
    frozen_ = f;
    for (auto& p : params_) p.set_requires_grad(!f);
  }
  bool frozen() const { return frozen_; }

  // Z -> W. Input [N, dz].
  ad::Var<T> map_latent(const ad::Var<T>& z) const {
    if (z.value().rank() != 2 || z.shape()[1] != cfg_.dz)
      throw InvalidArgument("map_latent: expected [N," + std::to_string(cfg_.dz) + "], got " +
                            shape_str(z.shape()));
    // Normalize latents to the unit hypersphere scale before mapping.
    ad::Var<T> ms = ad::mul_scalar(ad::sum_cols(ad::mul(z, z)), T(1) / static_cast<T>(cfg_.dz));
    ad::Var<T> x = ad::mul(z, ad::bcast_cols(ad::rsqrt(ad::add_scalar(ms, T(1e-8))), cfg_.dz));
    for (const auto& fc : mapping_) x = ad::leaky_relu(fc.forward(x), T(cfg_.leaky_slope));
    return x;
  }

  Tensor<T> map_latent_value(const Tensor<T>& z) const {
    ad::NoGrad ng;
    return map_latent(ad::constant(z.rank() == 1 ? z.reshaped({1, cfg_.dz}) : z)).value();
  }

  // Empirical mean of map_latent over n fresh draws. Returns [dw].
  Tensor<T> mean_style(std::int64_t n, SeededRng& rng) const {
    if (n < 1) throw InvalidArgument("mean_style requires n >= 1");
    ad::NoGrad ng;
    Tensor<double> acc({cfg_.dw});
    std::int64_t left = n;
    while (left > 0) {
      const int b = static_cast<int>(std::min<std::int64_t>(left, 256));
      Tensor<T> z = normal_sample<T>(rng, {b, cfg_.dz});
      Tensor<T> w = map_latent(ad::constant(std::move(z))).value();
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < cfg_.dw; ++j)
          acc[j] += static_cast<double>(w[static_cast<std::int64_t>(i) * cfg_.dw + j]);
      left -= b;
    }
    Tensor<T> out({cfg_.dw});
    for (int j = 0; j < cfg_.dw; ++j)
      out[j] = static_cast<T>(acc[j] / static_cast<double>(n));
    return out;
  }

  // W -> W+: one copy of w per style site. Input [dw], output [L, dw].
  Tensor<T> broadcast_style(const Tensor<T>& w) const {
    if (w.shape() != Shape{cfg_.dw}) throw InvalidArgument("broadcast_style expects [dw]");
    Tensor<T> out({cfg_.style_sites(), cfg_.dw});
    for (int l = 0; l < cfg_.style_sites(); ++l)
      for (int j = 0; j < cfg_.dw; ++j) out[static_cast<std::int64_t>(l) * cfg_.dw + j] = w[j];
    return out;
  }

  struct Synthesis {
    ad::Var<T> image;   // [N, C_img, R, R]
    ad::Var<T> logits;  // [N, C_cls, R, R]
    // Per-level head outputs before the skip-sum, for structural checks.
    std::vector<ad::Var<T>> level_images;
    std::vector<ad::Var<T>> level_logits;
  };

  // styles: one [N, dw] entry per style site (same Var allowed at every site).
  Synthesis synthesize(const std::vector<ad::Var<T>>& styles, NoiseMode noise) const {
    if (static_cast<int>(styles.size()) != cfg_.style_sites())
      throw InvalidArgument("synthesize: expected " + std::to_string(cfg_.style_sites()) +
                            " style rows, got " + std::to_string(styles.size()));
    const int n = styles[0].shape()[0];
    for (const auto& s : styles)
      if (s.value().rank() != 2 || s.shape()[0] != n || s.shape()[1] != cfg_.dw)
        throw InvalidArgument("synthesize: style rows must all be [N,dw]");

    std::optional<SeededRng> fixed_rng;
    SeededRng* noise_rng = nullptr;
    if (noise.kind == NoiseMode::kFixed) {
      fixed_rng.emplace(noise.seed, "synthesis-noise");
      noise_rng = &*fixed_rng;
    } else if (noise.kind == NoiseMode::kFresh) {
      noise_rng = noise.rng;
    }

    Synthesis out;
    const int b = cfg_.base_resolution;
    ad::Var<T> x = ad::reshape(
        ad::bcast_rows(ad::reshape(const_input_, {static_cast<int>(const_input_.numel())}), n),
        {n, const_input_.shape()[0], b, b});
    ad::Var<T> img, seg;
    for (int lvl = 0; lvl < cfg_.levels(); ++lvl) {
      if (lvl > 0) x = ad::upsample2(x);
      x = run_block(blocks_[static_cast<size_t>(2 * lvl)], x, styles[static_cast<size_t>(2 * lvl)],
                    noise_rng);
      x = run_block(blocks_[static_cast<size_t>(2 * lvl + 1)], x,
                    styles[static_cast<size_t>(2 * lvl + 1)], noise_rng);
      ad::Var<T> ic = heads_img_[static_cast<size_t>(lvl)].forward(x);
      ad::Var<T> sc = heads_seg_[static_cast<size_t>(lvl)].forward(x);
      out.level_images.push_back(ic);
      out.level_logits.push_back(sc);
      img = lvl == 0 ? ic : ad::add(ad::upsample2(img), ic);
      seg = lvl == 0 ? sc : ad::add(ad::upsample2(seg), sc);
    }
    out.image = img;
    out.logits = seg;
    return out;
  }

  // Convenience: synthesize a batch that shares one w across all sites.
  Synthesis synthesize_from_w(const ad::Var<T>& w, NoiseMode noise) const {
    std::vector<ad::Var<T>> styles(static_cast<size_t>(cfg_.style_sites()), w);
    return synthesize(styles, noise);
  }

  // Value-level synthesis from a [L, dw] code (batch of one).
  Synthesis synthesize_wplus(const Tensor<T>& wplus, NoiseMode noise) const {
    if (wplus.shape() != Shape{cfg_.style_sites(), cfg_.dw})
      throw InvalidArgument("synthesize_wplus: expected [" +
                            std::to_string(cfg_.style_sites()) + "," + std::to_string(cfg_.dw) +
                            "], got " + shape_str(wplus.shape()));
    std::vector<ad::Var<T>> styles;
    for (int l = 0; l < cfg_.style_sites(); ++l) {
      Tensor<T> row({1, cfg_.dw});
      for (int j = 0; j < cfg_.dw; ++j) row[j] = wplus[static_cast<std::int64_t>(l) * cfg_.dw + j];
      styles.push_back(ad::constant(std::move(row)));
    }
    return synthesize(styles, noise);
  }

  struct SamplePair {
    Tensor<T> image;        // [C_img, R, R]
    Tensor<int> labels;     // [R, R]
  };

  // z -> w -> optional truncation -> broadcast -> synthesize; labels by argmax.
  std::vector<SamplePair> sample_pairs(int n, double psi, SeededRng& rng, NoiseMode noise,
                                       const Tensor<T>* w_bar = nullptr) const {
    ad::NoGrad ng;
    Tensor<T> wb;
    if (psi < 1.0) {
      if (w_bar) {
        wb = *w_bar;
      } else {
        SeededRng mean_rng(rng.seed(), rng.stream_id() + "-wbar");
        wb = mean_style(1024, mean_rng);
      }
    }
    std::vector<SamplePair> out;
    int done = 0;
    while (done < n) {
      const int b = std::min(16, n - done);
      Tensor<T> z = normal_sample<T>(rng, {b, cfg_.dz});
      Tensor<T> w = map_latent(ad::constant(std::move(z))).value();
      if (psi < 1.0) {
        for (int i = 0; i < b; ++i)
          for (int j = 0; j < cfg_.dw; ++j) {
            T& v = w[static_cast<std::int64_t>(i) * cfg_.dw + j];
            v = wb[j] + static_cast<T>(psi) * (v - wb[j]);
          }
      }
      Synthesis syn = synthesize_from_w(ad::constant(std::move(w)), noise);
      Tensor<int> labels = nn::argmax_c(syn.logits.value());
      const int r = cfg_.resolution;
      for (int i = 0; i < b; ++i) {
        SamplePair p;
        p.image = Tensor<T>({cfg_.img_channels, r, r});
        const std::int64_t img_n = p.image.numel();
        for (std::int64_t k = 0; k < img_n; ++k)
          p.image[k] = syn.image.value()[static_cast<std::int64_t>(i) * img_n + k];
        p.labels = Tensor<int>({r, r});
        for (std::int64_t k = 0; k < p.labels.numel(); ++k)
          p.labels[k] = labels[static_cast<std::int64_t>(i) * r * r + k];
        out.push_back(std::move(p));
      }
      done += b;
    }
    return out;
  }

 private:
  struct Block {
    nn::Dense<T> affine;        // dw -> input-channel scales
    nn::Conv<T> conv;           // 3x3, modulated input
    ad::Var<T> noise_strength;  // per output channel
  };

  ad::Var<T> run_block(const Block& blk, const ad::Var<T>& x, const ad::Var<T>& w,
                       SeededRng* noise_rng) const {
    const int n = x.shape()[0], h = x.shape()[2], ww = x.shape()[3];
    ad::Var<T> scales = blk.affine.forward(w);  // [N, Cin]
    ad::Var<T> y = ad::mul(x, ad::bcast_hw(scales, h, ww));
    y = ad::conv2d(y, blk.conv.w, blk.conv.spec);
    y = nn::rms_norm_hw(y);
    const int c = y.shape()[1];
    if (cfg_.per_layer_noise && noise_rng != nullptr) {
      Tensor<T> noise = normal_sample<T>(*noise_rng, {n, 1, h, ww});
      ad::Var<T> nmap = ad::bcast_cmap(ad::constant(std::move(noise)), c);
      y = ad::add(y, ad::mul(nmap, ad::bcast_c(blk.noise_strength, n, h, ww)));
    }
    y = ad::add(y, ad::bcast_c(blk.conv.b, n, h, ww));
    return ad::leaky_relu(y, T(cfg_.leaky_slope));
  }

  GeneratorConfig cfg_;
  std::vector<nn::Dense<T>> mapping_;
  ad::Var<T> const_input_;  // [C0, base, base]
  std::vector<Block> blocks_;
  std::vector<nn::Conv<T>> heads_img_;
  std::vector<nn::Conv<T>> heads_seg_;
  std::vector<ad::Var<T>> params_;
  bool frozen_ = false;
};

}  // namespace jgseg
