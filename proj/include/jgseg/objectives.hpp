// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// All training objectives: logistic GAN losses in logit parameterization
// (non-saturating generator form by default, literal minimax as an option),
// R1 penalty, segmentation losses (pixel-wise CE, soft dice), the fixed
// random-feature perceptual distance, encoder loss and the inversion
// reconstruction loss.

#pragma once

#include <string>
#include <vector>

#include "jgseg/critics.hpp"
#include "jgseg/encoder.hpp"
#include "jgseg/generator.hpp"
#include "jgseg/nn.hpp"

namespace jgseg {

struct LossWeights {
  double lambda1 = 1.0;   // encoder pixel-L2 weight
  double lambda2 = 0.1;   // inversion encoder-consistency weight
  double lambda3 = 0.1;   // reconstruction pixel-L2 weight
  double r1_gamma = 10.0; // stability regularizer weight
  double dice_eps = 1.0;  // dice smoothing

  void validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || r1_gamma < 0 || dice_eps < 0)
      throw InvalidArgument("loss weights must be non-negative");
  }
};

enum class GanLossKind { kNonSaturating, kMinimax };
enum class CeReduction { kSum, kMean };

namespace detail {

template <typename T>
ad::Var<T> mean_softplus(const ad::Var<T>& logits, bool negate_input) {
  ad::Var<T> l = negate_input ? ad::neg(logits) : logits;
  return ad::mean_all(ad::softplus(l));
}

}  // namespace detail

// Discriminator logistic loss: mean softplus(-real) + mean softplus(fake).
template <typename T>
ad::Var<T> d_logistic_loss(const ad::Var<T>& real_logits, const ad::Var<T>& fake_logits) {
  if (!real_logits.defined() || !fake_logits.defined())
    throw InvalidArgument("d_logistic_loss: empty logit collection");
  return ad::add(detail::mean_softplus(real_logits, true),
                 detail::mean_softplus(fake_logits, false));
}

// Same logistic form averaged uniformly over scales (each map already
// averages over its patches).
template <typename T>
ad::Var<T> d_pair_loss(const std::vector<ad::Var<T>>& real_maps,
                       const std::vector<ad::Var<T>>& fake_maps) {
  if (real_maps.empty() || fake_maps.empty())
    throw InvalidArgument("d_pair_loss: empty logit maps");
  if (real_maps.size() != fake_maps.size())
    throw InvalidArgument("d_pair_loss: scale count mismatch");
  ad::Var<T> acc;
  for (size_t s = 0; s < real_maps.size(); ++s) {
    ad::Var<T> term = ad::add(detail::mean_softplus(real_maps[s], true),
                              detail::mean_softplus(fake_maps[s], false));
    acc = s == 0 ? term : ad::add(acc, term);
  }
  return ad::mul_scalar(acc, T(1) / static_cast<T>(real_maps.size()));
}

// Generator loss. The caller must build `fake_pair_maps` from a pair whose
// image went through stop_gradient; the D_r term's logits use the live image.
template <typename T>
ad::Var<T> g_loss(const ad::Var<T>& fake_image_logits,
                  const std::vector<ad::Var<T>>& fake_pair_maps,
                  GanLossKind kind = GanLossKind::kNonSaturating) {
  if (!fake_image_logits.defined() || fake_pair_maps.empty())
    throw InvalidArgument("g_loss: empty logit collection");
  ad::Var<T> pair_term;
  for (size_t s = 0; s < fake_pair_maps.size(); ++s) {
    // Non-saturating: softplus(-l). Minimax (literal objective): -softplus(l).
    ad::Var<T> t = kind == GanLossKind::kNonSaturating
                       ? detail::mean_softplus(fake_pair_maps[s], true)
                       : ad::neg(detail::mean_softplus(fake_pair_maps[s], false));
    pair_term = s == 0 ? t : ad::add(pair_term, t);
  }
  pair_term = ad::mul_scalar(pair_term, T(1) / static_cast<T>(fake_pair_maps.size()));
  ad::Var<T> img_term = kind == GanLossKind::kNonSaturating
                            ? detail::mean_softplus(fake_image_logits, true)
                            : ad::neg(detail::mean_softplus(fake_image_logits, false));
  return ad::add(img_term, pair_term);
}

// (gamma/2) * mean over batch of the squared input-gradient norm of the
// critic logits. `input` must be a grad-enabled leaf that fed the logits.
template <typename T>
ad::Var<T> r1_penalty(const ad::Var<T>& logits, const ad::Var<T>& input, double gamma) {
  const int batch = input.shape()[0];
  auto gs = ad::grad(ad::sum_all(logits), {input}, /*create_graph=*/true);
  if (!gs[0].defined()) return ad::scalar_const(T(0));  // constant critic
  ad::Var<T> sq = ad::sum_all(ad::square(gs[0]));
  return ad::mul_scalar(sq, static_cast<T>(gamma / 2.0 / batch));
}

template <typename T>
ad::Var<T> r1_penalty_maps(const std::vector<ad::Var<T>>& maps, const ad::Var<T>& input,
                           double gamma) {
  if (maps.empty()) throw InvalidArgument("r1_penalty_maps: no logit maps");
  ad::Var<T> s;
  for (size_t i = 0; i < maps.size(); ++i)
    s = i == 0 ? ad::sum_all(maps[i]) : ad::add(s, ad::sum_all(maps[i]));
  const int batch = input.shape()[0];
  auto gs = ad::grad(s, {input}, /*create_graph=*/true);
  if (!gs[0].defined()) return ad::scalar_const(T(0));
  return ad::mul_scalar(ad::sum_all(ad::square(gs[0])), static_cast<T>(gamma / 2.0 / batch));
}

// Pixel-wise cross-entropy of logits against integer labels.
template <typename T>
ad::Var<T> cross_entropy_mask(const Tensor<int>& labels, const ad::Var<T>& logits,
                              CeReduction reduction = CeReduction::kSum) {
  ad::Var<T> lp = nn::log_softmax_c(logits);
  ad::Var<T> picked = ad::select_label(lp, labels);  // validates label range
  ad::Var<T> s = ad::neg(ad::sum_all(picked));
  if (reduction == CeReduction::kMean) s = ad::mul_scalar(s, T(1) / static_cast<T>(picked.numel()));
  return s;
}

// Soft dice over foreground classes (background = class 0 excluded):
// 1 - mean_c (2 * sum p_c y_c + eps) / (sum p_c + sum y_c + eps).
// Sums run over the pixels of each sample; the ratio is averaged over
// foreground classes and batch samples.
template <typename T>
ad::Var<T> dice_loss(const Tensor<int>& labels, const ad::Var<T>& logits, double eps = 1.0) {
  const int c = logits.shape()[1];
  if (c < 2) throw InvalidArgument("dice_loss requires at least 2 classes");
  ad::Var<T> p = nn::softmax_c(logits);
  ad::Var<T> y = ad::constant(nn::one_hot<T>(labels, c));
  ad::Var<T> inter = ad::sum_hw(ad::mul(p, y));            // [N,C]
  ad::Var<T> tot = ad::add(ad::sum_hw(p), ad::sum_hw(y));  // [N,C]
  ad::Var<T> num = ad::add_scalar(ad::mul_scalar(inter, T(2)), static_cast<T>(eps));
  ad::Var<T> den = ad::add_scalar(tot, static_cast<T>(eps));
  ad::Var<T> ratio = ad::div(num, den);  // [N,C]
  const int n = logits.shape()[0];
  ad::Var<T> fg = ad::slice_c(ad::reshape(ratio, {n, c, 1, 1}), 1, c - 1);
  return ad::add_scalar(ad::neg(ad::mean_all(fg)), T(1));
}

// ---------------------------------------------------------------------------
// Fixed-feature perceptual distance
// ---------------------------------------------------------------------------

struct PerceptualConfig {
  int img_channels = 1;
  int stages = 3;
  int base_channels = 8;
  std::uint64_t seed = 77;
  // Activation |v| + beta * v: magnitude-dominated features tolerate global
  // polarity changes while keeping the distance strictly sign-sensitive.
  double odd_beta = 0.2;
};

// Non-learned conv feature extractor. Identical seeds build identical nets.
template <typename T>
class PerceptualNet {
 public:
  explicit PerceptualNet(const PerceptualConfig& cfg = {}) : cfg_(cfg) {
    SeededRng rng(cfg.seed, "perceptual");
    int cin = cfg.img_channels;
    for (int s = 0; s < cfg.stages; ++s) {
      const int cout = cfg.base_channels << s;
      weights_.push_back(ad::constant(
          nn::he_normal<T>(rng, {cout, cin, 3, 3}, static_cast<std::int64_t>(cin) * 9)));
      cin = cout;
    }
  }

  const PerceptualConfig& config() const { return cfg_; }

  // Channel-normalized features per stage.
  std::vector<ad::Var<T>> features(const ad::Var<T>& x) const {
    std::vector<ad::Var<T>> out;
    ad::Var<T> h = x;
    for (size_t s = 0; s < weights_.size(); ++s) {
      h = ad::conv2d(h, weights_[s], {1, 1});
      h = ad::add(ad::abs(h), ad::mul_scalar(h, static_cast<T>(cfg_.odd_beta)));
      const int c = h.shape()[1];
      ad::Var<T> norm = ad::rsqrt(ad::add_scalar(ad::sum_c(ad::mul(h, h)), T(1e-8)));
      out.push_back(ad::mul(h, ad::bcast_cmap(norm, c)));
      if (s + 1 < weights_.size()) h = ad::avgpool2(h);
    }
    return out;
  }

 private:
  PerceptualConfig cfg_;
  std::vector<ad::Var<T>> weights_;
};

// Per-image mean squared difference: [N,C,H,W] x2 -> [N].
template <typename T>
ad::Var<T> mse_per_image(const ad::Var<T>& a, const ad::Var<T>& b) {
  ad::Var<T> d = ad::sub(a, b);
  const int c = a.shape()[1], h = a.shape()[2], w = a.shape()[3];
  ad::Var<T> per_ch = ad::sum_hw(ad::mul(d, d));       // [N,C]
  ad::Var<T> per_img = ad::sum_cols(per_ch);           // [N]
  return ad::mul_scalar(per_img, T(1) / (static_cast<T>(c) * h * w));
}

// Per-image perceptual distance: [N,C,H,W] x2 -> [N].
template <typename T>
ad::Var<T> perceptual_distance_per_image(const ad::Var<T>& x1, const ad::Var<T>& x2,
                                         const PerceptualNet<T>& net) {
  if (!(x1.shape() == x2.shape()))
    throw InvalidArgument("perceptual_distance: shape mismatch " + shape_str(x1.shape()) +
                          " vs " + shape_str(x2.shape()));
  auto f1 = net.features(x1);
  auto f2 = net.features(x2);
  ad::Var<T> acc;
  for (size_t s = 0; s < f1.size(); ++s) {
    ad::Var<T> d = mse_per_image(f1[s], f2[s]);
    acc = s == 0 ? d : ad::add(acc, d);
  }
  return acc;
}

// Sum over stages of the mean squared difference of channel-normalized
// features. Symmetric and non-negative.
template <typename T>
ad::Var<T> perceptual_distance(const ad::Var<T>& x1, const ad::Var<T>& x2,
                               const PerceptualNet<T>& net) {
  return ad::mean_all(perceptual_distance_per_image(x1, x2, net));
}

// Eq.-style reconstruction loss: perceptual + lambda3 * mean squared pixels.
template <typename T>
ad::Var<T> reconstruction_loss(const ad::Var<T>& x, const ad::Var<T>& x_star,
                               const PerceptualNet<T>& net, const LossWeights& w) {
  if (!(x.shape() == x_star.shape()))
    throw InvalidArgument("reconstruction_loss: shape mismatch");
  return ad::add(perceptual_distance(x, x_star, net),
                 ad::mul_scalar(nn::mse(x, x_star), static_cast<T>(w.lambda3)));
}

// ---------------------------------------------------------------------------
// Encoder training loss
// ---------------------------------------------------------------------------

template <typename T>
struct EncoderLossParts {
  ad::Var<T> total;
  double supervised = 0.0;     // CE + dice through G_y(E(x)) on labeled data
  double unsupervised = 0.0;   // perceptual + lambda1 * L2 through G_x(E(x))
  double ce = 0.0, dice = 0.0, perceptual = 0.0, pixel_l2 = 0.0;
};

// L_E = L_s + L_u with a frozen generator. `images_all` is the labeled batch
// followed by the unlabeled batch; the first `labels.dim(0)` rows are
// labeled. Throws ContractViolation if gradients reach a generator group.
template <typename T>
EncoderLossParts<T> encoder_loss(const Generator<T>& gen, const Encoder<T>& enc,
                                 const ad::Var<T>& images_all, const Tensor<int>* labels,
                                 const PerceptualNet<T>& net, const LossWeights& w,
                                 CeReduction ce_reduction = CeReduction::kMean) {
  if (!gen.frozen())
    throw ContractViolation("encoder_loss: generator must be frozen (no gradient accumulation "
                            "into any G group)");
  EncoderLossParts<T> parts;
  auto sites = enc.encode_sites(images_all);
  auto syn = gen.synthesize(sites, NoiseMode::zero());

  const int n_lab = labels ? labels->dim(0) : 0;
  ad::Var<T> total;
  if (n_lab > 0) {
    ad::Var<T> logits_lab = n_lab == images_all.shape()[0]
                                ? syn.logits
                                : ad::slice_batch(syn.logits, 0, n_lab);
    ad::Var<T> ce = cross_entropy_mask(*labels, logits_lab, ce_reduction);
    ad::Var<T> dc = dice_loss(*labels, logits_lab, w.dice_eps);
    parts.ce = static_cast<double>(ce.value().item());
    parts.dice = static_cast<double>(dc.value().item());
    parts.supervised = parts.ce + parts.dice;
    total = ad::add(ce, dc);
  }
  ad::Var<T> per = perceptual_distance(syn.image, images_all, net);
  ad::Var<T> l2 = ad::mul_scalar(nn::mse(syn.image, images_all), static_cast<T>(w.lambda1));
  parts.perceptual = static_cast<double>(per.value().item());
  parts.pixel_l2 = static_cast<double>(l2.value().item());
  parts.unsupervised = parts.perceptual + parts.pixel_l2;
  ad::Var<T> lu = ad::add(per, l2);
  parts.total = total.defined() ? ad::add(total, lu) : lu;
  return parts;
}

}  // namespace jgseg
