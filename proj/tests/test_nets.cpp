// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "jgseg/critics.hpp"
#include "jgseg/encoder.hpp"
#include "jgseg/generator.hpp"
#include "jgseg/gradcheck.hpp"

using namespace jgseg;
using ad::Var;

namespace {

GeneratorConfig tiny_gen_cfg() {
  GeneratorConfig cfg;
  cfg.resolution = 8;
  cfg.dz = 6;
  cfg.dw = 8;
  cfg.mapping_layers = 2;
  cfg.mapping_width = 8;
  cfg.channels = {6, 5};
  cfg.num_classes = 3;
  return cfg;
}

}  // namespace

TEST_CASE("map_latent is deterministic and differentiable") {
  ParameterStore<double> ps;
  SeededRng rng(11, "init");
  Generator<double> gen(ps, tiny_gen_cfg(), rng);

  SeededRng zr(1, "z");
  Tensor<double> z = normal_sample<double>(zr, {2, 6});
  Tensor<double> w1 = gen.map_latent_value(z);
  Tensor<double> w2 = gen.map_latent_value(z);
  REQUIRE(w1.vec() == w2.vec());

  SECTION("finite-difference Jacobian consistency") {
    Var<double> zv(z, true);
    auto f = [&]() { return ad::sum_all(ad::square(gen.map_latent(zv))); };
    auto res = gradcheck(f, {zv});
    REQUIRE(res.max_rel_err < 1e-5);
  }
  SECTION("wrong latent length is rejected") {
    REQUIRE_THROWS_AS(gen.map_latent(ad::constant(Tensor<double>({2, 5}))), InvalidArgument);
  }
}

TEST_CASE("zero-initialized mapping maps every z to w = 0") {
  ParameterStore<double> ps;
  SeededRng rng(11, "init");
  Generator<double> gen(ps, tiny_gen_cfg(), rng);
  for (const auto& e : ps.entries())
    if (e.group == groups::kGMapping)
      for (std::int64_t i = 0; i < e.var.numel(); ++i) e.var.mutable_value()[i] = 0.0;
  SeededRng zr(5, "z");
  Tensor<double> w = gen.map_latent_value(normal_sample<double>(zr, {3, 6}));
  for (std::int64_t i = 0; i < w.numel(); ++i) REQUIRE(w[i] == 0.0);
}

TEST_CASE("mean_style and truncate") {
  ParameterStore<float> ps;
  SeededRng rng(12, "init");
  Generator<float> gen(ps, tiny_gen_cfg(), rng);

  SECTION("n = 1 equals that sample's style") {
    SeededRng r1(9, "ms"), r2(9, "ms");
    Tensor<float> wbar = gen.mean_style(1, r1);
    Tensor<float> z = normal_sample<float>(r2, {1, 6});
    Tensor<float> w = gen.map_latent_value(z);
    for (int j = 0; j < 8; ++j) REQUIRE(wbar[j] == Catch::Approx(w[j]).margin(1e-6));
  }
  SECTION("large-n means concentrate across seeds") {
    SeededRng ra(1, "a"), rb(2, "b");
    Tensor<float> ma = gen.mean_style(10000, ra);
    Tensor<float> mb = gen.mean_style(10000, rb);
    for (int j = 0; j < 8; ++j) REQUIRE(std::abs(ma[j] - mb[j]) < 0.05);
  }
  SECTION("n = 0 rejected") {
    SeededRng r(1, "x");
    REQUIRE_THROWS_AS(gen.mean_style(0, r), InvalidArgument);
  }
  SECTION("truncate formula and range checks") {
    Tensor<float> w = Tensor<float>::full({8}, 1.0f);
    Tensor<float> wbar({8});
    Tensor<float> t = truncate(w, wbar, 0.7);
    for (int j = 0; j < 8; ++j) REQUIRE(t[j] == Catch::Approx(0.7f));
    Tensor<float> id = truncate(w, wbar, 1.0);
    REQUIRE(id.vec() == w.vec());
    Tensor<float> full = truncate(w, wbar, 0.0);
    REQUIRE(full.vec() == wbar.vec());
    REQUIRE_THROWS_AS(truncate(w, wbar, 1.5), InvalidArgument);
    REQUIRE_THROWS_AS(truncate(w, wbar, -0.1), InvalidArgument);
  }
  SECTION("broadcast copies w into every style row") {
    SeededRng zr(3, "z");
    Tensor<float> w = normal_sample<float>(zr, {8});
    Tensor<float> wp = gen.broadcast_style(w);
    REQUIRE(wp.shape() == Shape{gen.config().style_sites(), 8});
    for (int l = 0; l < gen.config().style_sites(); ++l)
      for (int j = 0; j < 8; ++j) REQUIRE(wp[l * 8 + j] == w[j]);
  }
}

TEST_CASE("synthesize shape contract at the default resolution") {
  GeneratorConfig cfg;  // resolution 64, L = 10
  REQUIRE(cfg.levels() == 5);
  REQUIRE(cfg.style_sites() == 10);
  ParameterStore<float> ps;
  SeededRng rng(13, "init");
  Generator<float> gen(ps, cfg, rng);
  SeededRng zr(1, "z");
  Tensor<float> z = normal_sample<float>(zr, {1, cfg.dz});
  auto syn = gen.synthesize_from_w(ad::constant(gen.map_latent_value(z)), NoiseMode::zero());
  REQUIRE(syn.image.shape() == Shape{1, 1, 64, 64});
  REQUIRE(syn.logits.shape() == Shape{1, 2, 64, 64});
}

TEST_CASE("synthesize determinism and wrong style-count rejection") {
  ParameterStore<float> ps;
  SeededRng rng(14, "init");
  Generator<float> gen(ps, tiny_gen_cfg(), rng);
  SeededRng zr(2, "z");
  Tensor<float> w = gen.map_latent_value(normal_sample<float>(zr, {1, 6}));
  auto a = gen.synthesize_from_w(ad::constant(w), NoiseMode::fixed(42));
  auto b = gen.synthesize_from_w(ad::constant(w), NoiseMode::fixed(42));
  REQUIRE(a.image.value().vec() == b.image.value().vec());
  REQUIRE(a.logits.value().vec() == b.logits.value().vec());

  std::vector<Var<float>> too_few(3, ad::constant(Tensor<float>({1, 8})));
  REQUIRE_THROWS_AS(gen.synthesize(too_few, NoiseMode::zero()), InvalidArgument);
}

TEST_CASE("skip-sum recomposition matches per-level head contributions") {
  // 2-level miniature: final output must equal
  // upsample(level-0 contribution) + level-1 contribution.
  ParameterStore<float> ps;
  SeededRng rng(15, "init");
  Generator<float> gen(ps, tiny_gen_cfg(), rng);
  SeededRng zr(3, "z");
  Tensor<float> w = gen.map_latent_value(normal_sample<float>(zr, {1, 6}));
  auto syn = gen.synthesize_from_w(ad::constant(w), NoiseMode::fixed(7));
  REQUIRE(syn.level_images.size() == 2);

  ad::NoGrad ng;
  auto recompose = [](const std::vector<Var<float>>& levels) {
    Var<float> acc = levels[0];
    for (size_t i = 1; i < levels.size(); ++i) acc = ad::add(ad::upsample2(acc), levels[i]);
    return acc;
  };
  Tensor<float> img = recompose(syn.level_images).value();
  Tensor<float> seg = recompose(syn.level_logits).value();
  for (std::int64_t i = 0; i < img.numel(); ++i)
    REQUIRE(img[i] == Catch::Approx(syn.image.value()[i]).margin(1e-6));
  for (std::int64_t i = 0; i < seg.numel(); ++i)
    REQUIRE(seg[i] == Catch::Approx(syn.logits.value()[i]).margin(1e-6));
}

TEST_CASE("branch sharing: reachability of parameter groups") {
  ParameterStore<double> ps;
  SeededRng rng(16, "init");
  Generator<double> gen(ps, tiny_gen_cfg(), rng);
  SeededRng zr(4, "z");
  Var<double> z(normal_sample<double>(zr, {1, 6}), false);
  // Active noise so the per-layer strengths participate in the graph.
  auto syn = gen.synthesize_from_w(gen.map_latent(z), NoiseMode::fixed(11));

  std::vector<Var<double>> shared = ps.group_vars(groups::kGShared);
  std::vector<Var<double>> timg = ps.group_vars(groups::kGTImage);
  std::vector<Var<double>> tseg = ps.group_vars(groups::kGTSeg);

  auto g_img = ad::grad(ad::sum_all(syn.image), shared);
  for (const auto& g : g_img) REQUIRE(g.defined());
  auto g_seg = ad::grad(ad::sum_all(syn.logits), shared);
  for (const auto& g : g_seg) REQUIRE(g.defined());

  auto img_to_tseg = ad::grad(ad::sum_all(syn.image), tseg);
  for (const auto& g : img_to_tseg) REQUIRE_FALSE(g.defined());
  auto seg_to_timg = ad::grad(ad::sum_all(syn.logits), timg);
  for (const auto& g : seg_to_timg) REQUIRE_FALSE(g.defined());

  auto img_to_timg = ad::grad(ad::sum_all(syn.image), timg);
  for (const auto& g : img_to_timg) REQUIRE(g.defined());
  auto seg_to_tseg = ad::grad(ad::sum_all(syn.logits), tseg);
  for (const auto& g : seg_to_tseg) REQUIRE(g.defined());
}

TEST_CASE("zeroing tSeg head weights leaves image unchanged, logits = bias") {
  ParameterStore<float> ps;
  SeededRng rng(17, "init");
  Generator<float> gen(ps, tiny_gen_cfg(), rng);
  SeededRng zr(5, "z");
  Tensor<float> w = gen.map_latent_value(normal_sample<float>(zr, {1, 6}));
  auto before = gen.synthesize_from_w(ad::constant(w), NoiseMode::fixed(3));

  for (const auto& e : ps.entries()) {
    if (e.group == groups::kGTSeg)
      for (std::int64_t i = 0; i < e.var.numel(); ++i) e.var.mutable_value()[i] = 0.0f;
  }
  // Re-plant distinct biases so the constant field is visible.
  for (const auto& e : ps.entries())
    if (e.group == groups::kGTSeg && e.name.find(".b") != std::string::npos)
      for (std::int64_t i = 0; i < e.var.numel(); ++i)
        e.var.mutable_value()[i] = 0.5f * static_cast<float>(i + 1);

  auto after = gen.synthesize_from_w(ad::constant(w), NoiseMode::fixed(3));
  REQUIRE(after.image.value().vec() == before.image.value().vec());

  // Logit field: per-channel constant equal to the sum of per-level biases
  // (each coarser bias is upsampled, which preserves constants).
  const auto& lg = after.logits.value();
  const int c = lg.dim(1), h = lg.dim(2), wd = lg.dim(3);
  for (int ch = 0; ch < c; ++ch) {
    const float v0 = lg[static_cast<std::int64_t>(ch) * h * wd];
    for (std::int64_t k = 0; k < static_cast<std::int64_t>(h) * wd; ++k)
      REQUIRE(lg[static_cast<std::int64_t>(ch) * h * wd + k] == Catch::Approx(v0).margin(1e-6));
  }
}

TEST_CASE("style perturbation keeps image response bounded") {
  ParameterStore<float> ps;
  SeededRng rng(18, "init");
  Generator<float> gen(ps, tiny_gen_cfg(), rng);
  SeededRng zr(6, "z");
  SeededRng pr(7, "probe");
  const int L = gen.config().style_sites();
  for (int probe = 0; probe < 10; ++probe) {
    Tensor<float> w = gen.map_latent_value(normal_sample<float>(zr, {1, 6}));
    Tensor<float> wp = gen.broadcast_style(w.reshaped({8}));
    auto base = gen.synthesize_wplus(wp, NoiseMode::zero());
    Tensor<float> delta = normal_sample<float>(pr, {8});
    double nrm = 0;
    for (int j = 0; j < 8; ++j) nrm += delta[j] * delta[j];
    const int row = probe % L;
    for (int j = 0; j < 8; ++j)
      wp[static_cast<std::int64_t>(row) * 8 + j] +=
          1e-3f * delta[j] / static_cast<float>(std::sqrt(nrm));
    auto pert = gen.synthesize_wplus(wp, NoiseMode::zero());
    double l2 = 0;
    for (std::int64_t i = 0; i < base.image.numel(); ++i) {
      const double d = pert.image.value()[i] - base.image.value()[i];
      l2 += d * d;
    }
    REQUIRE(std::isfinite(l2));
    REQUIRE(std::sqrt(l2) < 10.0);
  }
}

TEST_CASE("sample_pairs shapes and truncation collapse") {
  ParameterStore<float> ps;
  SeededRng rng(19, "init");
  Generator<float> gen(ps, tiny_gen_cfg(), rng);
  SeededRng sr(8, "sample");
  auto pairs = gen.sample_pairs(3, 1.0, sr, NoiseMode::zero());
  REQUIRE(pairs.size() == 3);
  for (const auto& p : pairs) {
    REQUIRE(p.image.shape() == Shape{1, 8, 8});
    REQUIRE(p.labels.shape() == Shape{8, 8});
    for (std::int64_t i = 0; i < p.labels.numel(); ++i) {
      REQUIRE(p.labels[i] >= 0);
      REQUIRE(p.labels[i] < 3);
    }
  }
  SECTION("psi = 0 collapses every sample to the mean style") {
    SeededRng sr2(9, "sample2");
    auto collapsed = gen.sample_pairs(4, 0.0, sr2, NoiseMode::zero());
    for (size_t i = 1; i < collapsed.size(); ++i)
      REQUIRE(collapsed[i].image.vec() == collapsed[0].image.vec());
  }
}

TEST_CASE("image critic: determinism, zero final layer, gradients") {
  CriticConfig cfg;
  cfg.resolution = 8;
  cfg.base_channels = 4;
  cfg.max_channels = 8;
  ParameterStore<double> ps;
  SeededRng rng(20, "init");
  ImageCritic<double> dr(ps, cfg, rng);
  SeededRng xr(1, "x");
  Tensor<double> x = normal_sample<double>(xr, {2, 1, 8, 8});

  SECTION("deterministic") {
    ad::NoGrad ng;
    auto a = dr.score_image(ad::constant(x)).value();
    auto b = dr.score_image(ad::constant(x)).value();
    REQUIRE(a.vec() == b.vec());
    REQUIRE(a.shape() == Shape{2, 1});
    for (std::int64_t i = 0; i < a.numel(); ++i) REQUIRE(std::isfinite(a[i]));
  }
  SECTION("zero-initialized final layer scores 0") {
    auto out_w = ps.get("D_r.out.w");
    auto out_b = ps.get("D_r.out.b");
    for (std::int64_t i = 0; i < out_w.numel(); ++i) out_w.mutable_value()[i] = 0.0;
    for (std::int64_t i = 0; i < out_b.numel(); ++i) out_b.mutable_value()[i] = 0.0;
    ad::NoGrad ng;
    auto s = dr.score_image(ad::constant(x)).value();
    for (std::int64_t i = 0; i < s.numel(); ++i) REQUIRE(s[i] == 0.0);
  }
  SECTION("input gradient matches finite differences") {
    Var<double> xv(x, true);
    auto f = [&]() { return ad::sum_all(dr.score_image(xv)); };
    auto res = gradcheck(f, {xv});
    REQUIRE(res.max_rel_err < 1e-5);
  }
  SECTION("shape mismatch rejected") {
    REQUIRE_THROWS_AS(dr.score_image(ad::constant(Tensor<double>({2, 1, 4, 4}))),
                      InvalidArgument);
  }
}

TEST_CASE("encode_pair conventions") {
  SECTION("labels become one-hot") {
    Tensor<int> labels({1, 2, 2});  // all zeros
    auto p = encode_pair<float>(ad::constant(Tensor<float>({1, 1, 2, 2})), labels, 2);
    const auto& probs = p.mask_probs.value();
    for (int k = 0; k < 4; ++k) {
      REQUIRE(probs[k] == 1.0f);      // channel 0
      REQUIRE(probs[4 + k] == 0.0f);  // channel 1
    }
  }
  SECTION("equal logits become uniform probabilities") {
    auto p = encode_pair<float>(ad::constant(Tensor<float>({1, 1, 2, 2})),
                                ad::constant(Tensor<float>::full({1, 4, 2, 2}, 1.7f)));
    for (std::int64_t i = 0; i < p.mask_probs.numel(); ++i)
      REQUIRE(p.mask_probs.value()[i] == Catch::Approx(0.25f));
  }
  SECTION("softmax closed form (2,0)") {
    Tensor<float> logits({1, 2, 1, 1}, {2.0f, 0.0f});
    auto p = encode_pair<float>(ad::constant(Tensor<float>({1, 1, 1, 1})),
                                ad::constant(logits));
    REQUIRE(p.mask_probs.value()[0] == Catch::Approx(0.8808).margin(1e-4));
    REQUIRE(p.mask_probs.value()[1] == Catch::Approx(0.1192).margin(1e-4));
  }
  SECTION("out-of-range class index rejected") {
    Tensor<int> labels({1, 1, 1}, {5});
    REQUIRE_THROWS_AS(encode_pair<float>(ad::constant(Tensor<float>({1, 1, 1, 1})), labels, 2),
                      InvalidArgument);
  }
}

TEST_CASE("pair critic: scales, equivariance, gradient flow") {
  CriticConfig cfg;
  cfg.resolution = 16;
  cfg.pair_base_channels = 4;
  cfg.max_channels = 8;
  cfg.num_classes = 2;
  ParameterStore<float> ps;
  SeededRng rng(21, "init");
  PairCritic<float> dm(ps, cfg, rng);
  SeededRng xr(2, "x");
  Tensor<float> img = normal_sample<float>(xr, {2, 1, 16, 16});
  Tensor<float> logits = normal_sample<float>(xr, {2, 2, 16, 16});

  auto pair = encode_pair<float>(ad::constant(img), ad::constant(logits));
  auto maps = dm.score_pair(pair);
  REQUIRE(maps.size() == 2);
  REQUIRE(maps[0].shape()[2] > maps[1].shape()[2]);  // strictly decreasing
  REQUIRE(maps[1].shape()[2] > 1);                   // patch-wise

  SECTION("batch equivariance under swapping the two samples") {
    Tensor<float> img_sw = img;
    Tensor<float> log_sw = logits;
    const std::int64_t istride = img.numel() / 2, lstride = logits.numel() / 2;
    for (std::int64_t k = 0; k < istride; ++k)
      std::swap(img_sw[k], img_sw[istride + k]);
    for (std::int64_t k = 0; k < lstride; ++k)
      std::swap(log_sw[k], log_sw[lstride + k]);
    auto maps_sw =
        dm.score_pair(encode_pair<float>(ad::constant(img_sw), ad::constant(log_sw)));
    for (size_t s = 0; s < maps.size(); ++s) {
      const auto& a = maps[s].value();
      const auto& b = maps_sw[s].value();
      const std::int64_t stride = a.numel() / 2;
      for (std::int64_t k = 0; k < stride; ++k) {
        REQUIRE(a[k] == b[stride + k]);
        REQUIRE(a[stride + k] == b[k]);
      }
    }
  }
  SECTION("gradients flow to both image and mask inputs at initialization") {
    Var<float> iv(img, true);
    Var<float> lv(logits, true);
    auto p = encode_pair<float>(iv, lv);
    auto ms = dm.score_pair(p);
    Var<float> s;
    for (size_t i = 0; i < ms.size(); ++i) s = i == 0 ? ad::sum_all(ms[i]) : ad::add(s, ad::sum_all(ms[i]));
    auto gs = ad::grad(s, {iv, lv});
    REQUIRE(gs[0].defined());
    REQUIRE(gs[1].defined());
    double ni = 0, nl = 0;
    for (std::int64_t k = 0; k < gs[0].numel(); ++k) ni += std::abs(gs[0].value()[k]);
    for (std::int64_t k = 0; k < gs[1].numel(); ++k) nl += std::abs(gs[1].value()[k]);
    REQUIRE(ni > 0.0);
    REQUIRE(nl > 0.0);
  }
}

TEST_CASE("encoder: shape contract, determinism, jacobian sanity") {
  SECTION("default-size contract [L, dw] = [10, 128]") {
    EncoderConfig cfg;  // resolution 64, 10 sites, dw 128
    cfg.base_channels = 8;
    cfg.max_channels = 32;
    ParameterStore<float> ps;
    SeededRng rng(22, "init");
    Encoder<float> enc(ps, cfg, rng);
    SeededRng xr(3, "x");
    Tensor<float> x = normal_sample<float>(xr, {1, 1, 64, 64});
    Tensor<float> code = enc.encode_wplus(x);
    REQUIRE(code.shape() == Shape{10, 128});
    Tensor<float> code2 = enc.encode_wplus(x);
    REQUIRE(code.vec() == code2.vec());
  }
  SECTION("tiny-config jacobian matches finite differences") {
    EncoderConfig cfg;
    cfg.resolution = 8;
    cfg.dw = 4;
    cfg.style_sites = 4;
    cfg.base_channels = 3;
    cfg.max_channels = 6;
    cfg.stages = 2;
    ParameterStore<double> ps;
    SeededRng rng(23, "init");
    Encoder<double> enc(ps, cfg, rng);
    SeededRng xr(4, "x");
    Var<double> x(normal_sample<double>(xr, {1, 1, 8, 8}), true);
    auto f = [&]() {
      auto sites = enc.encode_sites(x);
      Var<double> acc;
      for (size_t i = 0; i < sites.size(); ++i)
        acc = i == 0 ? ad::sum_all(ad::square(sites[i]))
                     : ad::add(acc, ad::sum_all(ad::square(sites[i])));
      return acc;
    };
    auto res = gradcheck(f, {x});
    REQUIRE(res.max_rel_err < 1e-5);
  }
  SECTION("shape mismatch rejected") {
    EncoderConfig cfg;
    cfg.resolution = 8;
    ParameterStore<float> ps;
    SeededRng rng(24, "init");
    Encoder<float> enc(ps, cfg, rng);
    REQUIRE_THROWS_AS(enc.encode_wplus(Tensor<float>({1, 16, 16})), InvalidArgument);
  }
}
