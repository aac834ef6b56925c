// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "jgseg/inversion.hpp"

using namespace jgseg;

namespace {

struct TinyModel {
  ParameterStore<float> store;
  std::unique_ptr<Generator<float>> gen;
  std::unique_ptr<Encoder<float>> enc;
  PerceptualNet<float> pnet;
  LossWeights lw;

  TinyModel() : pnet(make_pcfg()) {
    GeneratorConfig gcfg;
    gcfg.resolution = 16;
    gcfg.dz = 8;
    gcfg.dw = 10;
    gcfg.mapping_layers = 2;
    gcfg.mapping_width = 10;
    gcfg.channels = {8, 6, 6};
    EncoderConfig ecfg;
    ecfg.resolution = 16;
    ecfg.dw = 10;
    ecfg.style_sites = gcfg.style_sites();
    ecfg.base_channels = 6;
    ecfg.max_channels = 12;
    ecfg.stages = 3;
    SeededRng rng(4, "init");
    gen = std::make_unique<Generator<float>>(store, gcfg, rng);
    enc = std::make_unique<Encoder<float>>(store, ecfg, rng);
  }
  static PerceptualConfig make_pcfg() {
    PerceptualConfig p;
    p.img_channels = 1;
    p.base_channels = 4;
    return p;
  }
  Tensor<float> random_target(std::uint64_t seed) const {
    SeededRng rng(seed, "target");
    return uniform_sample<float>(rng, {1, 16, 16}, -1.0, 1.0);
  }
};

}  // namespace

TEST_CASE("steps = 0 returns the encoder code exactly") {
  TinyModel m;
  Tensor<float> x = m.random_target(1);
  InversionConfig cfg;
  cfg.steps = 0;
  InversionResult res = invert(*m.gen, *m.enc, x, m.pnet, m.lw, cfg);
  Tensor<float> code = m.enc->encode_wplus(x);
  REQUIRE(res.w_plus.vec() == code.vec());
  REQUIRE(res.trace.size() == 1);
}

TEST_CASE("trace has steps + 1 entries and networks stay frozen") {
  TinyModel m;
  Tensor<float> x = m.random_target(2);
  InversionConfig cfg;
  cfg.steps = 7;
  const std::uint64_t h_before = m.store.content_hash();
  InversionResult res = invert(*m.gen, *m.enc, x, m.pnet, m.lw, cfg);
  REQUIRE(res.trace.size() == 8);
  REQUIRE(m.store.content_hash() == h_before);
  REQUIRE_FALSE(m.gen->frozen());  // guard restored the pre-call state
}

TEST_CASE("synthetic fixed point: zero loss and stationary code") {
  TinyModel m;
  LossWeights lw;
  lw.lambda2 = 0.0;
  // Feed an encoder output through G to manufacture a perfectly invertible
  // target with a known code.
  Tensor<float> seed_img = m.random_target(3);
  Tensor<float> w0 = m.enc->encode_wplus(seed_img);
  auto syn = m.gen->synthesize_wplus(w0, NoiseMode::zero());
  Tensor<float> target = syn.image.value().reshaped({1, 16, 16});

  InversionConfig cfg;
  cfg.steps = 10;
  std::vector<Tensor<float>> init{w0};
  auto results = invert_batch(*m.gen, *m.enc, target.reshaped({1, 1, 16, 16}), m.pnet, lw, cfg,
                              &init);
  const InversionResult& res = results[0];
  REQUIRE(res.trace.front() == 0.0);
  for (double v : res.trace) REQUIRE(v == 0.0);
  REQUIRE(res.w_plus.vec() == w0.vec());  // stationary under zero gradients
}

TEST_CASE("batched inversion equals per-image inversion") {
  TinyModel m;
  Tensor<float> x1 = m.random_target(10);
  Tensor<float> x2 = m.random_target(11);
  InversionConfig cfg;
  cfg.steps = 5;
  InversionResult a = invert(*m.gen, *m.enc, x1, m.pnet, m.lw, cfg);
  InversionResult b = invert(*m.gen, *m.enc, x2, m.pnet, m.lw, cfg);

  Tensor<float> both({2, 1, 16, 16});
  std::copy(x1.data(), x1.data() + x1.numel(), both.data());
  std::copy(x2.data(), x2.data() + x2.numel(), both.data() + x1.numel());
  auto batch = invert_batch(*m.gen, *m.enc, both, m.pnet, m.lw, cfg);
  REQUIRE(batch[0].w_plus.vec() == a.w_plus.vec());
  REQUIRE(batch[1].w_plus.vec() == b.w_plus.vec());
  REQUIRE(batch[0].trace == a.trace);
  REQUIRE(batch[1].trace == b.trace);
}

TEST_CASE("segmentation calls are deterministic; encoder-only equals steps=0") {
  TinyModel m;
  Tensor<float> x = m.random_target(20);
  InversionConfig cfg;
  cfg.steps = 4;
  Tensor<int> s1 = segment(*m.gen, *m.enc, x, m.pnet, m.lw, cfg);
  Tensor<int> s2 = segment(*m.gen, *m.enc, x, m.pnet, m.lw, cfg);
  REQUIRE(s1.vec() == s2.vec());

  InversionConfig zero;
  zero.steps = 0;
  Tensor<int> via_invert = segment(*m.gen, *m.enc, x, m.pnet, m.lw, zero);
  Tensor<int> via_encode = encode_only_segment(*m.gen, *m.enc, x);
  REQUIRE(via_invert.vec() == via_encode.vec());
}

TEST_CASE("non-finite targets raise DivergedInversion with the trace") {
  TinyModel m;
  Tensor<float> x({1, 16, 16});
  x[0] = std::numeric_limits<float>::quiet_NaN();
  InversionConfig cfg;
  cfg.steps = 3;
  REQUIRE_THROWS_AS(invert(*m.gen, *m.enc, x, m.pnet, m.lw, cfg), DivergedInversion);
}

TEST_CASE("wrong resolution rejected") {
  TinyModel m;
  InversionConfig cfg;
  REQUIRE_THROWS_AS(invert(*m.gen, *m.enc, Tensor<float>({1, 8, 8}), m.pnet, m.lw, cfg),
                    InvalidArgument);
}
