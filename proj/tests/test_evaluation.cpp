// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "jgseg/evaluation.hpp"

using namespace jgseg;
namespace fs = std::filesystem;

namespace {

// Brute-force oracle built on pixel index sets, independent of the
// confusion-count implementation.
struct SetOracle {
  std::set<std::int64_t> pred, gt;

  SetOracle(const Tensor<int>& p, const Tensor<int>& g, int cls) {
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      if (p[i] == cls) pred.insert(i);
      if (g[i] == cls) gt.insert(i);
    }
  }
  std::int64_t inter() const {
    std::int64_t n = 0;
    for (auto i : pred) n += gt.count(i);
    return n;
  }
  double dice() const {
    if (pred.empty() && gt.empty()) return 1.0;
    return 2.0 * static_cast<double>(inter()) / static_cast<double>(pred.size() + gt.size());
  }
  double jc() const {
    if (pred.empty() && gt.empty()) return 1.0;
    const auto i = inter();
    return static_cast<double>(i) / static_cast<double>(pred.size() + gt.size() - i);
  }
};

Tensor<int> random_mask(SeededRng& rng, int classes) {
  Tensor<int> m({8, 8});
  for (std::int64_t i = 0; i < m.numel(); ++i) m[i] = static_cast<int>(rng.below(classes));
  return m;
}

}  // namespace

TEST_CASE("metric hand values") {
  SECTION("dice/jc on the 2-pixel vs 1-pixel case") {
    Tensor<int> gt({1, 4}, {1, 1, 0, 0});
    Tensor<int> pred({1, 4}, {1, 0, 0, 0});
    REQUIRE(dice_score(pred, gt, 1) == Catch::Approx(2.0 / 3.0));
    REQUIRE(jc_index(pred, gt, 1) == Catch::Approx(0.5));
  }
  SECTION("identity, disjoint and absent-in-both conventions") {
    Tensor<int> a({2, 2}, {1, 0, 0, 1});
    REQUIRE(dice_score(a, a, 1) == 1.0);
    REQUIRE(jc_index(a, a, 1) == 1.0);
    Tensor<int> b({2, 2}, {0, 1, 1, 0});
    REQUIRE(dice_score(a, b, 1) == 0.0);
    REQUIRE(jc_index(a, b, 1) == 0.0);
    Tensor<int> z({2, 2});
    REQUIRE(dice_score(z, z, 1) == 1.0);
    REQUIRE(jc_index(z, z, 1) == 1.0);
  }
  SECTION("miou from hand-built IoUs 0.5 and 1.0 -> 0.75") {
    Tensor<int> gt({2, 4}, {1, 1, 1, 1, 2, 2, 0, 0});
    Tensor<int> pred({2, 4}, {1, 1, 0, 0, 2, 2, 0, 0});
    REQUIRE(miou(pred, gt, 3) == Catch::Approx(0.75));
    REQUIRE(miou(gt, gt, 3) == 1.0);
    REQUIRE_THROWS_AS(miou(pred, gt, 1), InvalidArgument);
  }
  SECTION("shape mismatch rejected") {
    REQUIRE_THROWS_AS(dice_score(Tensor<int>({2, 2}), Tensor<int>({2, 3}), 1), InvalidArgument);
  }
}

TEST_CASE("metrics equal brute-force set oracles on 1000 random pairs") {
  SeededRng rng(31, "masks");
  for (int t = 0; t < 1000; ++t) {
    const int classes = 2 + static_cast<int>(rng.below(3));
    Tensor<int> pred = random_mask(rng, classes);
    Tensor<int> gt = random_mask(rng, classes);
    for (int cls = 1; cls < classes; ++cls) {
      SetOracle oracle(pred, gt, cls);
      REQUIRE(dice_score(pred, gt, cls) == oracle.dice());
      REQUIRE(jc_index(pred, gt, cls) == oracle.jc());
      // dice = 2 jc / (1 + jc) identity.
      const double jc = jc_index(pred, gt, cls);
      REQUIRE(dice_score(pred, gt, cls) == Catch::Approx(2 * jc / (1 + jc)).epsilon(1e-12));
    }
    // mIoU equals the mean of per-class set-oracle IoUs.
    double acc = 0;
    for (int cls = 1; cls < classes; ++cls) acc += SetOracle(pred, gt, cls).jc();
    REQUIRE(miou(pred, gt, classes) == Catch::Approx(acc / (classes - 1)).epsilon(1e-12));
  }
}

TEST_CASE("miou is invariant under foreground class permutation") {
  SeededRng rng(32, "perm");
  for (int t = 0; t < 50; ++t) {
    Tensor<int> pred = random_mask(rng, 3);
    Tensor<int> gt = random_mask(rng, 3);
    Tensor<int> pred_p = pred, gt_p = gt;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
      pred_p[i] = pred[i] == 1 ? 2 : (pred[i] == 2 ? 1 : 0);
      gt_p[i] = gt[i] == 1 ? 2 : (gt[i] == 2 ? 1 : 0);
    }
    REQUIRE(miou(pred, gt, 3) == Catch::Approx(miou(pred_p, gt_p, 3)).epsilon(1e-12));
  }
}

TEST_CASE("evaluate_model protocol") {
  DatasetRecipe r = blobs_a_recipe(16, 71);
  const std::string dir = (fs::temp_directory_path() / "jgseg_eval").string();
  fs::remove_all(dir);
  DatasetManifest m = generate_dataset(r, 20, dir);
  m = split_dataset(m, 0, 10, 0, 8, 2);
  save_manifest(m, dir);
  DatasetCache cache(m);

  SECTION("perfect segmenter scores 1.0 on every metric") {
    int next = 0;
    std::vector<int> ids = cache.split_ids(SplitKind::kTest);
    SegmenterFn perfect = [&](const Tensor<float>&) { return cache.mask(ids[static_cast<size_t>(next++)]); };
    for (const std::string metric : {"dice", "jc", "miou"}) {
      next = 0;
      EvalReport rep = evaluate_model(perfect, cache, SplitKind::kTest, metric);
      REQUIRE(rep.mean == 1.0);
      REQUIRE(rep.median == 1.0);
    }
  }
  SECTION("constant-background segmenter scores 0 dice on blobs") {
    SegmenterFn bg = [&](const Tensor<float>& img) {
      return Tensor<int>({img.dim(1), img.dim(2)});
    };
    EvalReport rep = evaluate_model(bg, cache, SplitKind::kTest, "dice");
    REQUIRE(rep.mean == 0.0);
  }
  SECTION("report JSON round-trips losslessly") {
    SegmenterFn bg = [&](const Tensor<float>& img) {
      return Tensor<int>({img.dim(1), img.dim(2)});
    };
    EvalReport rep = evaluate_model(bg, cache, SplitKind::kTest, "dice");
    EvalReport back = EvalReport::from_json(rep.to_json());
    REQUIRE(back.metric == rep.metric);
    REQUIRE(back.mean == rep.mean);
    REQUIRE(back.per_item == rep.per_item);
  }
  fs::remove_all(dir);
}

TEST_CASE("baseline segmenter training") {
  DatasetRecipe r = blobs_a_recipe(16, 72);
  const std::string dir = (fs::temp_directory_path() / "jgseg_base").string();
  fs::remove_all(dir);
  DatasetManifest m = generate_dataset(r, 30, dir);
  m = split_dataset(m, 2, 20, 0, 6, 3);
  save_manifest(m, dir);
  DatasetCache cache(m);

  BaselineConfig bcfg;
  bcfg.resolution = 16;
  bcfg.base_channels = 6;
  bcfg.max_channels = 24;

  SECTION("loss decreases over the first epochs") {
    std::vector<double> losses;
    train_baseline(cache, 10, bcfg, &losses);
    REQUIRE(losses.size() == 10);
    REQUIRE(losses.back() < losses.front());
  }
  SECTION("k = 1 trains without crashing") {
    DatasetManifest one = split_dataset(m, 1, 20, 0, 6, 4);
    DatasetCache cache1(one);
    BaselineSegmenter net = train_baseline(cache1, 2, bcfg);
    Tensor<int> pred = net.predict(cache1.image(0));
    REQUIRE(pred.shape() == Shape{16, 16});
  }
  SECTION("k = 0 rejected") {
    DatasetManifest zero = split_dataset(m, 0, 20, 0, 6, 5);
    DatasetCache cache0(zero);
    REQUIRE_THROWS_AS(train_baseline(cache0, 1, bcfg), InvalidArgument);
  }
  SECTION("save/load round trip preserves predictions") {
    BaselineSegmenter net = train_baseline(cache, 2, bcfg);
    const std::string ckpt = dir + "/baseline.jgseg";
    net.save(ckpt);
    BaselineSegmenter loaded(bcfg);
    loaded.load(ckpt);
    REQUIRE(loaded.predict(cache.image(0)).vec() == net.predict(cache.image(0)).vec());
  }
  fs::remove_all(dir);
}

TEST_CASE("distillation requires synthetic samples and emits all strategy rows") {
  // Mechanical-path test on an untrained generator (warned, not fatal).
  GeneratorConfig gcfg;
  gcfg.resolution = 16;
  gcfg.dz = 8;
  gcfg.dw = 10;
  gcfg.mapping_layers = 2;
  gcfg.mapping_width = 10;
  gcfg.channels = {8, 6, 6};
  ParameterStore<float> ps;
  SeededRng rng(6, "init");
  Generator<float> gen(ps, gcfg, rng);

  DatasetRecipe r = blobs_a_recipe(16, 73);
  const std::string dir = (fs::temp_directory_path() / "jgseg_distill").string();
  fs::remove_all(dir);
  DatasetManifest m = generate_dataset(r, 30, dir);
  m = split_dataset(m, 2, 20, 0, 4, 6);
  save_manifest(m, dir);
  DatasetCache cache(m);

  RunConfig cfg;
  cfg.distill_synth_count = 8;
  cfg.distill_epochs = 1;
  cfg.distill_real_k = 2;
  cfg.baseline_channels = 6;
  cfg.eval_metric = "dice";
  Tensor<float> w_bar;

  SECTION("synth_count = 0 rejected") {
    RunConfig bad = cfg;
    bad.distill_synth_count = 0;
    REQUIRE_THROWS_AS(run_distillation(bad, gen, w_bar, 0, cache, cache,
                                       {"sim-div"}),
                      InvalidArgument);
  }
  SECTION("all four strategy cells emitted with the untrained warning") {
    std::ostringstream log;
    DistillationReport rep = run_distillation(cfg, gen, w_bar, 0, cache, cache,
                                              {"sim-div", "sim-tru", "mix-div", "mix-tru"}, &log);
    REQUIRE(rep.rows.size() == 4);
    REQUIRE(rep.generator_untrained);
    REQUIRE(log.str().find("untrained") != std::string::npos);
    for (const auto& row : rep.rows) {
      REQUIRE(row.metric_in >= 0.0);
      REQUIRE(row.metric_in <= 1.0);
    }
  }
  fs::remove_all(dir);
}
