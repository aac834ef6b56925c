// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Metrics-driven evaluation: per-image reports, the small supervised
// encoder-decoder baseline, the labeled/unlabeled ablation grid and the
// synthetic-data distillation protocol.

#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jgseg/inversion.hpp"
#include "jgseg/metrics.hpp"
#include "jgseg/training.hpp"

namespace jgseg {

// ---------------------------------------------------------------------------
// Supervised baseline: 4-down/4-up encoder-decoder with skip connections.
// ---------------------------------------------------------------------------

struct BaselineConfig {
  int resolution = 32;
  int img_channels = 1;
  int num_classes = 2;
  int base_channels = 16;
  int max_channels = 128;
  int stages = 4;
  float leaky_slope = 0.2f;
  double lr = 1e-3;
  std::int64_t batch = 16;
  double dice_eps = 1.0;
  std::uint64_t seed = 4242;
};

class BaselineSegmenter {
 public:
  explicit BaselineSegmenter(const BaselineConfig& cfg) : cfg_(cfg) {
    SeededRng rng(cfg.seed, "baseline-init");
    int c = cfg.base_channels;
    stem_ = nn::Conv<float>(store_, "base.stem", "baseline", cfg.img_channels, c, 3, {1, 1}, rng);
    int res = cfg.resolution;
    for (int s = 0; s < cfg.stages && res > 2; ++s) {
      const int cn = std::min(cfg.max_channels, c * 2);
      down_.emplace_back(store_, "base.down" + std::to_string(s), "baseline", c, cn, 3, ad::ConvSpec{1, 1}, rng);
      down_channels_.push_back(cn);
      c = cn;
      res /= 2;
    }
    for (int s = static_cast<int>(down_.size()) - 1; s >= 0; --s) {
      const int skip_c = s > 0 ? down_channels_[static_cast<size_t>(s - 1)] : cfg.base_channels;
      const int cn = skip_c;
      up_.emplace_back(store_, "base.up" + std::to_string(s), "baseline", c + skip_c, cn, 3,
                       ad::ConvSpec{1, 1}, rng);
      c = cn;
    }
    head_ = nn::Conv<float>(store_, "base.head", "baseline", c, cfg.num_classes, 1,
                            ad::ConvSpec{1, 0}, rng);
  }

  const BaselineConfig& config() const { return cfg_; }
  ParameterStore<float>& store() { return store_; }
  const ParameterStore<float>& store() const { return store_; }

  ad::Var<float> forward(const ad::Var<float>& x) const {
    const float slope = cfg_.leaky_slope;
    ad::Var<float> h = ad::leaky_relu(stem_.forward(x), slope);
    std::vector<ad::Var<float>> skips;
    for (const auto& d : down_) {
      skips.push_back(h);
      h = ad::leaky_relu(d.forward(ad::avgpool2(h)), slope);
    }
    for (size_t s = 0; s < up_.size(); ++s) {
      ad::Var<float> up = ad::upsample2(h);
      ad::Var<float> skip = skips[skips.size() - 1 - s];
      h = ad::leaky_relu(up_[s].forward(ad::concat_c<float>({up, skip})), slope);
    }
    return head_.forward(h);
  }

  Tensor<int> predict(const Tensor<float>& image) const {
    ad::NoGrad ng;
    Tensor<float> x = image.rank() == 3
                          ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)})
                          : image;
    Tensor<float> logits = forward(ad::constant(std::move(x))).value();
    return nn::argmax_c(logits).reshaped({cfg_.resolution, cfg_.resolution});
  }

  void save(const std::string& path, std::int64_t step = 0) const {
    CheckpointMeta meta;
    meta.step = step;
    meta.extra["num_classes"] = std::to_string(cfg_.num_classes);
    save_checkpoint(store_, meta, path);
  }
  void load(const std::string& path) { load_checkpoint_into(store_, path); }

 private:
  BaselineConfig cfg_;
  ParameterStore<float> store_;
  nn::Conv<float> stem_;
  std::vector<nn::Conv<float>> down_;
  std::vector<int> down_channels_;
  std::vector<nn::Conv<float>> up_;
  nn::Conv<float> head_;
};

// Training items: (image [C,H,W], labels [H,W]).
struct LabeledItem {
  Tensor<float> image;
  Tensor<int> labels;
};

// CE + dice training on an explicit item pool (used for both real labeled
// data and generator-synthesized data). Deterministic given cfg.seed.
inline BaselineSegmenter train_baseline_on_items(const std::vector<LabeledItem>& items,
                                                 std::int64_t epochs, const BaselineConfig& cfg,
                                                 std::vector<double>* epoch_losses = nullptr) {
  if (items.empty()) throw InvalidArgument("train_baseline: no labeled items");
  BaselineSegmenter net(cfg);
  Adam<float> opt = Adam<float>::from_groups(net.store(), {"baseline"}, cfg.lr, 0.9, 0.999);
  SeededRng rng(cfg.seed, "baseline-train");
  const int n = static_cast<int>(items.size());
  const int bs = static_cast<int>(std::min<std::int64_t>(cfg.batch, n));
  const int c = items[0].image.dim(0), h = items[0].image.dim(1), w = items[0].image.dim(2);
  const std::int64_t img_stride = static_cast<std::int64_t>(c) * h * w;
  const std::int64_t msk_stride = static_cast<std::int64_t>(h) * w;

  for (std::int64_t ep = 0; ep < epochs; ++ep) {
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.below(i + 1))]);
    double ep_loss = 0;
    int batches = 0;
    for (int off = 0; off + bs <= n; off += bs) {
      Tensor<float> images({bs, c, h, w});
      Tensor<int> labels({bs, h, w});
      for (int i = 0; i < bs; ++i) {
        const auto& it = items[static_cast<size_t>(order[static_cast<size_t>(off + i)])];
        std::copy(it.image.data(), it.image.data() + img_stride, images.data() + i * img_stride);
        std::copy(it.labels.data(), it.labels.data() + msk_stride,
                  labels.data() + i * msk_stride);
      }
      auto logits = net.forward(ad::constant(std::move(images)));
      auto loss = ad::add(cross_entropy_mask(labels, logits, CeReduction::kMean),
                          dice_loss(labels, logits, cfg.dice_eps));
      ep_loss += loss.value().item();
      ++batches;
      ad::backward(loss);
      opt.step();
      net.store().zero_grads();
    }
    if (epoch_losses && batches > 0) epoch_losses->push_back(ep_loss / batches);
  }
  return net;
}

// Trains on the labeled split of a dataset. k = 0 is rejected.
inline BaselineSegmenter train_baseline(const DatasetCache& cache, std::int64_t epochs,
                                        const BaselineConfig& cfg,
                                        std::vector<double>* epoch_losses = nullptr) {
  const auto ids = cache.split_ids(SplitKind::kLabeled);
  if (ids.empty()) throw InvalidArgument("train_baseline requires at least one labeled item");
  std::vector<LabeledItem> items;
  for (int id : ids) items.push_back({cache.image(id), cache.mask(id)});
  return train_baseline_on_items(items, epochs, cfg, epoch_losses);
}

// ---------------------------------------------------------------------------
// Evaluation protocol
// ---------------------------------------------------------------------------

using SegmenterFn = std::function<Tensor<int>(const Tensor<float>&)>;

struct EvalReport {
  std::string metric;  // dice | jc | miou
  double mean = 0.0;
  double median = 0.0;
  double dataset_miou = 0.0;  // only for metric == miou
  std::vector<std::pair<int, double>> per_item;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["metric"] = metric;
    j["mean"] = mean;
    j["median"] = median;
    if (metric == "miou") j["dataset_miou"] = dataset_miou;
    nlohmann::json items = nlohmann::json::array();
    for (const auto& [id, v] : per_item) items.push_back({{"id", id}, {"value", v}});
    j["per_item"] = items;
    return j;
  }
  static EvalReport from_json(const nlohmann::json& j) {
    EvalReport r;
    r.metric = j.at("metric");
    r.mean = j.at("mean");
    r.median = j.at("median");
    if (j.contains("dataset_miou")) r.dataset_miou = j.at("dataset_miou");
    for (const auto& it : j.at("per_item"))
      r.per_item.emplace_back(it.at("id"), it.at("value"));
    return r;
  }
};

// Per-item metric averaged over the split (mIoU additionally accumulated
// over the dataset). Fixed iteration order.
inline EvalReport evaluate_model(const SegmenterFn& segmenter, const DatasetCache& cache,
                                 SplitKind split, const std::string& metric,
                                 std::int64_t limit = 0) {
  const int num_classes = cache.manifest().recipe.num_classes;
  if (metric != "dice" && metric != "jc" && metric != "miou")
    throw InvalidArgument("unknown metric: " + metric);
  if ((metric == "miou") && num_classes < 2) throw InvalidArgument("miou needs >= 2 classes");
  std::vector<int> ids = cache.split_ids(split);
  if (ids.empty()) throw InvalidArgument("evaluate_model: empty split");
  if (limit > 0 && static_cast<std::int64_t>(ids.size()) > limit)
    ids.resize(static_cast<size_t>(limit));

  EvalReport rep;
  rep.metric = metric;
  std::vector<ConfusionCounts> acc(static_cast<size_t>(num_classes));
  for (int id : ids) {
    Tensor<int> pred = segmenter(cache.image(id));
    const Tensor<int>& gt = cache.mask(id);
    double v = 0;
    if (metric == "dice")
      v = dice_score(pred, gt, 1);
    else if (metric == "jc")
      v = jc_index(pred, gt, 1);
    else
      v = miou(pred, gt, num_classes);
    if (metric == "miou") accumulate_confusion(acc, pred, gt);
    rep.per_item.emplace_back(id, v);
  }
  std::vector<double> vals;
  for (const auto& [id, v] : rep.per_item) vals.push_back(v);
  rep.mean = 0;
  for (double v : vals) rep.mean += v;
  rep.mean /= static_cast<double>(vals.size());
  std::vector<double> sorted = vals;
  std::sort(sorted.begin(), sorted.end());
  rep.median = sorted.size() % 2 == 1
                   ? sorted[sorted.size() / 2]
                   : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
  if (metric == "miou") rep.dataset_miou = miou_from_counts(acc);
  return rep;
}

// Batched inversion-based evaluation of a trained model bundle (much faster
// than calling segment() per image; identical results).
inline EvalReport evaluate_inversion(const Generator<float>& gen, const Encoder<float>& enc,
                                     const PerceptualNet<float>& pnet, const LossWeights& lw,
                                     const InversionConfig& icfg, const DatasetCache& cache,
                                     SplitKind split, const std::string& metric,
                                     std::int64_t limit = 0, int batch = 16) {
  std::vector<int> ids = cache.split_ids(split);
  if (ids.empty()) throw InvalidArgument("evaluate_inversion: empty split");
  if (limit > 0 && static_cast<std::int64_t>(ids.size()) > limit)
    ids.resize(static_cast<size_t>(limit));
  const int num_classes = cache.manifest().recipe.num_classes;
  const int r = gen.config().resolution;
  const int c = gen.config().img_channels;
  EvalReport rep;
  rep.metric = metric;
  std::vector<ConfusionCounts> acc(static_cast<size_t>(num_classes));
  for (size_t off = 0; off < ids.size(); off += static_cast<size_t>(batch)) {
    const int b = static_cast<int>(std::min<size_t>(static_cast<size_t>(batch), ids.size() - off));
    Tensor<float> targets({b, c, r, r});
    const std::int64_t stride = static_cast<std::int64_t>(c) * r * r;
    for (int i = 0; i < b; ++i) {
      const auto& img = cache.image(ids[off + static_cast<size_t>(i)]);
      std::copy(img.data(), img.data() + stride, targets.data() + i * stride);
    }
    auto results = invert_batch(gen, enc, targets, pnet, lw, icfg);
    for (int i = 0; i < b; ++i) {
      const int id = ids[off + static_cast<size_t>(i)];
      Tensor<int> pred =
          nn::argmax_c(results[static_cast<size_t>(i)].logits.reshaped({1, num_classes, r, r}))
              .reshaped({r, r});
      const Tensor<int>& gt = cache.mask(id);
      double v = metric == "dice" ? dice_score(pred, gt, 1)
                 : metric == "jc" ? jc_index(pred, gt, 1)
                                  : miou(pred, gt, num_classes);
      if (metric == "miou") accumulate_confusion(acc, pred, gt);
      rep.per_item.emplace_back(id, v);
    }
  }
  std::vector<double> vals;
  for (const auto& [id, v] : rep.per_item) vals.push_back(v);
  rep.mean = 0;
  for (double v : vals) rep.mean += v;
  rep.mean /= static_cast<double>(vals.size());
  std::vector<double> sorted = vals;
  std::sort(sorted.begin(), sorted.end());
  rep.median = sorted.size() % 2 == 1
                   ? sorted[sorted.size() / 2]
                   : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
  if (metric == "miou") rep.dataset_miou = miou_from_counts(acc);
  return rep;
}

// ---------------------------------------------------------------------------
// Label/unlabeled ablation grid
// ---------------------------------------------------------------------------

struct AblationCell {
  std::int64_t k = 0, n = 0;
  bool skipped = false;
  std::string skip_reason;
  double metric_in = 0.0;
  double metric_out = 0.0;
};

struct AblationTable {
  std::string metric;
  std::vector<AblationCell> cells;

  std::string to_csv() const {
    std::string s = "k,n,metric_in,metric_out,skipped,reason\n";
    for (const auto& c : cells)
      s += std::to_string(c.k) + "," + std::to_string(c.n) + "," + std::to_string(c.metric_in) +
           "," + std::to_string(c.metric_out) + "," + (c.skipped ? "1" : "0") + "," +
           c.skip_reason + "\n";
    return s;
  }
};

// Trains the full pipeline per (k, n) cell at the configured reduced step
// budget and evaluates in-domain plus shifted. Infeasible cells are recorded
// as skipped rather than failing the grid.
inline AblationTable run_label_ablation(const RunConfig& base_cfg,
                                        const DatasetManifest& master,
                                        const DatasetManifest& master_shifted,
                                        const std::string& out_dir,
                                        std::ostream* log = nullptr) {
  AblationTable table;
  table.metric = base_cfg.eval_metric;
  const auto ks = parse_int_list(base_cfg.ablate_k_values);
  const auto ns = parse_int_list(base_cfg.ablate_n_values);
  for (std::int64_t k : ks)
    for (std::int64_t n : ns) {
      AblationCell cell;
      cell.k = k;
      cell.n = n;
      const std::string cell_dir =
          out_dir + "/cell_k" + std::to_string(k) + "_n" + std::to_string(n);
      try {
        if (k + n + base_cfg.data_val + base_cfg.data_test >
            static_cast<std::int64_t>(master.items.size()))
          throw InvalidArgument("grid cell oversubscribes the master dataset");
        RunConfig cfg = base_cfg;
        cfg.train_gan_steps = base_cfg.ablate_gan_steps;
        cfg.train_enc_steps = base_cfg.ablate_enc_steps;
        cfg.train_ckpt_every = 0;
        cfg.train_sample_every = 0;
        DatasetManifest cell_manifest =
            split_dataset(master, static_cast<int>(k), static_cast<int>(n),
                          static_cast<int>(base_cfg.data_val), static_cast<int>(base_cfg.data_test),
                          static_cast<std::uint64_t>(cfg.seed), /*enforce_scarcity=*/false);
        DatasetManifest cell_shifted = master_shifted;
        cell_shifted.splits = cell_manifest.splits;
        auto gan = train_gan(cfg, cell_manifest, cell_dir + "/gan", log);
        auto enc = train_encoder(cfg, cell_manifest, gan.final_ema_ckpt, cell_dir + "/enc", log);
        EncoderBundle bundle = make_encoder_bundle(cfg, enc.model_ckpt, /*load_encoder_too=*/true);
        bundle.enc->set_frozen(true);
        PerceptualNet<float> pnet(perceptual_config_from(cfg));
        LossWeights lw = loss_weights_from(cfg);
        InversionConfig icfg;
        icfg.steps = static_cast<int>(cfg.invert_steps);
        icfg.lr = cfg.invert_lr;
        icfg.lr_end = cfg.invert_lr_end;
        icfg.consistency_every = static_cast<int>(cfg.invert_consistency_every);
        icfg.grad_clip = cfg.invert_clip;
        DatasetCache cache(cell_manifest);
        DatasetCache cache_shifted(cell_shifted);
        cell.metric_in = evaluate_inversion(*bundle.gen, *bundle.enc, pnet, lw, icfg, cache,
                                            SplitKind::kTest, table.metric, base_cfg.eval_limit)
                             .mean;
        cell.metric_out = evaluate_inversion(*bundle.gen, *bundle.enc, pnet, lw, icfg,
                                             cache_shifted, SplitKind::kTest, table.metric,
                                             base_cfg.eval_limit)
                              .mean;
      } catch (const std::exception& e) {
        cell.skipped = true;
        cell.skip_reason = e.what();
      }
      if (log)
        *log << "ablation cell k=" << cell.k << " n=" << cell.n
             << (cell.skipped ? " skipped: " + cell.skip_reason
                              : " in=" + std::to_string(cell.metric_in) +
                                    " out=" + std::to_string(cell.metric_out))
             << "\n";
      table.cells.push_back(std::move(cell));
    }
  return table;
}

// ---------------------------------------------------------------------------
// Synthetic-data distillation (Table-6-style protocol)
// ---------------------------------------------------------------------------

struct DistillationRow {
  std::string strategy;  // sim-div | sim-tru | mix-div | mix-tru | real-only | ours
  double metric_in = 0.0;
  double metric_out = 0.0;
};

struct DistillationReport {
  std::string metric;
  bool generator_untrained = false;
  std::vector<DistillationRow> rows;

  std::string to_csv() const {
    std::string s = "strategy,metric_in,metric_out\n";
    for (const auto& r : rows)
      s += r.strategy + "," + std::to_string(r.metric_in) + "," + std::to_string(r.metric_out) +
           "\n";
    return s;
  }
};

// Samples synth_count pairs (div: psi = 1; tru: psi = 0.7), trains the
// baseline on synthetic (sim) or synthetic + real labeled (mix) data, and
// evaluates in- and out-of-domain.
inline DistillationReport run_distillation(
    const RunConfig& cfg, const Generator<float>& gen, const Tensor<float>& w_bar,
    std::int64_t generator_train_steps, const DatasetCache& cache_in,
    const DatasetCache& cache_out, const std::vector<std::string>& strategies,
    std::ostream* log = nullptr) {
  DistillationReport rep;
  rep.metric = cfg.eval_metric;
  if (cfg.distill_synth_count <= 0)
    throw InvalidArgument("distillation requires synth_count > 0");
  rep.generator_untrained = generator_train_steps == 0;
  if (rep.generator_untrained && log)
    *log << "warning: distilling from an untrained generator; results are mechanical only\n";

  std::vector<LabeledItem> real_items;
  {
    auto ids = cache_in.split_ids(SplitKind::kLabeled);
    const std::int64_t want = std::min<std::int64_t>(cfg.distill_real_k,
                                                     static_cast<std::int64_t>(ids.size()));
    for (std::int64_t i = 0; i < want; ++i) {
      const int id = ids[static_cast<size_t>(i)];
      real_items.push_back({cache_in.image(id), cache_in.mask(id)});
    }
  }

  BaselineConfig bcfg;
  bcfg.resolution = gen.config().resolution;
  bcfg.img_channels = gen.config().img_channels;
  bcfg.num_classes = gen.config().num_classes;
  bcfg.base_channels = static_cast<int>(cfg.baseline_channels);
  bcfg.lr = cfg.baseline_lr;
  bcfg.batch = cfg.baseline_batch;
  bcfg.dice_eps = cfg.loss_dice_eps;
  bcfg.seed = static_cast<std::uint64_t>(cfg.seed) + 17;

  auto evaluate_baseline = [&](const BaselineSegmenter& net, const DatasetCache& cache) {
    SegmenterFn fn = [&](const Tensor<float>& img) { return net.predict(img); };
    return evaluate_model(fn, cache, SplitKind::kTest, cfg.eval_metric, cfg.eval_limit).mean;
  };

  std::map<double, std::vector<LabeledItem>> synth_by_psi;
  for (const auto& strat : strategies) {
    const bool mix = strat.rfind("mix", 0) == 0;
    const double psi = strat.find("tru") != std::string::npos ? 0.7 : 1.0;
    if (!synth_by_psi.count(psi)) {
      SeededRng rng(static_cast<std::uint64_t>(cfg.seed), "distill-sample");
      auto pairs = gen.sample_pairs(static_cast<int>(cfg.distill_synth_count), psi, rng,
                                    NoiseMode::fresh(rng), w_bar.numel() > 0 ? &w_bar : nullptr);
      std::vector<LabeledItem> items;
      for (auto& p : pairs) items.push_back({std::move(p.image), std::move(p.labels)});
      synth_by_psi[psi] = std::move(items);
    }
    std::vector<LabeledItem> pool = synth_by_psi[psi];
    if (mix) pool.insert(pool.end(), real_items.begin(), real_items.end());
    if (log) *log << "distillation " << strat << ": training on " << pool.size() << " items\n";
    BaselineSegmenter net = train_baseline_on_items(pool, cfg.distill_epochs, bcfg);
    DistillationRow row;
    row.strategy = strat;
    row.metric_in = evaluate_baseline(net, cache_in);
    row.metric_out = evaluate_baseline(net, cache_out);
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

}  // namespace jgseg
