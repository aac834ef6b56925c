// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Two-stage training. Stage 1: adversarial training of G, D_r, D_m on
// unlabeled + labeled data (update order D_r, D_m, G; stop-gradient rule in
// the G update). Stage 2: freeze G, train the encoder E.
// All state (parameters, optimizer moments, EMA, RNG streams) round-trips
// through checkpoints, so interrupted runs resume bit-identically.

#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "jgseg/config.hpp"
#include "jgseg/data.hpp"
#include "jgseg/objectives.hpp"
#include "jgseg/optimizer.hpp"

namespace jgseg {

inline std::string ema_path_of(const std::string& ckpt_path);
inline void export_sample_grid(const Generator<float>& gen, SeededRng& rng,
                               const std::string& out_dir, std::int64_t step);
inline RunConfig resolve_config_text(const std::string& text);

inline GeneratorConfig generator_config_from(const RunConfig& cfg) {
  GeneratorConfig g;
  g.resolution = static_cast<int>(cfg.gen_resolution);
  g.dz = static_cast<int>(cfg.gen_dz);
  g.dw = static_cast<int>(cfg.gen_dw);
  g.mapping_layers = static_cast<int>(cfg.gen_mapping_layers);
  g.mapping_width = static_cast<int>(cfg.gen_mapping_width);
  g.img_channels = static_cast<int>(cfg.gen_img_channels);
  g.per_layer_noise = cfg.gen_noise;
  if (!cfg.gen_channels.empty())
    for (std::int64_t v : parse_int_list(cfg.gen_channels)) g.channels.push_back(static_cast<int>(v));
  return g;
}

inline CriticConfig critic_config_from(const RunConfig& cfg, int num_classes) {
  CriticConfig c;
  c.resolution = static_cast<int>(cfg.gen_resolution);
  c.img_channels = static_cast<int>(cfg.gen_img_channels);
  c.num_classes = num_classes;
  c.base_channels = static_cast<int>(cfg.critic_base_channels);
  c.max_channels = static_cast<int>(cfg.critic_max_channels);
  c.pair_scales = static_cast<int>(cfg.critic_scales);
  c.pair_base_channels = static_cast<int>(cfg.critic_pair_base_channels);
  c.real_mask_smooth = static_cast<float>(cfg.critic_real_mask_smooth);
  return c;
}

inline EncoderConfig encoder_config_from(const RunConfig& cfg, const GeneratorConfig& g) {
  EncoderConfig e;
  e.resolution = g.resolution;
  e.img_channels = g.img_channels;
  e.dw = g.dw;
  e.style_sites = g.style_sites();
  e.base_channels = static_cast<int>(cfg.enc_base_channels);
  e.max_channels = static_cast<int>(cfg.enc_max_channels);
  e.stages = static_cast<int>(cfg.enc_stages);
  return e;
}

inline PerceptualConfig perceptual_config_from(const RunConfig& cfg) {
  PerceptualConfig p;
  p.img_channels = static_cast<int>(cfg.gen_img_channels);
  p.base_channels = static_cast<int>(cfg.perceptual_channels);
  p.seed = static_cast<std::uint64_t>(cfg.perceptual_seed);
  p.odd_beta = cfg.perceptual_odd_beta;
  return p;
}

inline LossWeights loss_weights_from(const RunConfig& cfg) {
  LossWeights w;
  w.lambda1 = cfg.loss_lambda1;
  w.lambda2 = cfg.loss_lambda2;
  w.lambda3 = cfg.loss_lambda3;
  w.r1_gamma = cfg.loss_r1_gamma;
  w.dice_eps = cfg.loss_dice_eps;
  return w;
}

// ---------------------------------------------------------------------------
// Stage 1: GAN
// ---------------------------------------------------------------------------

struct GanTrainState {
  RunConfig cfg;
  int num_classes = 2;
  ParameterStore<float> store;  // G.* + D_r + D_m
  std::unique_ptr<Generator<float>> gen;
  std::unique_ptr<ImageCritic<float>> dr;
  std::unique_ptr<PairCritic<float>> dm;
  ParameterStore<float> ema_store;  // G.* shadow for evaluation/sampling
  std::unique_ptr<Generator<float>> ema_gen;
  std::unique_ptr<Adam<float>> opt_g, opt_dr, opt_dm;
  SeededRng rng_data, rng_gan, rng_viz;
  std::int64_t step = 0;
};

inline GanTrainState make_gan_state(const RunConfig& cfg, int num_classes) {
  GanTrainState st;
  st.cfg = cfg;
  st.num_classes = num_classes;
  GeneratorConfig gcfg = generator_config_from(cfg);
  gcfg.num_classes = num_classes;
  CriticConfig ccfg = critic_config_from(cfg, num_classes);
  SeededRng init(static_cast<std::uint64_t>(cfg.seed), "init");
  st.gen = std::make_unique<Generator<float>>(st.store, gcfg, init);
  st.dr = std::make_unique<ImageCritic<float>>(st.store, ccfg, init);
  st.dm = std::make_unique<PairCritic<float>>(st.store, ccfg, init);
  SeededRng ema_init(static_cast<std::uint64_t>(cfg.seed), "init");
  st.ema_gen = std::make_unique<Generator<float>>(st.ema_store, gcfg, ema_init);
  for (const auto& e : st.ema_store.entries())
    e.var.mutable_value() = st.store.get(e.name).value();
  st.opt_g = std::make_unique<Adam<float>>(Adam<float>::from_groups(
      st.store, {groups::kGMapping, groups::kGShared, groups::kGTImage, groups::kGTSeg},
      cfg.train_lr_gd, cfg.train_beta1_gan, cfg.train_beta2_gan));
  st.opt_dr = std::make_unique<Adam<float>>(Adam<float>::from_groups(
      st.store, {groups::kDr}, cfg.train_lr_gd, cfg.train_beta1_gan, cfg.train_beta2_gan));
  st.opt_dm = std::make_unique<Adam<float>>(Adam<float>::from_groups(
      st.store, {groups::kDm}, cfg.train_lr_gd, cfg.train_beta1_gan, cfg.train_beta2_gan));
  st.rng_data = SeededRng(static_cast<std::uint64_t>(cfg.seed), "data");
  st.rng_gan = SeededRng(static_cast<std::uint64_t>(cfg.seed), "gan");
  st.rng_viz = SeededRng(static_cast<std::uint64_t>(cfg.seed), "viz");
  return st;
}

struct GanStepStats {
  double l_dr = 0, l_dm = 0, l_g = 0, r1_dr = 0, r1_dm = 0;
  bool dm_skipped = false;
};

// One full optimization step: D_r update, D_m update, G update.
// batch_l may be null (no labeled data): the pair critic and the G pair term
// are skipped with a logged warning flag.
inline GanStepStats gan_step(GanTrainState& st, const Batch& batch_u, const Batch* batch_l) {
  const RunConfig& cfg = st.cfg;
  GanStepStats stats;
  const GanLossKind kind =
      cfg.loss_gan == "minimax" ? GanLossKind::kMinimax : GanLossKind::kNonSaturating;
  const int bu = batch_u.images.dim(0);
  const int dz = st.gen->config().dz;

  auto make_fakes = [&](int n) {
    ad::NoGrad ng;
    Tensor<float> z = normal_sample<float>(st.rng_gan, {n, dz});
    auto syn = st.gen->synthesize_from_w(st.gen->map_latent(ad::constant(std::move(z))),
                                         NoiseMode::fresh(st.rng_gan));
    return std::make_pair(syn.image.value(), syn.logits.value());
  };

  // D_r update: real = image pool batch, fake = fresh samples.
  {
    auto [fake_img, fake_logits_t] = make_fakes(bu);
    const bool r1_due = cfg.train_r1_every_dr > 0 && st.step % cfg.train_r1_every_dr == 0;
    ad::Var<float> x_real(batch_u.images, r1_due);
    auto real_logits = st.dr->score_image(x_real);
    auto fake_logits = st.dr->score_image(ad::constant(fake_img));
    auto loss = d_logistic_loss(real_logits, fake_logits);
    stats.l_dr = loss.value().item();
    if (r1_due) {
      auto r1 = r1_penalty(real_logits, x_real,
                           cfg.loss_r1_gamma * static_cast<double>(cfg.train_r1_every_dr));
      stats.r1_dr = r1.value().item();
      loss = ad::add(loss, r1);
    }
    ad::backward(loss);
    st.opt_dr->step();
    st.store.zero_grads();
  }

  // D_m update: real pairs come from the labeled split only.
  const bool have_labels = batch_l != nullptr && batch_l->images.dim(0) > 0;
  if (have_labels) {
    const int bl = batch_l->images.dim(0);
    auto [fake_img, fake_logits_t] = make_fakes(bl);
    PairInput<float> fake_pair;
    {
      ad::NoGrad ng;
      fake_pair = encode_pair(ad::constant(fake_img), ad::constant(fake_logits_t));
    }
    const bool r1_due = cfg.train_r1_every_dm > 0 && st.step % cfg.train_r1_every_dm == 0;
    ad::Var<float> x_real(batch_l->images, r1_due);
    auto real_pair = encode_pair(x_real, batch_l->labels, st.num_classes,
                                 static_cast<float>(cfg.critic_real_mask_smooth));
    auto real_maps = st.dm->score_pair(real_pair);
    auto fake_maps = st.dm->score_pair(fake_pair);
    auto loss = d_pair_loss(real_maps, fake_maps);
    stats.l_dm = loss.value().item();
    if (r1_due) {
      auto r1 = r1_penalty_maps(real_maps, x_real,
                                cfg.loss_r1_gamma * static_cast<double>(cfg.train_r1_every_dm));
      stats.r1_dm = r1.value().item();
      loss = ad::add(loss, r1);
    }
    ad::backward(loss);
    st.opt_dm->step();
    st.store.zero_grads();
  } else {
    stats.dm_skipped = true;
  }

  // G update: one update covering both terms; the pair term sees a
  // stop-gradient image so tImage heads train only against D_r.
  {
    st.dr->set_frozen(true);
    st.dm->set_frozen(true);
    Tensor<float> z = normal_sample<float>(st.rng_gan, {bu, dz});
    auto syn = st.gen->synthesize_from_w(st.gen->map_latent(ad::constant(std::move(z))),
                                         NoiseMode::fresh(st.rng_gan));
    auto img_logits = st.dr->score_image(syn.image);
    ad::Var<float> loss;
    if (have_labels) {
      auto pair = encode_pair(ad::stop_gradient(syn.image), syn.logits);
      auto maps = st.dm->score_pair(pair);
      loss = g_loss(img_logits, maps, kind);
    } else {
      loss = kind == GanLossKind::kNonSaturating
                 ? ad::mean_all(ad::softplus(ad::neg(img_logits)))
                 : ad::neg(ad::mean_all(ad::softplus(img_logits)));
    }
    stats.l_g = loss.value().item();
    ad::backward(loss);
    st.opt_g->step();
    st.store.zero_grads();
    st.dr->set_frozen(false);
    st.dm->set_frozen(false);
  }

  // EMA shadow of G.
  const float d = static_cast<float>(cfg.train_ema);
  for (const auto& e : st.ema_store.entries()) {
    Tensor<float>& ema = e.var.mutable_value();
    const Tensor<float>& p = st.store.get(e.name).value();
    for (std::int64_t i = 0; i < ema.numel(); ++i)
      ema[i] = ema[i] * d + p[i] * (1.0f - d);
  }

  ++st.step;
  return stats;
}

namespace detail {

inline ParameterStore<float> snapshot_store(const ParameterStore<float>& src) {
  ParameterStore<float> out;
  for (const auto& e : src.entries()) out.add(e.name, e.group, e.var.value());
  return out;
}

}  // namespace detail

inline void save_gan_checkpoint(const GanTrainState& st, const std::string& path,
                                const Tensor<float>* w_bar = nullptr) {
  ParameterStore<float> snap = detail::snapshot_store(st.store);
  st.opt_g->append_state(snap, "opt.g");
  st.opt_dr->append_state(snap, "opt.dr");
  st.opt_dm->append_state(snap, "opt.dm");
  CheckpointMeta meta;
  meta.step = st.step;
  meta.run_config_snapshot = serialize_config(st.cfg);
  meta.rng_states["data"] = st.rng_data.save_state();
  meta.rng_states["gan"] = st.rng_gan.save_state();
  meta.rng_states["viz"] = st.rng_viz.save_state();
  meta.extra["num_classes"] = std::to_string(st.num_classes);
  save_checkpoint(snap, meta, path);

  ParameterStore<float> ema_snap = detail::snapshot_store(st.ema_store);
  if (w_bar) ema_snap.add("stats.w_bar", "stats", *w_bar);
  CheckpointMeta ema_meta = meta;
  save_checkpoint(ema_snap, ema_meta, ema_path_of(path));
}

inline std::string ema_path_of(const std::string& ckpt_path) {
  const std::string suffix = ".jgseg";
  if (ckpt_path.size() > suffix.size() &&
      ckpt_path.compare(ckpt_path.size() - suffix.size(), suffix.size(), suffix) == 0)
    return ckpt_path.substr(0, ckpt_path.size() - suffix.size()) + ".ema.jgseg";
  return ckpt_path + ".ema";
}

inline void resume_gan_state(GanTrainState& st, const std::string& ckpt_path) {
  LoadedCheckpoint lc = load_checkpoint(ckpt_path);
  for (const auto& e : st.store.entries()) e.var.mutable_value() = lc.store.get(e.name).value();
  st.opt_g->load_state(lc.store, "opt.g");
  st.opt_dr->load_state(lc.store, "opt.dr");
  st.opt_dm->load_state(lc.store, "opt.dm");
  st.step = lc.meta.step;
  st.rng_data = SeededRng::restore_state(lc.meta.rng_states.at("data"));
  st.rng_gan = SeededRng::restore_state(lc.meta.rng_states.at("gan"));
  st.rng_viz = SeededRng::restore_state(lc.meta.rng_states.at("viz"));
  LoadedCheckpoint ema = load_checkpoint(ema_path_of(ckpt_path));
  for (const auto& e : st.ema_store.entries())
    e.var.mutable_value() = ema.store.get(e.name).value();
}

struct TrainGanArtifacts {
  std::string final_ckpt;
  std::string final_ema_ckpt;
};

// Runs stage-1 training, writing progress CSVs, periodic checkpoints and
// sample grids under out_dir. Fails fast if the dataset is unusable.
inline TrainGanArtifacts train_gan(const RunConfig& cfg, const DatasetManifest& manifest,
                                   const std::string& out_dir, std::ostream* log = nullptr) {
  if (manifest.items.empty()) throw PreconditionError("dataset has no items");
  if (static_cast<int>(cfg.gen_resolution) != manifest.recipe.resolution)
    throw PreconditionError("gen.resolution does not match the dataset resolution");
  DatasetCache cache(manifest);
  const bool pool_includes_labeled = cfg.train_dr_real_pool == "du+dl";
  const SplitKind image_pool = pool_includes_labeled ? SplitKind::kAllImages : SplitKind::kUnlabeled;
  if (cache.split_ids(image_pool).empty())
    throw PreconditionError("image pool split is empty; run split assignment first");
  const bool have_labels = !manifest.splits.labeled.empty();

  std::filesystem::create_directories(out_dir);
  GanTrainState st = make_gan_state(cfg, manifest.recipe.num_classes);
  if (!cfg.train_resume.empty()) resume_gan_state(st, cfg.train_resume);

  std::ofstream progress(out_dir + "/progress.csv",
                         st.step == 0 ? std::ios::trunc : std::ios::app);
  if (st.step == 0) progress << "step,L_Dr,L_Dm,L_G,r1,seconds\n";
  std::ofstream losses(out_dir + "/losses.csv", st.step == 0 ? std::ios::trunc : std::ios::app);
  if (st.step == 0) losses << "step,loss_name,value\n";

  bool warned_dm = false;
  while (st.step < cfg.train_gan_steps) {
    const auto t0 = std::chrono::steady_clock::now();
    Batch bu = load_batch(cache, image_pool, static_cast<int>(cfg.train_batch_u), st.rng_data);
    std::optional<Batch> bl;
    if (have_labels)
      bl = load_batch(cache, SplitKind::kLabeled, static_cast<int>(cfg.train_batch_l),
                      st.rng_data, /*resample_with_replacement=*/true);
    GanStepStats stats = gan_step(st, bu, bl ? &*bl : nullptr);
    if (stats.dm_skipped && !warned_dm) {
      warned_dm = true;
      if (log) *log << "warning: empty labeled split, pair critic skipped\n";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    progress << st.step << ',' << stats.l_dr << ',' << stats.l_dm << ',' << stats.l_g << ','
             << (stats.r1_dr + stats.r1_dm) << ',' << secs << '\n';
    losses << st.step << ",d_r," << stats.l_dr << '\n'
           << st.step << ",d_m," << stats.l_dm << '\n'
           << st.step << ",g," << stats.l_g << '\n';
    if (cfg.train_ckpt_every > 0 && st.step % cfg.train_ckpt_every == 0 &&
        st.step < cfg.train_gan_steps) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%s/ckpt_%06lld.jgseg", out_dir.c_str(),
                    static_cast<long long>(st.step));
      save_gan_checkpoint(st, buf);
    }
    if (cfg.train_sample_every > 0 && st.step % cfg.train_sample_every == 0)
      export_sample_grid(*st.ema_gen, st.rng_viz, out_dir, st.step);
    if (log && (st.step % 500 == 0 || st.step == cfg.train_gan_steps))
      *log << "gan step " << st.step << "/" << cfg.train_gan_steps << " L_Dr=" << stats.l_dr
           << " L_Dm=" << stats.l_dm << " L_G=" << stats.l_g << "\n";
  }

  SeededRng wbar_rng(static_cast<std::uint64_t>(cfg.seed), "wbar");
  Tensor<float> w_bar = st.ema_gen->mean_style(10000, wbar_rng);
  TrainGanArtifacts art;
  art.final_ckpt = out_dir + "/ckpt_final.jgseg";
  art.final_ema_ckpt = ema_path_of(art.final_ckpt);
  save_gan_checkpoint(st, art.final_ckpt, &w_bar);
  return art;
}

// 4x4 grid of EMA samples: images and argmax labels side by side.
inline void export_sample_grid(const Generator<float>& gen, SeededRng& rng,
                               const std::string& out_dir, std::int64_t step) {
  const int n = 16, cols = 4;
  auto pairs = gen.sample_pairs(n, 1.0, rng, NoiseMode::fixed(static_cast<std::uint64_t>(step)));
  const int r = gen.config().resolution;
  const int rows = n / cols;
  Image8 grid;
  grid.channels = 1;
  grid.height = rows * r;
  grid.width = cols * 2 * r;
  grid.data.assign(static_cast<size_t>(grid.height) * grid.width, 0);
  const int num_classes = gen.config().num_classes;
  for (int i = 0; i < n; ++i) {
    const int gy = (i / cols) * r, gx = (i % cols) * 2 * r;
    Image8 img = to_image8(pairs[static_cast<size_t>(i)].image);
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x) {
        grid.data[static_cast<size_t>(gy + y) * grid.width + gx + x] =
            img.data[static_cast<size_t>(y) * r + x];
        const int lab = pairs[static_cast<size_t>(i)].labels[y * r + x];
        grid.data[static_cast<size_t>(gy + y) * grid.width + gx + r + x] =
            static_cast<std::uint8_t>(lab * 255 / std::max(1, num_classes - 1));
      }
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s/grid_%06lld.png", out_dir.c_str(),
                static_cast<long long>(step));
  write_png(buf, grid);
}

// ---------------------------------------------------------------------------
// Stage 2: encoder
// ---------------------------------------------------------------------------

struct EncoderBundle {
  ParameterStore<float> store;  // G.* + E
  std::unique_ptr<Generator<float>> gen;
  std::unique_ptr<Encoder<float>> enc;
  int num_classes = 2;
  Tensor<float> w_bar;
};

// Builds G (from a generator checkpoint; frozen) plus a fresh E.
inline EncoderBundle make_encoder_bundle(const RunConfig& cfg, const std::string& gen_ckpt,
                                         bool load_encoder_too = false) {
  LoadedCheckpoint lc = load_checkpoint(gen_ckpt);
  EncoderBundle b;
  b.num_classes = std::stoi(lc.meta.extra.at("num_classes"));
  GeneratorConfig gcfg = generator_config_from(resolve_config_text(lc.meta.run_config_snapshot));
  gcfg.num_classes = b.num_classes;
  SeededRng init(static_cast<std::uint64_t>(cfg.seed), "enc-init");
  b.gen = std::make_unique<Generator<float>>(b.store, gcfg, init);
  EncoderConfig ecfg = encoder_config_from(cfg, gcfg);
  b.enc = std::make_unique<Encoder<float>>(b.store, ecfg, init);
  for (const auto& e : b.store.entries()) {
    if (e.group.rfind("G.", 0) == 0)
      e.var.mutable_value() = lc.store.get(e.name).value();
    else if (load_encoder_too && e.group == groups::kE)
      e.var.mutable_value() = lc.store.get(e.name).value();
  }
  if (lc.store.has("stats.w_bar")) b.w_bar = lc.store.get("stats.w_bar").value();
  b.gen->set_frozen(true);
  return b;
}

// Parses a config snapshot from checkpoint meta.
inline RunConfig resolve_config_text(const std::string& text) {
  RunConfig c;
  auto schema = detail::config_schema(c);
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos) continue;
    detail::assign_key(schema, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
  }
  return c;
}

struct TrainEncArtifacts {
  std::string model_ckpt;  // G + E + w_bar: the inference bundle
};

inline TrainEncArtifacts train_encoder(const RunConfig& cfg, const DatasetManifest& manifest,
                                       const std::string& gan_ema_ckpt,
                                       const std::string& out_dir, std::ostream* log = nullptr) {
  DatasetCache cache(manifest);
  std::filesystem::create_directories(out_dir);
  EncoderBundle b = make_encoder_bundle(cfg, gan_ema_ckpt);
  const std::uint64_t g_hash_before = b.store.content_hash("G.");

  PerceptualNet<float> pnet(perceptual_config_from(cfg));
  LossWeights lw = loss_weights_from(cfg);
  const CeReduction ce_red =
      cfg.loss_ce_reduction == "sum" ? CeReduction::kSum : CeReduction::kMean;
  Adam<float> opt_e = Adam<float>::from_groups(b.store, {groups::kE}, cfg.train_lr_e,
                                               cfg.train_beta1_e, cfg.train_beta2_e);
  SeededRng rng_data(static_cast<std::uint64_t>(cfg.seed), "encoder");
  const bool have_labels = !manifest.splits.labeled.empty();

  std::ofstream losses(out_dir + "/losses.csv", std::ios::trunc);
  losses << "step,loss_name,value\n";

  std::int64_t step = 0;
  if (!cfg.train_resume.empty()) {
    LoadedCheckpoint lc = load_checkpoint(cfg.train_resume);
    for (const auto& e : b.store.entries())
      if (e.group == groups::kE) e.var.mutable_value() = lc.store.get(e.name).value();
    opt_e.load_state(lc.store, "opt.e");
    step = lc.meta.step;
    rng_data = SeededRng::restore_state(lc.meta.rng_states.at("encoder"));
  }

  auto save_model = [&](const std::string& path) {
    ParameterStore<float> snap = detail::snapshot_store(b.store);
    opt_e.append_state(snap, "opt.e");
    if (b.w_bar.numel() > 0) snap.add("stats.w_bar", "stats", b.w_bar);
    CheckpointMeta meta;
    meta.step = step;
    meta.run_config_snapshot = serialize_config(cfg);
    meta.rng_states["encoder"] = rng_data.save_state();
    meta.extra["num_classes"] = std::to_string(b.num_classes);
    save_checkpoint(snap, meta, path);
  };

  while (step < cfg.train_enc_steps) {
    Batch bu = load_batch(cache, SplitKind::kAllImages, static_cast<int>(cfg.train_batch_u),
                          rng_data);
    std::optional<Batch> bl;
    if (have_labels)
      bl = load_batch(cache, SplitKind::kLabeled, static_cast<int>(cfg.train_batch_l), rng_data,
                      true);
    // Labeled rows first, then the unlabeled batch.
    Tensor<float> images;
    const Tensor<int>* labels = nullptr;
    Tensor<int> labels_store;
    if (bl) {
      const int n1 = bl->images.dim(0), n2 = bu.images.dim(0);
      Shape s = bl->images.shape();
      s[0] = n1 + n2;
      images = Tensor<float>(s);
      std::copy(bl->images.data(), bl->images.data() + bl->images.numel(), images.data());
      std::copy(bu.images.data(), bu.images.data() + bu.images.numel(),
                images.data() + bl->images.numel());
      labels_store = bl->labels;
      labels = &labels_store;
    } else {
      images = bu.images;
    }
    auto parts = encoder_loss(*b.gen, *b.enc, ad::constant(std::move(images)), labels, pnet, lw,
                              ce_red);
    ad::backward(parts.total);
    opt_e.step();
    b.store.zero_grads();
    ++step;
    losses << step << ",enc_total," << parts.total.value().item() << '\n'
           << step << ",enc_s," << parts.supervised << '\n'
           << step << ",enc_u," << parts.unsupervised << '\n';
    if (cfg.train_ckpt_every > 0 && step % cfg.train_ckpt_every == 0 &&
        step < cfg.train_enc_steps) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%s/ckpt_enc_%06lld.jgseg", out_dir.c_str(),
                    static_cast<long long>(step));
      save_model(buf);
    }
    if (log && step % 500 == 0)
      *log << "enc step " << step << "/" << cfg.train_enc_steps
           << " total=" << parts.total.value().item() << "\n";
  }

  if (b.store.content_hash("G.") != g_hash_before)
    throw ContractViolation("generator parameters changed during encoder training");

  TrainEncArtifacts art;
  art.model_ckpt = out_dir + "/ckpt_model.jgseg";
  save_model(art.model_ckpt);
  return art;
}

}  // namespace jgseg
