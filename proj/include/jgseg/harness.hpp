// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration: subcommand execution into per-run artifact
// directories, run locking, resolved-config snapshots, reports and plots.
// Exit codes: 0 ok, 2 config error, 3 missing prerequisite, 4 failed run.

#pragma once

#include <sys/file.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "jgseg/config.hpp"
#include "jgseg/evaluation.hpp"
#include "jgseg/svg_plot.hpp"
#include "jgseg/version.hpp"

namespace jgseg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitPreconditionError = 3;
inline constexpr int kExitFailedRun = 4;

inline const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names = {
      "make-data", "train-gan", "train-encoder", "infer",    "evaluate",
      "sample",    "distill",   "ablate",        "baseline", "report"};
  return names;
}

// Exclusive per-run lock; released when the descriptor closes (process exit
// included), so crashed runs leave no stale lock.
class RunLock {
 public:
  explicit RunLock(const std::string& run_dir) {
    std::filesystem::create_directories(run_dir);
    path_ = run_dir + "/.lock";
    fd_ = ::open(path_.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) throw IoError("cannot open lock file " + path_);
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      fd_ = -1;
      throw PreconditionError("run directory is locked by another invocation: " + run_dir);
    }
  }
  ~RunLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::string path_;
  int fd_ = -1;
};

struct RunPaths {
  std::string runs_root;
  std::string run_name;

  std::string run_dir() const { return runs_root + "/" + run_name; }
  std::string sub_dir(const std::string& sub) const { return run_dir() + "/" + sub; }

  std::string dataset_dir(const RunConfig& cfg) const {
    return cfg.data_dir.empty() ? sub_dir("make-data") + "/dataset" : cfg.data_dir;
  }
  std::string shifted_dataset_dir(const RunConfig& cfg) const {
    return cfg.data_shifted_dir.empty() ? sub_dir("make-data") + "/dataset_shifted"
                                        : cfg.data_shifted_dir;
  }
  std::string gan_ema_ckpt(const RunConfig& cfg) const {
    return cfg.train_gan_ckpt.empty() ? sub_dir("train-gan") + "/ckpt_final.ema.jgseg"
                                      : cfg.train_gan_ckpt;
  }
  std::string model_ckpt(const RunConfig& cfg) const {
    return cfg.eval_model_ckpt.empty() ? sub_dir("train-encoder") + "/ckpt_model.jgseg"
                                       : cfg.eval_model_ckpt;
  }
  std::string baseline_ckpt(const RunConfig& cfg) const {
    return cfg.eval_baseline_ckpt.empty() ? sub_dir("baseline") + "/baseline.jgseg"
                                          : cfg.eval_baseline_ckpt;
  }
};

inline std::string default_runs_root() {
  const char* env = std::getenv("JGSEG_RUNS_DIR");
  return env && *env ? env : "runs";
}

namespace detail {

inline void write_artifact_preamble(const std::string& dir, const RunConfig& cfg) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir + "/resolved.config");
    os << "# jgseg " << kVersion << "\n" << serialize_config(cfg);
  }
  std::filesystem::permissions(dir + "/resolved.config",
                               std::filesystem::perms::owner_read |
                                   std::filesystem::perms::group_read |
                                   std::filesystem::perms::others_read,
                               std::filesystem::perm_options::replace);
  std::ofstream vs(dir + "/version.txt");
  vs << kVersion << "\n";
}

inline void require_file(const std::string& path, const std::string& what) {
  if (!std::filesystem::exists(path))
    throw PreconditionError("missing " + what + ": " + path);
}

inline DatasetRecipe recipe_from_config(const RunConfig& cfg) {
  DatasetRecipe r;
  if (cfg.data_recipe == "blobs-a")
    r = blobs_a_recipe(static_cast<int>(cfg.data_resolution),
                       static_cast<std::uint64_t>(cfg.data_seed));
  else if (cfg.data_recipe == "facetoy")
    r = facetoy_recipe(static_cast<int>(cfg.data_resolution),
                       static_cast<std::uint64_t>(cfg.data_seed));
  else
    throw ConfigError("unknown data.recipe: " + cfg.data_recipe);
  return r;
}

inline InversionConfig inversion_config_from(const RunConfig& cfg) {
  InversionConfig icfg;
  icfg.steps = static_cast<int>(cfg.invert_steps);
  icfg.lr = cfg.invert_lr;
  icfg.lr_end = cfg.invert_lr_end;
  icfg.consistency_every = static_cast<int>(cfg.invert_consistency_every);
  icfg.grad_clip = cfg.invert_clip;
  return icfg;
}

inline SplitKind split_from_name(const std::string& name) {
  if (name == "test") return SplitKind::kTest;
  if (name == "validation") return SplitKind::kValidation;
  if (name == "labeled") return SplitKind::kLabeled;
  if (name == "unlabeled") return SplitKind::kUnlabeled;
  throw ConfigError("unknown eval.split: " + name);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

inline void cmd_make_data(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  DatasetRecipe recipe = detail::recipe_from_config(cfg);
  const std::string dir = paths.sub_dir("make-data") + "/dataset";
  DatasetManifest m = generate_dataset(recipe, static_cast<int>(cfg.data_items), dir);
  m = split_dataset(m, static_cast<int>(cfg.data_k), static_cast<int>(cfg.data_n),
                    static_cast<int>(cfg.data_val), static_cast<int>(cfg.data_test),
                    static_cast<std::uint64_t>(cfg.seed), cfg.data_enforce_scarcity);
  save_manifest(m, dir);
  log << "dataset: " << m.items.size() << " items at " << dir << "\n";
  if (!cfg.data_shift.empty()) {
    const auto shifts = parse_shifts(cfg.data_shift);
    const std::string sdir = paths.sub_dir("make-data") + "/dataset_shifted";
    apply_shift(m, shifts, sdir);
    log << "shifted partner (" << cfg.data_shift << ") at " << sdir << "\n";
  }
}

inline void cmd_train_gan(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  const std::string ds = paths.dataset_dir(cfg);
  detail::require_file(ds + "/manifest.json", "dataset manifest (run make-data first)");
  DatasetManifest m = load_manifest(ds);
  auto art = train_gan(cfg, m, paths.sub_dir("train-gan"), &log);
  log << "final checkpoint: " << art.final_ckpt << "\n";
}

inline void cmd_train_encoder(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  const std::string ds = paths.dataset_dir(cfg);
  detail::require_file(ds + "/manifest.json", "dataset manifest");
  const std::string gan = paths.gan_ema_ckpt(cfg);
  detail::require_file(gan, "generator checkpoint (run train-gan first)");
  DatasetManifest m = load_manifest(ds);
  auto art = train_encoder(cfg, m, gan, paths.sub_dir("train-encoder"), &log);
  log << "model checkpoint: " << art.model_ckpt << "\n";
}

inline void cmd_infer(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  const std::string ckpt = paths.model_ckpt(cfg);
  detail::require_file(ckpt, "model checkpoint (run train-encoder first)");
  const std::string ds = paths.dataset_dir(cfg);
  detail::require_file(ds + "/manifest.json", "dataset manifest");
  EncoderBundle b = make_encoder_bundle(cfg, ckpt, /*load_encoder_too=*/true);
  b.enc->set_frozen(true);
  PerceptualNet<float> pnet(perceptual_config_from(cfg));
  LossWeights lw = loss_weights_from(cfg);
  InversionConfig icfg = detail::inversion_config_from(cfg);
  DatasetCache cache(load_manifest(ds));
  std::vector<int> ids = cache.split_ids(detail::split_from_name(cfg.eval_split));
  if (ids.empty()) throw PreconditionError("selected split is empty");
  if (cfg.eval_limit > 0 && static_cast<std::int64_t>(ids.size()) > cfg.eval_limit)
    ids.resize(static_cast<size_t>(cfg.eval_limit));
  const std::string dir = paths.sub_dir("infer");
  for (int id : ids) {
    InversionResult res;
    Tensor<int> pred = segment(*b.gen, *b.enc, cache.image(id), pnet, lw, icfg, &res);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s/item_%06d", dir.c_str(), id);
    write_png(std::string(buf) + "_pred.png", labels_to_image8(pred));
    write_png(std::string(buf) + "_recon.png", to_image8(res.image));
    std::ofstream trace(std::string(buf) + "_trace.csv");
    trace << "step,loss\n";
    for (size_t t = 0; t < res.trace.size(); ++t) trace << t << ',' << res.trace[t] << '\n';
  }
  log << "inverted " << ids.size() << " items into " << dir << "\n";
}

inline void cmd_evaluate(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  const std::string ds = paths.dataset_dir(cfg);
  detail::require_file(ds + "/manifest.json", "dataset manifest");
  DatasetCache cache(load_manifest(ds));
  const SplitKind split = detail::split_from_name(cfg.eval_split);
  EvalReport rep;
  if (cfg.eval_mode == "invert" || cfg.eval_mode == "encode") {
    const std::string ckpt = paths.model_ckpt(cfg);
    detail::require_file(ckpt, "model checkpoint");
    EncoderBundle b = make_encoder_bundle(cfg, ckpt, /*load_encoder_too=*/true);
    b.enc->set_frozen(true);
    PerceptualNet<float> pnet(perceptual_config_from(cfg));
    LossWeights lw = loss_weights_from(cfg);
    InversionConfig icfg = detail::inversion_config_from(cfg);
    if (cfg.eval_mode == "encode") icfg.steps = 0;
    rep = evaluate_inversion(*b.gen, *b.enc, pnet, lw, icfg, cache, split, cfg.eval_metric,
                             cfg.eval_limit);
  } else if (cfg.eval_mode == "baseline") {
    const std::string ckpt = paths.baseline_ckpt(cfg);
    detail::require_file(ckpt, "baseline checkpoint (run baseline first)");
    BaselineConfig bcfg;
    bcfg.resolution = static_cast<int>(cfg.data_resolution);
    bcfg.img_channels = static_cast<int>(cfg.gen_img_channels);
    bcfg.num_classes = cache.manifest().recipe.num_classes;
    bcfg.base_channels = static_cast<int>(cfg.baseline_channels);
    BaselineSegmenter net(bcfg);
    net.load(ckpt);
    SegmenterFn fn = [&](const Tensor<float>& img) { return net.predict(img); };
    rep = evaluate_model(fn, cache, split, cfg.eval_metric, cfg.eval_limit);
  } else {
    throw ConfigError("unknown eval.mode: " + cfg.eval_mode);
  }
  const std::string dir = paths.sub_dir("evaluate");
  std::ofstream(dir + "/report.json") << rep.to_json().dump(2) << "\n";
  std::ofstream csv(dir + "/per_item.csv");
  csv << "id,value\n";
  for (const auto& [id, v] : rep.per_item) csv << id << ',' << v << '\n';
  log << "mean " << cfg.eval_metric << " = " << rep.mean << " (median " << rep.median
      << ", n = " << rep.per_item.size() << ")\n";
}

inline void cmd_sample(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  std::string ckpt = cfg.eval_model_ckpt;
  if (ckpt.empty()) {
    ckpt = paths.model_ckpt(cfg);
    if (!std::filesystem::exists(ckpt)) ckpt = paths.gan_ema_ckpt(cfg);
  }
  detail::require_file(ckpt, "generator checkpoint");
  EncoderBundle b = make_encoder_bundle(cfg, ckpt);
  SeededRng rng(static_cast<std::uint64_t>(cfg.seed), "sample");
  auto pairs = b.gen->sample_pairs(static_cast<int>(cfg.sample_count), cfg.sample_psi, rng,
                                   NoiseMode::fresh(rng), b.w_bar.numel() > 0 ? &b.w_bar : nullptr);
  const std::string dir = paths.sub_dir("sample");
  for (size_t i = 0; i < pairs.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s/sample_%06zu", dir.c_str(), i);
    write_png(std::string(buf) + "_img.png", to_image8(pairs[i].image));
    write_png(std::string(buf) + "_lbl.png", labels_to_image8(pairs[i].labels));
  }
  log << "wrote " << pairs.size() << " sample pairs (psi = " << cfg.sample_psi << ")\n";
}

inline void cmd_baseline(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  const std::string ds = paths.dataset_dir(cfg);
  detail::require_file(ds + "/manifest.json", "dataset manifest");
  DatasetCache cache(load_manifest(ds));
  BaselineConfig bcfg;
  bcfg.resolution = cache.manifest().recipe.resolution;
  bcfg.img_channels = cache.manifest().recipe.img_channels;
  bcfg.num_classes = cache.manifest().recipe.num_classes;
  bcfg.base_channels = static_cast<int>(cfg.baseline_channels);
  bcfg.lr = cfg.baseline_lr;
  bcfg.batch = cfg.baseline_batch;
  bcfg.dice_eps = cfg.loss_dice_eps;
  bcfg.seed = static_cast<std::uint64_t>(cfg.seed) + 17;
  std::vector<double> losses;
  BaselineSegmenter net = train_baseline(cache, cfg.baseline_epochs, bcfg, &losses);
  const std::string dir = paths.sub_dir("baseline");
  net.save(dir + "/baseline.jgseg", cfg.baseline_epochs);
  std::ofstream csv(dir + "/losses.csv");
  csv << "epoch,loss\n";
  for (size_t e = 0; e < losses.size(); ++e) csv << e << ',' << losses[e] << '\n';
  log << "baseline trained on " << cache.split_ids(SplitKind::kLabeled).size()
      << " labeled items; final epoch loss " << (losses.empty() ? 0.0 : losses.back()) << "\n";
}

inline void cmd_distill(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  const std::string ckpt = paths.model_ckpt(cfg);
  detail::require_file(ckpt, "model checkpoint");
  const std::string ds = paths.dataset_dir(cfg);
  detail::require_file(ds + "/manifest.json", "dataset manifest");
  const std::string sds = paths.shifted_dataset_dir(cfg);
  detail::require_file(sds + "/manifest.json", "shifted dataset manifest");
  EncoderBundle b = make_encoder_bundle(cfg, ckpt, /*load_encoder_too=*/true);
  b.enc->set_frozen(true);
  LoadedCheckpoint lc = load_checkpoint(ckpt);
  DatasetCache cache_in(load_manifest(ds));
  DatasetCache cache_out(load_manifest(sds));
  DistillationReport rep =
      run_distillation(cfg, *b.gen, b.w_bar, lc.meta.step, cache_in, cache_out,
                       {"sim-div", "sim-tru", "mix-div", "mix-tru"}, &log);
  const std::string dir = paths.sub_dir("distill");
  std::ofstream(dir + "/distillation.csv") << rep.to_csv();
  log << "distillation rows: " << rep.rows.size() << "\n";
}

inline void cmd_ablate(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  const std::string ds = paths.dataset_dir(cfg);
  detail::require_file(ds + "/manifest.json", "dataset manifest");
  const std::string sds = paths.shifted_dataset_dir(cfg);
  detail::require_file(sds + "/manifest.json", "shifted dataset manifest");
  DatasetManifest master = load_manifest(ds);
  DatasetManifest master_shifted = load_manifest(sds);
  AblationTable table =
      run_label_ablation(cfg, master, master_shifted, paths.sub_dir("ablate"), &log);
  std::ofstream(paths.sub_dir("ablate") + "/ablation.csv") << table.to_csv();
  log << "ablation cells: " << table.cells.size() << "\n";
}

inline void cmd_report(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  const std::string dir = paths.sub_dir("report");
  std::filesystem::create_directories(dir);
  std::ostringstream summary;
  summary << "artifact,key,value\n";
  // Aggregate evaluate reports anywhere under the run directory.
  for (const auto& entry :
       std::filesystem::recursive_directory_iterator(paths.run_dir())) {
    if (entry.path().filename() == "report.json") {
      std::ifstream is(entry.path());
      nlohmann::json j;
      is >> j;
      EvalReport rep = EvalReport::from_json(j);
      const std::string rel =
          std::filesystem::relative(entry.path().parent_path(), paths.run_dir()).string();
      summary << rel << ",mean_" << rep.metric << "," << rep.mean << "\n";
      summary << rel << ",median_" << rep.metric << "," << rep.median << "\n";
    }
  }
  std::ofstream(dir + "/summary.csv") << summary.str();
  // Loss curves from any progress.csv / losses.csv found.
  for (const auto& entry :
       std::filesystem::recursive_directory_iterator(paths.run_dir())) {
    if (entry.path().filename() != "progress.csv") continue;
    std::ifstream is(entry.path());
    std::string line;
    std::getline(is, line);  // header
    PlotSeries dr{"L_Dr", {}, {}}, dm{"L_Dm", {}, {}}, g{"L_G", {}, {}};
    while (std::getline(is, line)) {
      std::stringstream ss(line);
      std::string tok;
      std::vector<double> row;
      while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
      if (row.size() < 4) continue;
      dr.xs.push_back(row[0]);
      dr.ys.push_back(row[1]);
      dm.xs.push_back(row[0]);
      dm.ys.push_back(row[2]);
      g.xs.push_back(row[0]);
      g.ys.push_back(row[3]);
    }
    const std::string rel =
        std::filesystem::relative(entry.path().parent_path(), paths.run_dir()).string();
    std::string safe = rel;
    for (auto& ch : safe)
      if (ch == '/' || ch == '\\') ch = '_';
    write_svg_plot(dir + "/" + safe + "_losses.svg", "training losses (" + rel + ")",
                   {dr, dm, g});
  }
  log << "report written to " << dir << "\n";
}

// Dispatch; throws on failure (the CLI maps exceptions to exit codes).
inline void run_subcommand(const std::string& sub, const RunConfig& cfg, const RunPaths& paths,
                           std::ostream& log) {
  RunLock lock(paths.run_dir());
  detail::write_artifact_preamble(paths.sub_dir(sub), cfg);
  if (sub == "make-data")
    cmd_make_data(cfg, paths, log);
  else if (sub == "train-gan")
    cmd_train_gan(cfg, paths, log);
  else if (sub == "train-encoder")
    cmd_train_encoder(cfg, paths, log);
  else if (sub == "infer")
    cmd_infer(cfg, paths, log);
  else if (sub == "evaluate")
    cmd_evaluate(cfg, paths, log);
  else if (sub == "sample")
    cmd_sample(cfg, paths, log);
  else if (sub == "distill")
    cmd_distill(cfg, paths, log);
  else if (sub == "ablate")
    cmd_ablate(cfg, paths, log);
  else if (sub == "baseline")
    cmd_baseline(cfg, paths, log);
  else if (sub == "report")
    cmd_report(cfg, paths, log);
  else
    throw ConfigError("unknown subcommand: " + sub);
}

}  // namespace jgseg
