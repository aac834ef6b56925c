// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "jgseg/harness.hpp"

using namespace jgseg;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("jgseg_harness_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

}  // namespace

TEST_CASE("config resolution: precedence, unknown keys, round trip") {
  const std::string dir = fresh_dir("cfg");
  const std::string path = dir + "/run.config";
  {
    std::ofstream os(path);
    os << "# comment line\n";
    os << "train.gan_steps = 123\n";
    os << "loss.lambda2 = 0.5\n";
  }
  SECTION("defaults <- file <- overrides") {
    RunConfig c = resolve_config(path, {"train.gan_steps=10"});
    REQUIRE(c.train_gan_steps == 10);        // override wins
    REQUIRE(c.loss_lambda2 == 0.5);          // file wins over default
    REQUIRE(c.train_enc_steps == 5000);      // default preserved
  }
  SECTION("unknown key is named in the error") {
    try {
      resolve_config(path, {"trian.steps=10"});
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      REQUIRE(std::string(e.what()).find("trian.steps") != std::string::npos);
    }
  }
  SECTION("type mismatch is a config error") {
    REQUIRE_THROWS_AS(resolve_config(path, {"train.gan_steps=abc"}), ConfigError);
    REQUIRE_THROWS_AS(resolve_config(path, {"loss.lambda1=true"}), ConfigError);
  }
  SECTION("serialization re-parses to an equal config") {
    RunConfig c = resolve_config(path, {"data.recipe=facetoy", "sample.psi=0.7"});
    const std::string text = serialize_config(c);
    const std::string path2 = dir + "/round.config";
    std::ofstream(path2) << text;
    RunConfig c2 = resolve_config(path2);
    REQUIRE(serialize_config(c2) == text);
  }
  fs::remove_all(dir);
}

TEST_CASE("run lock rejects concurrent use of one run name") {
  const std::string dir = fresh_dir("lock");
  RunLock first(dir + "/runA");
  REQUIRE_THROWS_AS(RunLock(dir + "/runA"), PreconditionError);
  RunLock other(dir + "/runB");  // distinct names proceed
  fs::remove_all(dir);
}

TEST_CASE("missing prerequisites raise precondition errors") {
  const std::string dir = fresh_dir("prereq");
  setenv("JGSEG_RUNS_DIR", dir.c_str(), 1);
  RunPaths paths{default_runs_root(), "norun"};
  RunConfig cfg;
  std::ostringstream log;
  REQUIRE_THROWS_AS(run_subcommand("train-gan", cfg, paths, log), PreconditionError);
  REQUIRE_THROWS_AS(run_subcommand("infer", cfg, paths, log), PreconditionError);
  REQUIRE_THROWS_AS(run_subcommand("evaluate", cfg, paths, log), PreconditionError);
  unsetenv("JGSEG_RUNS_DIR");
  fs::remove_all(dir);
}

TEST_CASE("micro pipeline: make-data, train, infer, evaluate, sample, report") {
  const std::string dir = fresh_dir("pipe");
  setenv("JGSEG_RUNS_DIR", dir.c_str(), 1);
  RunPaths paths{default_runs_root(), "micro"};

  RunConfig cfg;
  cfg.seed = 7;
  cfg.data_resolution = 16;
  cfg.data_items = 40;
  cfg.data_k = 2;
  cfg.data_n = 26;
  cfg.data_val = 4;
  cfg.data_test = 6;
  cfg.data_shift = "contrast_invert,texture_swap";
  cfg.gen_resolution = 16;
  cfg.gen_dz = 8;
  cfg.gen_dw = 10;
  cfg.gen_mapping_layers = 2;
  cfg.gen_mapping_width = 10;
  cfg.gen_channels = "8,6,6";
  cfg.critic_base_channels = 6;
  cfg.critic_max_channels = 12;
  cfg.critic_pair_base_channels = 6;
  cfg.enc_base_channels = 6;
  cfg.enc_max_channels = 12;
  cfg.enc_stages = 3;
  cfg.perceptual_channels = 4;
  cfg.train_gan_steps = 4;
  cfg.train_enc_steps = 3;
  cfg.train_batch_u = 4;
  cfg.train_batch_l = 2;
  cfg.train_ckpt_every = 0;
  cfg.train_sample_every = 0;
  cfg.invert_steps = 3;
  cfg.eval_limit = 3;
  cfg.sample_count = 2;

  std::ostringstream log;
  run_subcommand("make-data", cfg, paths, log);
  REQUIRE(fs::exists(paths.sub_dir("make-data") + "/dataset/manifest.json"));
  REQUIRE(fs::exists(paths.sub_dir("make-data") + "/dataset_shifted/manifest.json"));
  REQUIRE(fs::exists(paths.sub_dir("make-data") + "/resolved.config"));
  REQUIRE(fs::exists(paths.sub_dir("make-data") + "/version.txt"));

  run_subcommand("train-gan", cfg, paths, log);
  REQUIRE(fs::exists(paths.sub_dir("train-gan") + "/ckpt_final.ema.jgseg"));
  run_subcommand("train-encoder", cfg, paths, log);
  REQUIRE(fs::exists(paths.sub_dir("train-encoder") + "/ckpt_model.jgseg"));
  run_subcommand("infer", cfg, paths, log);
  bool found_pred = false, found_trace = false;
  for (const auto& e : fs::directory_iterator(paths.sub_dir("infer"))) {
    const std::string name = e.path().filename().string();
    found_pred |= name.find("_pred.png") != std::string::npos;
    found_trace |= name.find("_trace.csv") != std::string::npos;
  }
  REQUIRE(found_pred);
  REQUIRE(found_trace);

  run_subcommand("evaluate", cfg, paths, log);
  REQUIRE(fs::exists(paths.sub_dir("evaluate") + "/report.json"));
  run_subcommand("sample", cfg, paths, log);
  REQUIRE(fs::exists(paths.sub_dir("sample") + "/sample_000000_img.png"));
  REQUIRE(fs::exists(paths.sub_dir("sample") + "/sample_000001_lbl.png"));
  run_subcommand("baseline", cfg, paths, log);
  REQUIRE(fs::exists(paths.sub_dir("baseline") + "/baseline.jgseg"));
  run_subcommand("report", cfg, paths, log);
  REQUIRE(fs::exists(paths.sub_dir("report") + "/summary.csv"));
  bool found_svg = false;
  for (const auto& e : fs::directory_iterator(paths.sub_dir("report")))
    found_svg |= e.path().extension() == ".svg";
  REQUIRE(found_svg);

  unsetenv("JGSEG_RUNS_DIR");
  fs::remove_all(dir);
}

TEST_CASE("reproducibility: identical configs give identical reports") {
  const std::string dir = fresh_dir("repro");
  setenv("JGSEG_RUNS_DIR", dir.c_str(), 1);

  RunConfig cfg;
  cfg.seed = 11;
  cfg.data_resolution = 16;
  cfg.data_items = 30;
  cfg.data_k = 2;
  cfg.data_n = 20;
  cfg.data_val = 2;
  cfg.data_test = 4;
  cfg.gen_resolution = 16;
  cfg.gen_dz = 8;
  cfg.gen_dw = 10;
  cfg.gen_mapping_layers = 2;
  cfg.gen_mapping_width = 10;
  cfg.gen_channels = "8,6,6";
  cfg.critic_base_channels = 6;
  cfg.critic_max_channels = 12;
  cfg.critic_pair_base_channels = 6;
  cfg.enc_base_channels = 6;
  cfg.enc_max_channels = 12;
  cfg.enc_stages = 3;
  cfg.perceptual_channels = 4;
  cfg.train_gan_steps = 3;
  cfg.train_enc_steps = 2;
  cfg.train_batch_u = 4;
  cfg.train_batch_l = 2;
  cfg.train_ckpt_every = 0;
  cfg.train_sample_every = 0;
  cfg.invert_steps = 2;
  cfg.eval_limit = 2;

  auto run_pipeline = [&](const std::string& name) {
    RunPaths paths{default_runs_root(), name};
    std::ostringstream log;
    run_subcommand("make-data", cfg, paths, log);
    run_subcommand("train-gan", cfg, paths, log);
    run_subcommand("train-encoder", cfg, paths, log);
    run_subcommand("evaluate", cfg, paths, log);
    std::ifstream is(paths.sub_dir("evaluate") + "/report.json");
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  REQUIRE(run_pipeline("r1") == run_pipeline("r2"));
  unsetenv("JGSEG_RUNS_DIR");
  fs::remove_all(dir);
}
