// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: every hyperparameter left open by the method, with
// declared defaults. Serialized as flat `key = value` lines (dotted keys);
// the same syntax drives file configs and --set overrides. Unknown keys and
// type mismatches are rejected by name.

#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "jgseg/errors.hpp"

namespace jgseg {

struct RunConfig {
  std::int64_t seed = 1234;

  // data
  std::string data_recipe = "blobs-a";  // blobs-a | facetoy
  std::int64_t data_resolution = 32;
  std::int64_t data_items = 2400;
  std::int64_t data_k = 25;
  std::int64_t data_n = 2000;
  std::int64_t data_val = 100;
  std::int64_t data_test = 200;
  std::int64_t data_seed = 1000;
  std::string data_shift;        // e.g. "contrast_invert,texture_swap"
  bool data_enforce_scarcity = true;
  std::string data_dir;          // dataset root (make-data output / consumer input)
  std::string data_shifted_dir;  // out-of-domain partner dataset root

  // generator
  std::int64_t gen_resolution = 64;
  std::int64_t gen_dz = 64;
  std::int64_t gen_dw = 128;
  std::int64_t gen_mapping_layers = 4;
  std::int64_t gen_mapping_width = 128;
  std::string gen_channels;  // csv per level; empty = default schedule
  std::int64_t gen_img_channels = 1;
  bool gen_noise = true;

  // critics
  std::int64_t critic_base_channels = 32;
  std::int64_t critic_max_channels = 256;
  std::int64_t critic_scales = 2;
  std::int64_t critic_pair_base_channels = 32;
  double critic_real_mask_smooth = 0.0;

  // encoder
  std::int64_t enc_base_channels = 32;
  std::int64_t enc_max_channels = 256;
  std::int64_t enc_stages = 4;

  // losses
  double loss_lambda1 = 1.0;
  double loss_lambda2 = 0.1;
  double loss_lambda3 = 0.1;
  double loss_r1_gamma = 10.0;
  double loss_dice_eps = 1.0;
  std::string loss_gan = "nonsaturating";  // nonsaturating | minimax
  std::string loss_ce_reduction = "mean";  // mean | sum

  // perceptual net
  std::int64_t perceptual_seed = 77;
  std::int64_t perceptual_channels = 8;
  double perceptual_odd_beta = 0.2;

  // training
  std::int64_t train_gan_steps = 20000;
  std::int64_t train_enc_steps = 5000;
  std::int64_t train_batch_u = 16;
  std::int64_t train_batch_l = 8;
  double train_lr_gd = 2e-3;
  double train_lr_e = 1e-4;
  double train_beta1_gan = 0.0;
  double train_beta2_gan = 0.99;
  double train_beta1_e = 0.9;
  double train_beta2_e = 0.999;
  double train_ema = 0.999;
  std::int64_t train_ckpt_every = 2000;
  std::int64_t train_sample_every = 2000;
  std::int64_t train_r1_every_dr = 1;
  std::int64_t train_r1_every_dm = 16;
  std::string train_dr_real_pool = "du+dl";  // du | du+dl
  std::string train_gan_ckpt;    // train-encoder input (EMA generator checkpoint)
  std::string train_resume;      // resume checkpoint path

  // inversion
  std::int64_t invert_steps = 300;
  double invert_lr = 0.05;
  double invert_lr_end = 0.005;
  std::int64_t invert_consistency_every = 1;
  double invert_clip = 10.0;

  // evaluation
  std::string eval_model_ckpt;
  std::string eval_baseline_ckpt;
  std::string eval_mode = "invert";  // invert | encode | baseline
  std::string eval_split = "test";
  std::string eval_metric = "dice";  // dice | jc | miou
  std::int64_t eval_limit = 0;       // 0 = whole split

  // sampling
  std::int64_t sample_count = 16;
  double sample_psi = 1.0;

  // distillation
  std::int64_t distill_synth_count = 5000;
  std::int64_t distill_epochs = 3;
  std::int64_t distill_real_k = 25;

  // ablation grid
  std::string ablate_k_values = "5,100";
  std::string ablate_n_values = "200,2000";
  std::int64_t ablate_gan_steps = 2500;
  std::int64_t ablate_enc_steps = 800;

  // supervised baseline
  std::int64_t baseline_epochs = 200;
  std::int64_t baseline_batch = 16;
  double baseline_lr = 1e-3;
  std::int64_t baseline_channels = 16;

  void validate() const {
    if (train_gan_steps < 0 || train_enc_steps < 0 || invert_steps < 0)
      throw ConfigError("step counts must be non-negative");
    if (train_batch_u <= 0 || train_batch_l <= 0 || baseline_batch <= 0)
      throw ConfigError("batch sizes must be positive");
    if (loss_gan != "nonsaturating" && loss_gan != "minimax")
      throw ConfigError("loss.gan must be nonsaturating or minimax");
    if (loss_ce_reduction != "mean" && loss_ce_reduction != "sum")
      throw ConfigError("loss.ce_reduction must be mean or sum");
    if (train_dr_real_pool != "du" && train_dr_real_pool != "du+dl")
      throw ConfigError("train.dr_real_pool must be du or du+dl");
    if (loss_lambda1 < 0 || loss_lambda2 < 0 || loss_lambda3 < 0 || loss_r1_gamma < 0 ||
        loss_dice_eps < 0)
      throw ConfigError("loss weights must be non-negative");
  }
};

namespace detail {

struct KeyRef {
  enum Kind { kInt, kDouble, kBool, kString } kind;
  std::int64_t* i = nullptr;
  double* d = nullptr;
  bool* b = nullptr;
  std::string* s = nullptr;
};

inline std::map<std::string, KeyRef> config_schema(RunConfig& c) {
  auto I = [](std::int64_t& v) { return KeyRef{KeyRef::kInt, &v, nullptr, nullptr, nullptr}; };
  auto D = [](double& v) { return KeyRef{KeyRef::kDouble, nullptr, &v, nullptr, nullptr}; };
  auto B = [](bool& v) { return KeyRef{KeyRef::kBool, nullptr, nullptr, &v, nullptr}; };
  auto S = [](std::string& v) { return KeyRef{KeyRef::kString, nullptr, nullptr, nullptr, &v}; };
  return {
      {"seed", I(c.seed)},
      {"data.recipe", S(c.data_recipe)},
      {"data.resolution", I(c.data_resolution)},
      {"data.items", I(c.data_items)},
      {"data.k", I(c.data_k)},
      {"data.n", I(c.data_n)},
      {"data.val", I(c.data_val)},
      {"data.test", I(c.data_test)},
      {"data.seed", I(c.data_seed)},
      {"data.shift", S(c.data_shift)},
      {"data.enforce_scarcity", B(c.data_enforce_scarcity)},
      {"data.dir", S(c.data_dir)},
      {"data.shifted_dir", S(c.data_shifted_dir)},
      {"gen.resolution", I(c.gen_resolution)},
      {"gen.dz", I(c.gen_dz)},
      {"gen.dw", I(c.gen_dw)},
      {"gen.mapping_layers", I(c.gen_mapping_layers)},
      {"gen.mapping_width", I(c.gen_mapping_width)},
      {"gen.channels", S(c.gen_channels)},
      {"gen.img_channels", I(c.gen_img_channels)},
      {"gen.noise", B(c.gen_noise)},
      {"critic.base_channels", I(c.critic_base_channels)},
      {"critic.max_channels", I(c.critic_max_channels)},
      {"critic.scales", I(c.critic_scales)},
      {"critic.pair_base_channels", I(c.critic_pair_base_channels)},
      {"critic.real_mask_smooth", D(c.critic_real_mask_smooth)},
      {"enc.base_channels", I(c.enc_base_channels)},
      {"enc.max_channels", I(c.enc_max_channels)},
      {"enc.stages", I(c.enc_stages)},
      {"loss.lambda1", D(c.loss_lambda1)},
      {"loss.lambda2", D(c.loss_lambda2)},
      {"loss.lambda3", D(c.loss_lambda3)},
      {"loss.r1_gamma", D(c.loss_r1_gamma)},
      {"loss.dice_eps", D(c.loss_dice_eps)},
      {"loss.gan", S(c.loss_gan)},
      {"loss.ce_reduction", S(c.loss_ce_reduction)},
      {"perceptual.seed", I(c.perceptual_seed)},
      {"perceptual.channels", I(c.perceptual_channels)},
      {"perceptual.odd_beta", D(c.perceptual_odd_beta)},
      {"train.gan_steps", I(c.train_gan_steps)},
      {"train.enc_steps", I(c.train_enc_steps)},
      {"train.batch_u", I(c.train_batch_u)},
      {"train.batch_l", I(c.train_batch_l)},
      {"train.lr_gd", D(c.train_lr_gd)},
      {"train.lr_e", D(c.train_lr_e)},
      {"train.beta1_gan", D(c.train_beta1_gan)},
      {"train.beta2_gan", D(c.train_beta2_gan)},
      {"train.beta1_e", D(c.train_beta1_e)},
      {"train.beta2_e", D(c.train_beta2_e)},
      {"train.ema", D(c.train_ema)},
      {"train.ckpt_every", I(c.train_ckpt_every)},
      {"train.sample_every", I(c.train_sample_every)},
      {"train.r1_every_dr", I(c.train_r1_every_dr)},
      {"train.r1_every_dm", I(c.train_r1_every_dm)},
      {"train.dr_real_pool", S(c.train_dr_real_pool)},
      {"train.gan_ckpt", S(c.train_gan_ckpt)},
      {"train.resume", S(c.train_resume)},
      {"invert.steps", I(c.invert_steps)},
      {"invert.lr", D(c.invert_lr)},
      {"invert.lr_end", D(c.invert_lr_end)},
      {"invert.consistency_every", I(c.invert_consistency_every)},
      {"invert.clip", D(c.invert_clip)},
      {"eval.model_ckpt", S(c.eval_model_ckpt)},
      {"eval.baseline_ckpt", S(c.eval_baseline_ckpt)},
      {"eval.mode", S(c.eval_mode)},
      {"eval.split", S(c.eval_split)},
      {"eval.metric", S(c.eval_metric)},
      {"eval.limit", I(c.eval_limit)},
      {"sample.count", I(c.sample_count)},
      {"sample.psi", D(c.sample_psi)},
      {"distill.synth_count", I(c.distill_synth_count)},
      {"distill.epochs", I(c.distill_epochs)},
      {"distill.real_k", I(c.distill_real_k)},
      {"ablate.k_values", S(c.ablate_k_values)},
      {"ablate.n_values", S(c.ablate_n_values)},
      {"ablate.gan_steps", I(c.ablate_gan_steps)},
      {"ablate.enc_steps", I(c.ablate_enc_steps)},
      {"baseline.epochs", I(c.baseline_epochs)},
      {"baseline.batch", I(c.baseline_batch)},
      {"baseline.lr", D(c.baseline_lr)},
      {"baseline.channels", I(c.baseline_channels)},
  };
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  size_t b = s.find_last_not_of(" \t\r\n");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline void assign_key(std::map<std::string, KeyRef>& schema, const std::string& key,
                       const std::string& value) {
  auto it = schema.find(key);
  if (it == schema.end()) throw ConfigError("unknown config key: " + key);
  KeyRef& r = it->second;
  try {
    switch (r.kind) {
      case KeyRef::kInt: {
        size_t used = 0;
        const std::int64_t v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        *r.i = v;
        break;
      }
      case KeyRef::kDouble: {
        size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        *r.d = v;
        break;
      }
      case KeyRef::kBool:
        if (value == "true" || value == "1")
          *r.b = true;
        else if (value == "false" || value == "0")
          *r.b = false;
        else
          throw std::invalid_argument(value);
        break;
      case KeyRef::kString:
        *r.s = value;
        break;
    }
  } catch (const std::logic_error&) {
    throw ConfigError("type mismatch for key " + key + ": cannot parse '" + value + "'");
  }
}

}  // namespace detail

// One `key = value` assignment (used by --set).
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must be key=value, got '" + assignment + "'");
  auto schema = detail::config_schema(c);
  detail::assign_key(schema, detail::trim(assignment.substr(0, eq)),
                     detail::trim(assignment.substr(eq + 1)));
}

// defaults <- file <- overrides, left to right.
inline RunConfig resolve_config(const std::string& path,
                                const std::vector<std::string>& overrides = {}) {
  RunConfig c;
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    auto schema = detail::config_schema(c);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#') continue;
      const size_t eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
      detail::assign_key(schema, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
    }
  }
  for (const auto& o : overrides) apply_override(c, o);
  c.validate();
  return c;
}

// Stable text form; re-parsing reproduces an equal config.
inline std::string serialize_config(const RunConfig& c) {
  RunConfig copy = c;
  auto schema = detail::config_schema(copy);
  std::ostringstream os;
  os.precision(17);
  for (const auto& [key, ref] : schema) {
    os << key << " = ";
    switch (ref.kind) {
      case detail::KeyRef::kInt: os << *ref.i; break;
      case detail::KeyRef::kDouble: os << *ref.d; break;
      case detail::KeyRef::kBool: os << (*ref.b ? "true" : "false"); break;
      case detail::KeyRef::kString: os << *ref.s; break;
    }
    os << "\n";
  }
  return os.str();
}

inline std::vector<std::int64_t> parse_int_list(const std::string& csv) {
  std::vector<std::int64_t> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const std::string t = detail::trim(tok);
    if (!t.empty()) out.push_back(std::stoll(t));
  }
  return out;
}

}  // namespace jgseg
