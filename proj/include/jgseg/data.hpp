// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Procedural toy datasets with exact ground-truth masks, deterministic from
// (recipe seed, item index), plus parameterized domain shifts that change
// pixels but never masks.

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jgseg/png_io.hpp"
#include "jgseg/rng.hpp"

namespace jgseg {

enum class ShapeFamily { kEllipse, kPolygon, kRing };

inline std::string shape_family_name(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::kEllipse: return "ellipse";
    case ShapeFamily::kPolygon: return "polygon";
    case ShapeFamily::kRing: return "ring";
  }
  return "?";
}
inline ShapeFamily shape_family_from(const std::string& s) {
  if (s == "ellipse") return ShapeFamily::kEllipse;
  if (s == "polygon") return ShapeFamily::kPolygon;
  if (s == "ring") return ShapeFamily::kRing;
  throw InvalidArgument("unknown shape family: " + s);
}

enum class Placement { kFree, kInsideClass1 };

struct ObjectLaw {
  int cls = 1;  // target class id (>= 1); later-drawn classes overwrite
  ShapeFamily family = ShapeFamily::kEllipse;
  int count_min = 1, count_max = 1;
  double size_min = 0.1, size_max = 0.3;  // fraction of resolution
  double intensity_min = 0.4, intensity_max = 0.8;
  double texture_sigma = 0.05;
  Placement placement = Placement::kFree;
};

struct BackgroundLaw {
  double level_min = -0.8, level_max = -0.5;
  double noise_sigma = 0.05;
  double gradient_max = 0.0;  // max absolute linear ramp across the image
};

struct DomainShift {
  enum Kind { kContrastInvert, kIntensityShift, kTextureSwap, kBlur, kOcclusion } kind;
  double param = 0.0;

  static DomainShift contrast_invert() { return {kContrastInvert, 0.0}; }
  static DomainShift intensity_shift(double delta) { return {kIntensityShift, delta}; }
  static DomainShift texture_swap() { return {kTextureSwap, 0.0}; }
  static DomainShift blur(double sigma) { return {kBlur, sigma}; }
  static DomainShift occlusion(double fraction) { return {kOcclusion, fraction}; }
};

inline std::string shift_name(DomainShift::Kind k) {
  switch (k) {
    case DomainShift::kContrastInvert: return "contrast_invert";
    case DomainShift::kIntensityShift: return "intensity_shift";
    case DomainShift::kTextureSwap: return "texture_swap";
    case DomainShift::kBlur: return "blur";
    case DomainShift::kOcclusion: return "occlusion";
  }
  return "?";
}
inline DomainShift::Kind shift_kind_from(const std::string& s) {
  if (s == "contrast_invert") return DomainShift::kContrastInvert;
  if (s == "intensity_shift") return DomainShift::kIntensityShift;
  if (s == "texture_swap") return DomainShift::kTextureSwap;
  if (s == "blur") return DomainShift::kBlur;
  if (s == "occlusion") return DomainShift::kOcclusion;
  throw InvalidArgument("unknown shift kind: " + s);
}

struct DatasetRecipe {
  std::string name = "custom";
  int resolution = 32;
  int num_classes = 2;
  int img_channels = 1;
  std::vector<ObjectLaw> objects;
  BackgroundLaw background;
  std::vector<DomainShift> shifts;  // provenance of applied shifts
  std::uint64_t seed = 0;
};

// Binary medical-like toy: one bright ellipse on a dark noisy background.
inline DatasetRecipe blobs_a_recipe(int resolution = 32, std::uint64_t seed = 1000) {
  DatasetRecipe r;
  r.name = "blobs-a";
  r.resolution = resolution;
  r.num_classes = 2;
  ObjectLaw blob;
  blob.cls = 1;
  blob.family = ShapeFamily::kEllipse;
  blob.size_min = 0.12;
  blob.size_max = 0.30;
  blob.intensity_min = 0.35;
  blob.intensity_max = 0.75;
  blob.texture_sigma = 0.08;
  r.objects.push_back(blob);
  r.background.level_min = -0.75;
  r.background.level_max = -0.45;
  r.background.noise_sigma = 0.05;
  r.background.gradient_max = 0.1;
  r.seed = seed;
  return r;
}

// 4-class face-like toy: background, outer ellipse, two inner dots, one bar.
inline DatasetRecipe facetoy_recipe(int resolution = 32, std::uint64_t seed = 2000) {
  DatasetRecipe r;
  r.name = "facetoy";
  r.resolution = resolution;
  r.num_classes = 4;
  ObjectLaw face;
  face.cls = 1;
  face.family = ShapeFamily::kEllipse;
  face.size_min = 0.30;
  face.size_max = 0.40;
  face.intensity_min = 0.05;
  face.intensity_max = 0.40;
  face.texture_sigma = 0.05;
  ObjectLaw dots;
  dots.cls = 2;
  dots.family = ShapeFamily::kEllipse;
  dots.count_min = 2;
  dots.count_max = 2;
  dots.size_min = 0.04;
  dots.size_max = 0.07;
  dots.intensity_min = 0.6;
  dots.intensity_max = 0.95;
  dots.texture_sigma = 0.02;
  dots.placement = Placement::kInsideClass1;
  ObjectLaw bar;
  bar.cls = 3;
  bar.family = ShapeFamily::kPolygon;
  bar.size_min = 0.10;
  bar.size_max = 0.16;
  bar.intensity_min = -0.35;
  bar.intensity_max = -0.05;
  bar.texture_sigma = 0.02;
  bar.placement = Placement::kInsideClass1;
  r.objects = {face, dots, bar};
  r.background.level_min = -0.85;
  r.background.level_max = -0.55;
  r.background.noise_sigma = 0.04;
  r.background.gradient_max = 0.1;
  r.seed = seed;
  return r;
}

inline std::vector<DomainShift> blobs_a_prime_shifts() {
  return {DomainShift::contrast_invert(), DomainShift::texture_swap()};
}
inline std::vector<DomainShift> facetoy_prime_shifts() {
  return {DomainShift::intensity_shift(0.3), DomainShift::blur(1.0)};
}

// "contrast_invert,blur:1.0" -> shift list; empty string -> none.
inline std::vector<DomainShift> parse_shifts(const std::string& spec) {
  std::vector<DomainShift> out;
  size_t pos = 0;
  while (pos < spec.size()) {
    size_t end = spec.find(',', pos);
    if (end == std::string::npos) end = spec.size();
    std::string tok = spec.substr(pos, end - pos);
    pos = end + 1;
    if (tok.empty()) continue;
    double param = 0.0;
    const size_t colon = tok.find(':');
    if (colon != std::string::npos) {
      param = std::stod(tok.substr(colon + 1));
      tok = tok.substr(0, colon);
    }
    out.push_back({shift_kind_from(tok), param});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape instances and rasterization
// ---------------------------------------------------------------------------

struct ShapeInstance {
  ShapeFamily family;
  int cls = 1;
  double cx = 0, cy = 0;      // pixels
  double a = 1, b = 1;        // semi-axes (ellipse), outer/inner radius (ring)
  double theta = 0;           // rotation
  std::vector<double> px, py; // polygon vertices (pixels)
  double intensity = 0;
};

namespace detail {

// Membership test used by the rasterizer (canonical-frame algebra).
inline bool inside_shape(const ShapeInstance& s, double x, double y) {
  const double dx = x - s.cx, dy = y - s.cy;
  switch (s.family) {
    case ShapeFamily::kEllipse: {
      const double c = std::cos(s.theta), sn = std::sin(s.theta);
      const double u = c * dx + sn * dy, v = -sn * dx + c * dy;
      return (u * u) / (s.a * s.a) + (v * v) / (s.b * s.b) <= 1.0;
    }
    case ShapeFamily::kRing: {
      const double r2 = dx * dx + dy * dy;
      return r2 >= s.b * s.b && r2 <= s.a * s.a;
    }
    case ShapeFamily::kPolygon: {
      // Convex polygon, vertices in counter-clockwise order.
      const size_t n = s.px.size();
      for (size_t i = 0; i < n; ++i) {
        const size_t j = (i + 1) % n;
        const double ex = s.px[j] - s.px[i], ey = s.py[j] - s.py[i];
        const double cross = ex * (y - s.py[i]) - ey * (x - s.px[i]);
        if (cross < 0) return false;
      }
      return true;
    }
  }
  return false;
}

}  // namespace detail

struct ItemData {
  Tensor<float> image;      // [C, H, W], unclamped float
  Tensor<int> mask;         // [H, W]
  std::vector<ShapeInstance> shapes;
  std::uint64_t item_seed = 0;
};

inline std::uint64_t item_seed_of(const DatasetRecipe& recipe, int index) {
  return recipe.seed ^ detail::fnv1a("item-" + std::to_string(index));
}

// Deterministic single-item generation from (recipe.seed, index).
inline ItemData generate_item(const DatasetRecipe& recipe, int index) {
  const int r = recipe.resolution;
  SeededRng rng(recipe.seed, "item-" + std::to_string(index));
  ItemData item;
  item.item_seed = item_seed_of(recipe, index);
  item.image = Tensor<float>({recipe.img_channels, r, r});
  item.mask = Tensor<int>({r, r});

  // Background: level + optional linear ramp + iid noise.
  const double level = rng.uniform(recipe.background.level_min, recipe.background.level_max);
  const double gx = recipe.background.gradient_max > 0
                        ? rng.uniform(-recipe.background.gradient_max, recipe.background.gradient_max)
                        : 0.0;
  const double gy = recipe.background.gradient_max > 0
                        ? rng.uniform(-recipe.background.gradient_max, recipe.background.gradient_max)
                        : 0.0;
  Tensor<float> bg_noise = normal_sample<float>(rng, {r, r});
  Tensor<float> fg_noise = normal_sample<float>(rng, {r, r});
  for (int y = 0; y < r; ++y)
    for (int x = 0; x < r; ++x) {
      const double v = level + gx * (static_cast<double>(x) / r - 0.5) +
                       gy * (static_cast<double>(y) / r - 0.5) +
                       recipe.background.noise_sigma * bg_noise[y * r + x];
      for (int c = 0; c < recipe.img_channels; ++c)
        item.image[(static_cast<std::int64_t>(c) * r + y) * r + x] = static_cast<float>(v);
    }

  auto sample_shape = [&](const ObjectLaw& law) {
    ShapeInstance s;
    s.family = law.family;
    s.cls = law.cls;
    s.intensity = rng.uniform(law.intensity_min, law.intensity_max);
    const double lo = law.size_min * r, hi = law.size_max * r;
    // Center placement; kInsideClass1 rejects until the center lies on class 1.
    for (int attempt = 0; attempt < 64; ++attempt) {
      s.cx = rng.uniform(0.25 * r, 0.75 * r);
      s.cy = rng.uniform(0.25 * r, 0.75 * r);
      if (law.placement == Placement::kFree) break;
      const int ix = static_cast<int>(s.cx), iy = static_cast<int>(s.cy);
      if (item.mask[iy * r + ix] == 1) break;
    }
    s.a = rng.uniform(lo, hi);
    s.b = rng.uniform(lo, hi);
    s.theta = rng.uniform(0.0, 2.0 * M_PI);
    if (s.family == ShapeFamily::kRing) {
      s.a = std::max(s.a, s.b);
      s.b = rng.uniform(0.3, 0.7) * s.a;  // inner radius
    } else if (s.family == ShapeFamily::kPolygon) {
      // Affine image of a regular k-gon: convex and counter-clockwise.
      const int k = 3 + static_cast<int>(rng.below(4));
      const double squash = rng.uniform(0.3, 1.0);
      const double ct = std::cos(s.theta), st = std::sin(s.theta);
      for (int i = 0; i < k; ++i) {
        const double phi = 2.0 * M_PI * i / k;
        const double u = s.a * std::cos(phi);
        const double v = s.a * squash * std::sin(phi);
        s.px.push_back(s.cx + ct * u - st * v);
        s.py.push_back(s.cy + st * u + ct * v);
      }
    }
    return s;
  };

  for (const auto& law : recipe.objects) {
    if (law.cls < 1 || law.cls >= recipe.num_classes)
      throw InvalidArgument("object class out of range in recipe");
    const int count =
        law.count_min + static_cast<int>(rng.below(law.count_max - law.count_min + 1));
    for (int i = 0; i < count; ++i) {
      ShapeInstance s = sample_shape(law);
      for (int y = 0; y < r; ++y)
        for (int x = 0; x < r; ++x) {
          if (!detail::inside_shape(s, x, y)) continue;
          item.mask[y * r + x] = s.cls;  // later shapes overwrite earlier classes
          const double v = s.intensity + law.texture_sigma * fg_noise[y * r + x];
          for (int c = 0; c < recipe.img_channels; ++c)
            item.image[(static_cast<std::int64_t>(c) * r + y) * r + x] = static_cast<float>(v);
        }
      item.shapes.push_back(std::move(s));
    }
  }
  return item;
}

// ---------------------------------------------------------------------------
// Domain shifts (pixels only; masks byte-identical)
// ---------------------------------------------------------------------------

// Applies one shift to a float image given its mask. Deterministic given
// item_seed (used by occlusion placement).
inline Tensor<float> apply_shift_pixels(const Tensor<float>& image, const Tensor<int>& mask,
                                        const DomainShift& shift, std::uint64_t item_seed) {
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor<float> out = image;
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  switch (shift.kind) {
    case DomainShift::kContrastInvert:
      for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = -out[i];
      break;
    case DomainShift::kIntensityShift:
      for (std::int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<float>(out[i] + shift.param);
      break;
    case DomainShift::kTextureSwap: {
      // Swap the residual texture scale between foreground and background.
      for (int ch = 0; ch < c; ++ch) {
        double mean_fg = 0, mean_bg = 0;
        std::int64_t n_fg = 0, n_bg = 0;
        for (std::int64_t i = 0; i < hw; ++i) {
          const double v = image[ch * hw + i];
          if (mask[i] > 0) {
            mean_fg += v;
            ++n_fg;
          } else {
            mean_bg += v;
            ++n_bg;
          }
        }
        if (n_fg == 0 || n_bg == 0) break;
        mean_fg /= static_cast<double>(n_fg);
        mean_bg /= static_cast<double>(n_bg);
        double var_fg = 0, var_bg = 0;
        for (std::int64_t i = 0; i < hw; ++i) {
          const double v = image[ch * hw + i];
          if (mask[i] > 0)
            var_fg += (v - mean_fg) * (v - mean_fg);
          else
            var_bg += (v - mean_bg) * (v - mean_bg);
        }
        const double sd_fg = std::sqrt(var_fg / static_cast<double>(n_fg)) + 1e-8;
        const double sd_bg = std::sqrt(var_bg / static_cast<double>(n_bg)) + 1e-8;
        for (std::int64_t i = 0; i < hw; ++i) {
          const double v = image[ch * hw + i];
          out[ch * hw + i] = static_cast<float>(
              mask[i] > 0 ? mean_fg + (v - mean_fg) * (sd_bg / sd_fg)
                          : mean_bg + (v - mean_bg) * (sd_fg / sd_bg));
        }
      }
      break;
    }
    case DomainShift::kBlur: {
      const double sigma = shift.param;
      const int rad = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
      std::vector<double> k(static_cast<size_t>(2 * rad + 1));
      double ks = 0;
      for (int i = -rad; i <= rad; ++i) {
        k[static_cast<size_t>(i + rad)] = std::exp(-0.5 * i * i / (sigma * sigma));
        ks += k[static_cast<size_t>(i + rad)];
      }
      for (auto& v : k) v /= ks;
      auto reflect = [](int i, int n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
        return i;
      };
      Tensor<float> tmp({c, h, w});
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -rad; i <= rad; ++i)
              acc += k[static_cast<size_t>(i + rad)] *
                     out[(static_cast<std::int64_t>(ch) * h + y) * w + reflect(x + i, w)];
            tmp[(static_cast<std::int64_t>(ch) * h + y) * w + x] = static_cast<float>(acc);
          }
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -rad; i <= rad; ++i)
              acc += k[static_cast<size_t>(i + rad)] *
                     tmp[(static_cast<std::int64_t>(ch) * h + reflect(y + i, h)) * w + x];
            out[(static_cast<std::int64_t>(ch) * h + y) * w + x] = static_cast<float>(acc);
          }
      break;
    }
    case DomainShift::kOcclusion: {
      SeededRng rng(item_seed, "occlusion");
      const double frac = std::min(0.95, std::max(0.0, shift.param));
      const int ow = std::max(1, static_cast<int>(std::lround(std::sqrt(frac) * w)));
      const int oh = std::max(1, static_cast<int>(std::lround(std::sqrt(frac) * h)));
      const int x0 = static_cast<int>(rng.below(std::max(1, w - ow + 1)));
      const int y0 = static_cast<int>(rng.below(std::max(1, h - oh + 1)));
      for (int ch = 0; ch < c; ++ch)
        for (int y = y0; y < y0 + oh; ++y)
          for (int x = x0; x < x0 + ow; ++x)
            out[(static_cast<std::int64_t>(ch) * h + y) * w + x] = -1.0f;
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct ManifestItem {
  std::string image_path;  // relative to the dataset root
  std::string mask_path;
  std::uint64_t seed = 0;
};

struct SplitAssignment {
  std::vector<int> labeled, unlabeled, validation, test;
};

struct DatasetManifest {
  DatasetRecipe recipe;
  std::vector<ManifestItem> items;
  SplitAssignment splits;
  std::string root;  // directory holding manifest.json (set on save/load)
};

namespace detail {

inline nlohmann::json recipe_to_json(const DatasetRecipe& r) {
  nlohmann::json j;
  j["name"] = r.name;
  j["resolution"] = r.resolution;
  j["num_classes"] = r.num_classes;
  j["img_channels"] = r.img_channels;
  j["seed"] = r.seed;
  j["background"] = {{"level_min", r.background.level_min},
                     {"level_max", r.background.level_max},
                     {"noise_sigma", r.background.noise_sigma},
                     {"gradient_max", r.background.gradient_max}};
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : r.objects)
    objs.push_back({{"cls", o.cls},
                    {"family", shape_family_name(o.family)},
                    {"count_min", o.count_min},
                    {"count_max", o.count_max},
                    {"size_min", o.size_min},
                    {"size_max", o.size_max},
                    {"intensity_min", o.intensity_min},
                    {"intensity_max", o.intensity_max},
                    {"texture_sigma", o.texture_sigma},
                    {"inside_class1", o.placement == Placement::kInsideClass1}});
  j["objects"] = objs;
  nlohmann::json shifts = nlohmann::json::array();
  for (const auto& s : r.shifts)
    shifts.push_back({{"kind", shift_name(s.kind)}, {"param", s.param}});
  j["shifts"] = shifts;
  return j;
}

inline DatasetRecipe recipe_from_json(const nlohmann::json& j) {
  DatasetRecipe r;
  r.name = j.at("name");
  r.resolution = j.at("resolution");
  r.num_classes = j.at("num_classes");
  r.img_channels = j.at("img_channels");
  r.seed = j.at("seed");
  r.background.level_min = j.at("background").at("level_min");
  r.background.level_max = j.at("background").at("level_max");
  r.background.noise_sigma = j.at("background").at("noise_sigma");
  r.background.gradient_max = j.at("background").at("gradient_max");
  for (const auto& oj : j.at("objects")) {
    ObjectLaw o;
    o.cls = oj.at("cls");
    o.family = shape_family_from(oj.at("family"));
    o.count_min = oj.at("count_min");
    o.count_max = oj.at("count_max");
    o.size_min = oj.at("size_min");
    o.size_max = oj.at("size_max");
    o.intensity_min = oj.at("intensity_min");
    o.intensity_max = oj.at("intensity_max");
    o.texture_sigma = oj.at("texture_sigma");
    o.placement = oj.value("inside_class1", false) ? Placement::kInsideClass1 : Placement::kFree;
    r.objects.push_back(o);
  }
  for (const auto& sj : j.at("shifts"))
    r.shifts.push_back({shift_kind_from(sj.at("kind")), sj.at("param")});
  return r;
}

}  // namespace detail

inline void save_manifest(DatasetManifest& m, const std::string& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["recipe"] = detail::recipe_to_json(m.recipe);
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : m.items)
    items.push_back({{"image", it.image_path}, {"mask", it.mask_path}, {"seed", it.seed}});
  j["items"] = items;
  j["splits"] = {{"labeled", m.splits.labeled},
                 {"unlabeled", m.splits.unlabeled},
                 {"validation", m.splits.validation},
                 {"test", m.splits.test}};
  std::ofstream os(dir + "/manifest.json");
  if (!os) throw IoError("cannot write manifest in " + dir);
  os << j.dump(2) << "\n";
  m.root = dir;
}

inline DatasetManifest load_manifest(const std::string& dir_or_file) {
  std::filesystem::path p(dir_or_file);
  if (std::filesystem::is_directory(p)) p /= "manifest.json";
  std::ifstream is(p);
  if (!is) throw IoError("cannot open manifest: " + p.string());
  nlohmann::json j;
  is >> j;
  DatasetManifest m;
  m.recipe = detail::recipe_from_json(j.at("recipe"));
  for (const auto& ij : j.at("items"))
    m.items.push_back({ij.at("image"), ij.at("mask"), ij.at("seed")});
  m.splits.labeled = j.at("splits").at("labeled").get<std::vector<int>>();
  m.splits.unlabeled = j.at("splits").at("unlabeled").get<std::vector<int>>();
  m.splits.validation = j.at("splits").at("validation").get<std::vector<int>>();
  m.splits.test = j.at("splits").at("test").get<std::vector<int>>();
  m.root = p.parent_path().string();
  return m;
}

// Writes images/ + masks/ + manifest.json under out_dir. No splits assigned.
inline DatasetManifest generate_dataset(const DatasetRecipe& recipe, int count,
                                        const std::string& out_dir) {
  if (count <= 0) throw InvalidArgument("generate_dataset: count must be positive");
  std::error_code ec;
  std::filesystem::create_directories(out_dir + "/images", ec);
  std::filesystem::create_directories(out_dir + "/masks", ec);
  if (!std::filesystem::is_directory(out_dir + "/images"))
    throw IoError("cannot create dataset directories under " + out_dir);
  DatasetManifest m;
  m.recipe = recipe;
  for (int i = 0; i < count; ++i) {
    ItemData item = generate_item(recipe, i);
    Tensor<float> px = item.image;
    for (const auto& s : recipe.shifts)
      px = apply_shift_pixels(px, item.mask, s, item.item_seed);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06d.png", i);
    const std::string img_rel = std::string("images/") + buf;
    const std::string msk_rel = std::string("masks/") + buf;
    write_png(out_dir + "/" + img_rel, to_image8(px));
    write_png(out_dir + "/" + msk_rel, labels_to_image8(item.mask));
    m.items.push_back({img_rel, msk_rel, item.item_seed});
  }
  save_manifest(m, out_dir);
  return m;
}

// Deterministic disjoint split assignment. With enforce_scarcity, requires
// k <= n/10 (the k << n regime).
inline DatasetManifest split_dataset(const DatasetManifest& m, int k, int n, int val, int test,
                                     std::uint64_t seed, bool enforce_scarcity = true) {
  if (k < 0 || n < 0 || val < 0 || test < 0) throw InvalidArgument("negative split size");
  const int total = static_cast<int>(m.items.size());
  if (k + n + val + test > total)
    throw InvalidArgument("split oversubscribed: " + std::to_string(k + n + val + test) + " > " +
                          std::to_string(total));
  if (enforce_scarcity && k > 0 && k * 10 > n)
    throw InvalidArgument("labeled split too large for the k << n regime (k > n/10)");
  std::vector<int> ids(static_cast<size_t>(total));
  for (int i = 0; i < total; ++i) ids[static_cast<size_t>(i)] = i;
  SeededRng rng(seed, "split");
  for (int i = total - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.below(i + 1));
    std::swap(ids[static_cast<size_t>(i)], ids[static_cast<size_t>(j)]);
  }
  DatasetManifest out = m;
  out.splits = {};
  int off = 0;
  auto take = [&](int cnt) {
    std::vector<int> s(ids.begin() + off, ids.begin() + off + cnt);
    off += cnt;
    std::sort(s.begin(), s.end());
    return s;
  };
  out.splits.labeled = take(k);
  out.splits.unlabeled = take(n);
  out.splits.validation = take(val);
  out.splits.test = take(test);
  return out;
}

// New dataset whose images are shifted; masks are copied byte-identically.
inline DatasetManifest apply_shift(const DatasetManifest& m,
                                   const std::vector<DomainShift>& shifts,
                                   const std::string& out_dir) {
  std::filesystem::create_directories(out_dir + "/images");
  std::filesystem::create_directories(out_dir + "/masks");
  DatasetManifest out = m;
  for (auto& s : shifts) out.recipe.shifts.push_back(s);
  for (size_t i = 0; i < m.items.size(); ++i) {
    const auto& it = m.items[i];
    Tensor<float> img = from_image8<float>(read_png(m.root + "/" + it.image_path));
    Tensor<int> mask = image8_to_labels(read_png(m.root + "/" + it.mask_path));
    for (const auto& s : shifts) img = apply_shift_pixels(img, mask, s, it.seed);
    write_png(out_dir + "/" + it.image_path, to_image8(img));
    std::filesystem::copy_file(m.root + "/" + it.mask_path, out_dir + "/" + it.mask_path,
                               std::filesystem::copy_options::overwrite_existing);
  }
  save_manifest(out, out_dir);
  return out;
}

// ---------------------------------------------------------------------------
// In-memory cache + batching
// ---------------------------------------------------------------------------

enum class SplitKind { kLabeled, kUnlabeled, kValidation, kTest, kAllImages };

class DatasetCache {
 public:
  explicit DatasetCache(const DatasetManifest& m) : manifest_(m) {
    images_.reserve(m.items.size());
    masks_.reserve(m.items.size());
    for (const auto& it : m.items) {
      images_.push_back(from_image8<float>(read_png(m.root + "/" + it.image_path)));
      masks_.push_back(image8_to_labels(read_png(m.root + "/" + it.mask_path)));
    }
  }

  const DatasetManifest& manifest() const { return manifest_; }
  const Tensor<float>& image(int id) const { return images_[static_cast<size_t>(id)]; }
  const Tensor<int>& mask(int id) const { return masks_[static_cast<size_t>(id)]; }

  std::vector<int> split_ids(SplitKind kind) const {
    const auto& s = manifest_.splits;
    switch (kind) {
      case SplitKind::kLabeled: return s.labeled;
      case SplitKind::kUnlabeled: return s.unlabeled;
      case SplitKind::kValidation: return s.validation;
      case SplitKind::kTest: return s.test;
      case SplitKind::kAllImages: {
        std::vector<int> ids = s.unlabeled;
        ids.insert(ids.end(), s.labeled.begin(), s.labeled.end());
        return ids;
      }
    }
    return {};
  }

 private:
  DatasetManifest manifest_;
  std::vector<Tensor<float>> images_;
  std::vector<Tensor<int>> masks_;
};

struct Batch {
  Tensor<float> images;  // [B, C, H, W]
  Tensor<int> labels;    // [B, H, W]
  std::vector<int> ids;
};

// Deterministic batch assembly: `size` draws with replacement from the split.
inline Batch load_batch(const DatasetCache& cache, SplitKind kind, int size, SeededRng& rng,
                        bool resample_with_replacement = true) {
  if (size <= 0) throw InvalidArgument("load_batch: size must be positive");
  const std::vector<int> pool = cache.split_ids(kind);
  if (pool.empty()) throw InvalidArgument("load_batch: empty split");
  if (!resample_with_replacement && size > static_cast<int>(pool.size()))
    throw InvalidArgument("load_batch: batch larger than split without replacement");
  Batch b;
  const auto& first = cache.image(pool[0]);
  const int c = first.dim(0), h = first.dim(1), w = first.dim(2);
  b.images = Tensor<float>({size, c, h, w});
  b.labels = Tensor<int>({size, h, w});
  std::vector<int> chosen;
  if (resample_with_replacement) {
    for (int i = 0; i < size; ++i)
      chosen.push_back(pool[static_cast<size_t>(rng.below(static_cast<int>(pool.size())))]);
  } else {
    std::vector<int> ids = pool;
    for (int i = 0; i < size; ++i) {
      const int j = i + static_cast<int>(rng.below(static_cast<int>(ids.size()) - i));
      std::swap(ids[static_cast<size_t>(i)], ids[static_cast<size_t>(j)]);
      chosen.push_back(ids[static_cast<size_t>(i)]);
    }
  }
  const std::int64_t img_stride = static_cast<std::int64_t>(c) * h * w;
  const std::int64_t msk_stride = static_cast<std::int64_t>(h) * w;
  for (int i = 0; i < size; ++i) {
    const auto& img = cache.image(chosen[static_cast<size_t>(i)]);
    const auto& msk = cache.mask(chosen[static_cast<size_t>(i)]);
    std::copy(img.data(), img.data() + img_stride, b.images.data() + i * img_stride);
    std::copy(msk.data(), msk.data() + msk_stride, b.labels.data() + i * msk_stride);
  }
  b.ids = std::move(chosen);
  return b;
}

}  // namespace jgseg
