// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "jgseg/data.hpp"

using namespace jgseg;
namespace fs = std::filesystem;

namespace {

std::string tmp_dir(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("jgseg_data_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::vector<char> file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  return std::vector<char>((std::istreambuf_iterator<char>(is)),
                           std::istreambuf_iterator<char>());
}

// Independent point-in-shape oracle. Ellipse: explicit inverse-rotation
// matrix; polygon: ray casting; ring: radial distance.
bool oracle_inside(const ShapeInstance& s, double x, double y) {
  switch (s.family) {
    case ShapeFamily::kEllipse: {
      const double m00 = std::cos(-s.theta), m01 = -std::sin(-s.theta);
      const double m10 = std::sin(-s.theta), m11 = std::cos(-s.theta);
      const double u = m00 * (x - s.cx) + m01 * (y - s.cy);
      const double v = m10 * (x - s.cx) + m11 * (y - s.cy);
      return u * u * s.b * s.b + v * v * s.a * s.a <= s.a * s.a * s.b * s.b;
    }
    case ShapeFamily::kRing: {
      const double d = std::hypot(x - s.cx, y - s.cy);
      return d >= s.b && d <= s.a;
    }
    case ShapeFamily::kPolygon: {
      // Ray casting to +x infinity; boundary handled leniently below.
      bool in = false;
      const size_t n = s.px.size();
      for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const bool cross = (s.py[i] > y) != (s.py[j] > y);
        if (cross) {
          const double xi =
              s.px[j] + (y - s.py[j]) / (s.py[i] - s.py[j]) * (s.px[i] - s.px[j]);
          if (x < xi) in = !in;
        }
      }
      return in;
    }
  }
  return false;
}

// Distance of the point to the shape boundary, to skip knife-edge pixels
// where the two formulations may disagree in floating point.
bool near_boundary(const ShapeInstance& s, double x, double y) {
  for (double dx : {-0.02, 0.02})
    for (double dy : {-0.02, 0.02})
      if (detail::inside_shape(s, x + dx, y + dy) != detail::inside_shape(s, x, y)) return true;
  return false;
}

}  // namespace

TEST_CASE("dataset generation is byte-identical for the same recipe+seed") {
  DatasetRecipe r = blobs_a_recipe(16, 77);
  const std::string d1 = tmp_dir("det1"), d2 = tmp_dir("det2");
  generate_dataset(r, 5, d1);
  generate_dataset(r, 5, d2);
  for (int i = 0; i < 5; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "/images/%06d.png", i);
    REQUIRE(file_bytes(d1 + buf) == file_bytes(d2 + buf));
    std::snprintf(buf, sizeof(buf), "/masks/%06d.png", i);
    REQUIRE(file_bytes(d1 + buf) == file_bytes(d2 + buf));
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("blobs-a: foreground present with bounded fraction over 1000 items") {
  DatasetRecipe r = blobs_a_recipe(32, 123);
  for (int i = 0; i < 1000; ++i) {
    ItemData item = generate_item(r, i);
    std::int64_t fg = 0;
    for (std::int64_t k = 0; k < item.mask.numel(); ++k) fg += item.mask[k] == 1 ? 1 : 0;
    const double frac = static_cast<double>(fg) / static_cast<double>(item.mask.numel());
    REQUIRE(fg >= 1);
    REQUIRE(frac >= 0.02);
    REQUIRE(frac <= 0.5);
  }
}

TEST_CASE("facetoy: every class present in every item by construction") {
  DatasetRecipe r = facetoy_recipe(32, 321);
  for (int i = 0; i < 200; ++i) {
    ItemData item = generate_item(r, i);
    std::vector<bool> present(4, false);
    for (std::int64_t k = 0; k < item.mask.numel(); ++k) present[static_cast<size_t>(item.mask[k])] = true;
    for (int c = 0; c < 4; ++c) REQUIRE(present[static_cast<size_t>(c)]);
  }
}

TEST_CASE("mask geometry matches an independent point-in-shape oracle") {
  for (const DatasetRecipe& r : {blobs_a_recipe(32, 5), facetoy_recipe(32, 6)}) {
    SeededRng probe(9, "probe");
    for (int i = 0; i < 20; ++i) {
      ItemData item = generate_item(r, i);
      for (int t = 0; t < 100; ++t) {
        const int x = static_cast<int>(probe.below(r.resolution));
        const int y = static_cast<int>(probe.below(r.resolution));
        // Last drawn shape containing the pixel decides its class.
        int expected = 0;
        bool skip = false;
        for (const auto& s : item.shapes) {
          if (near_boundary(s, x, y)) skip = true;
          if (oracle_inside(s, x, y)) expected = s.cls;
        }
        if (skip) continue;
        REQUIRE(item.mask[y * r.resolution + x] == expected);
      }
    }
  }
}

TEST_CASE("split assignment: disjoint, deterministic, seed-sensitive") {
  DatasetRecipe r = blobs_a_recipe(16, 9);
  const std::string dir = tmp_dir("split");
  DatasetManifest m = generate_dataset(r, 80, dir);

  DatasetManifest a = split_dataset(m, 5, 50, 10, 10, 42);
  REQUIRE(a.splits.labeled.size() == 5);
  REQUIRE(a.splits.unlabeled.size() == 50);
  std::vector<int> all = a.splits.labeled;
  all.insert(all.end(), a.splits.unlabeled.begin(), a.splits.unlabeled.end());
  all.insert(all.end(), a.splits.validation.begin(), a.splits.validation.end());
  all.insert(all.end(), a.splits.test.begin(), a.splits.test.end());
  std::sort(all.begin(), all.end());
  REQUIRE(std::adjacent_find(all.begin(), all.end()) == all.end());  // disjoint

  DatasetManifest b = split_dataset(m, 5, 50, 10, 10, 42);
  REQUIRE(a.splits.labeled == b.splits.labeled);
  bool differs = false;
  for (int t = 0; t < 20 && !differs; ++t) {
    DatasetManifest c = split_dataset(m, 5, 50, 10, 10, 100 + static_cast<std::uint64_t>(t));
    differs = c.splits.labeled != a.splits.labeled;
  }
  REQUIRE(differs);

  SECTION("k = 0 allowed; oversubscription and scarcity violations rejected") {
    DatasetManifest z = split_dataset(m, 0, 50, 5, 5, 1);
    REQUIRE(z.splits.labeled.empty());
    REQUIRE_THROWS_AS(split_dataset(m, 10, 60, 10, 10, 1, false), InvalidArgument);
    REQUIRE_THROWS_AS(split_dataset(m, 20, 50, 5, 5, 1, true), InvalidArgument);   // k > n/10
    DatasetManifest ok = split_dataset(m, 20, 50, 5, 5, 1, false);
    REQUIRE(ok.splits.labeled.size() == 20);
  }
  fs::remove_all(dir);
}

TEST_CASE("domain shifts transform pixels and never masks") {
  DatasetRecipe r = blobs_a_recipe(16, 31);
  ItemData item = generate_item(r, 0);

  SECTION("contrast_invert is an involution (byte level)") {
    const std::string d0 = tmp_dir("shift0");
    DatasetManifest m = generate_dataset(r, 3, d0);
    m = split_dataset(m, 0, 3, 0, 0, 1);
    save_manifest(m, d0);
    const std::string d1 = tmp_dir("shift1"), d2 = tmp_dir("shift2");
    DatasetManifest m1 = apply_shift(m, {DomainShift::contrast_invert()}, d1);
    DatasetManifest m2 = apply_shift(m1, {DomainShift::contrast_invert()}, d2);
    for (int i = 0; i < 3; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "/images/%06d.png", i);
      REQUIRE(file_bytes(d0 + buf) == file_bytes(d2 + buf));
      REQUIRE(file_bytes(d0 + buf) != file_bytes(d1 + buf));
      std::snprintf(buf, sizeof(buf), "/masks/%06d.png", i);
      REQUIRE(file_bytes(d0 + buf) == file_bytes(d1 + buf));  // masks unchanged
    }
    fs::remove_all(d0);
    fs::remove_all(d1);
    fs::remove_all(d2);
  }
  SECTION("intensity_shift adds exactly delta before clamping") {
    Tensor<float> shifted =
        apply_shift_pixels(item.image, item.mask, DomainShift::intensity_shift(0.3), 1);
    for (std::int64_t i = 0; i < item.image.numel(); ++i)
      REQUIRE(static_cast<double>(shifted[i]) - item.image[i] ==
              Catch::Approx(0.3).margin(1e-7));
  }
  SECTION("texture_swap preserves shapes of regions") {
    Tensor<float> swapped =
        apply_shift_pixels(item.image, item.mask, DomainShift::texture_swap(), 1);
    REQUIRE(swapped.shape() == item.image.shape());
    REQUIRE(swapped.all_finite());
    bool changed = false;
    for (std::int64_t i = 0; i < swapped.numel(); ++i) changed |= swapped[i] != item.image[i];
    REQUIRE(changed);
  }
  SECTION("blur and occlusion stay finite and deterministic") {
    Tensor<float> b1 = apply_shift_pixels(item.image, item.mask, DomainShift::blur(1.0), 1);
    Tensor<float> b2 = apply_shift_pixels(item.image, item.mask, DomainShift::blur(1.0), 1);
    REQUIRE(b1.vec() == b2.vec());
    Tensor<float> o1 = apply_shift_pixels(item.image, item.mask, DomainShift::occlusion(0.2), 7);
    Tensor<float> o2 = apply_shift_pixels(item.image, item.mask, DomainShift::occlusion(0.2), 7);
    REQUIRE(o1.vec() == o2.vec());
    std::int64_t occluded = 0;
    for (std::int64_t i = 0; i < o1.numel(); ++i) occluded += o1[i] == -1.0f ? 1 : 0;
    REQUIRE(occluded > 0);
  }
}

TEST_CASE("manifest round-trips and supports regeneration") {
  DatasetRecipe r = facetoy_recipe(16, 8);
  const std::string dir = tmp_dir("manifest");
  DatasetManifest m = generate_dataset(r, 6, dir);
  m = split_dataset(m, 0, 4, 1, 1, 3);
  save_manifest(m, dir);
  DatasetManifest loaded = load_manifest(dir);
  REQUIRE(loaded.items.size() == 6);
  REQUIRE(loaded.recipe.name == "facetoy");
  REQUIRE(loaded.recipe.num_classes == 4);
  REQUIRE(loaded.splits.unlabeled == m.splits.unlabeled);
  REQUIRE(loaded.items[2].seed == m.items[2].seed);

  // Regeneration from the loaded recipe is byte-identical.
  const std::string dir2 = tmp_dir("regen");
  generate_dataset(loaded.recipe, 6, dir2);
  for (int i = 0; i < 6; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "/images/%06d.png", i);
    REQUIRE(file_bytes(dir + buf) == file_bytes(dir2 + buf));
  }
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("batch loading: shapes, value mapping, quantization bound") {
  DatasetRecipe r = blobs_a_recipe(16, 55);
  const std::string dir = tmp_dir("batch");
  DatasetManifest m = generate_dataset(r, 10, dir);
  m = split_dataset(m, 0, 8, 0, 2, 4);
  save_manifest(m, dir);
  DatasetCache cache(m);

  SeededRng rng(1, "batch");
  Batch b = load_batch(cache, SplitKind::kUnlabeled, 4, rng);
  REQUIRE(b.images.shape() == Shape{4, 1, 16, 16});
  REQUIRE(b.labels.shape() == Shape{4, 16, 16});
  for (std::int64_t i = 0; i < b.images.numel(); ++i) {
    REQUIRE(b.images[i] >= -1.0f);
    REQUIRE(b.images[i] <= 1.0f);
  }

  SECTION("png endpoints map to exactly -1 and +1") {
    Image8 img;
    img.width = 2;
    img.height = 1;
    img.channels = 1;
    img.data = {0, 255};
    Tensor<float> t = from_image8<float>(img);
    REQUIRE(t[0] == -1.0f);
    REQUIRE(t[1] == 1.0f);
  }
  SECTION("export/import round trip moves no pixel more than 1/255") {
    SeededRng xr(3, "x");
    Tensor<float> x = uniform_sample<float>(xr, {1, 8, 8}, -1.0, 1.0);
    Tensor<float> back = from_image8<float>(to_image8(x));
    for (std::int64_t i = 0; i < x.numel(); ++i)
      REQUIRE(std::abs(back[i] - x[i]) <= 1.0f / 255.0f + 1e-6f);
  }
  SECTION("empty split rejected") {
    REQUIRE_THROWS_AS(load_batch(cache, SplitKind::kLabeled, 2, rng), InvalidArgument);
  }
  fs::remove_all(dir);
}

TEST_CASE("shift spec parsing") {
  auto shifts = parse_shifts("contrast_invert,intensity_shift:0.3,blur:1.5");
  REQUIRE(shifts.size() == 3);
  REQUIRE(shifts[0].kind == DomainShift::kContrastInvert);
  REQUIRE(shifts[1].kind == DomainShift::kIntensityShift);
  REQUIRE(shifts[1].param == Catch::Approx(0.3));
  REQUIRE(shifts[2].kind == DomainShift::kBlur);
  REQUIRE_THROWS_AS(parse_shifts("wobble"), InvalidArgument);
  REQUIRE(parse_shifts("").empty());
}
