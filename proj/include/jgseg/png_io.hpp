// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Thin libpng wrapper for 8-bit grayscale / RGB images.

#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "jgseg/errors.hpp"
#include "jgseg/tensor.hpp"

namespace jgseg {

struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;                 // 1 or 3
  std::vector<std::uint8_t> data;   // row-major, interleaved
};

inline void write_png(const std::string& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw InvalidArgument("write_png: channels must be 1 or 3");
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng write failed: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  const size_t stride = static_cast<size_t>(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(img.data.data() + static_cast<size_t>(y) * stride);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline Image8 read_png(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("cannot open: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("libpng read failed: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_set_expand(png);  // palette/low-depth -> 8-bit
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  Image8 img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = static_cast<int>(png_get_channels(png, info));
  if (img.channels != 1 && img.channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("unsupported channel count in " + path);
  }
  const size_t stride = static_cast<size_t>(img.width) * img.channels;
  img.data.resize(stride * static_cast<size_t>(img.height));
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<size_t>(y)] = img.data.data() + static_cast<size_t>(y) * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

// [-1,1] float planes -> interleaved 8-bit (clamped linear map).
template <typename T>
Image8 to_image8(const Tensor<T>& chw) {
  if (chw.rank() != 3) throw InvalidArgument("to_image8 expects [C,H,W]");
  Image8 img;
  img.channels = chw.dim(0);
  img.height = chw.dim(1);
  img.width = chw.dim(2);
  img.data.resize(static_cast<size_t>(chw.numel()));
  const std::int64_t hw = static_cast<std::int64_t>(img.height) * img.width;
  for (std::int64_t k = 0; k < hw; ++k)
    for (int c = 0; c < img.channels; ++c) {
      double v = (static_cast<double>(chw[c * hw + k]) + 1.0) * 0.5 * 255.0;
      v = v < 0 ? 0 : (v > 255 ? 255 : v);
      img.data[static_cast<size_t>(k * img.channels + c)] =
          static_cast<std::uint8_t>(v + 0.5);
    }
  return img;
}

// Interleaved 8-bit -> [-1,1] float planes: 0 -> -1, 255 -> +1.
template <typename T>
Tensor<T> from_image8(const Image8& img) {
  Tensor<T> out({img.channels, img.height, img.width});
  const std::int64_t hw = static_cast<std::int64_t>(img.height) * img.width;
  for (std::int64_t k = 0; k < hw; ++k)
    for (int c = 0; c < img.channels; ++c)
      out[c * hw + k] =
          static_cast<T>(img.data[static_cast<size_t>(k * img.channels + c)] / 255.0 * 2.0 - 1.0);
  return out;
}

inline Image8 labels_to_image8(const Tensor<int>& labels) {
  if (labels.rank() != 2) throw InvalidArgument("labels_to_image8 expects [H,W]");
  Image8 img;
  img.channels = 1;
  img.height = labels.dim(0);
  img.width = labels.dim(1);
  img.data.resize(static_cast<size_t>(labels.numel()));
  for (std::int64_t i = 0; i < labels.numel(); ++i) {
    const int v = labels[i];
    if (v < 0 || v > 255) throw InvalidArgument("label out of 8-bit range");
    img.data[static_cast<size_t>(i)] = static_cast<std::uint8_t>(v);
  }
  return img;
}

inline Tensor<int> image8_to_labels(const Image8& img) {
  if (img.channels != 1) throw IoError("label mask must be single-channel");
  Tensor<int> out({img.height, img.width});
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = img.data[static_cast<size_t>(i)];
  return out;
}

}  // namespace jgseg
