#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "melad/tensor.hpp"

namespace melad {

/// 8-bit interleaved RGB pixels, row-major.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width + x) * 3 + c];
  }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
};

/// Decodes a PNG or JPEG file (detected by signature, not extension).
/// Grayscale and palette images come back as RGB; alpha is dropped.
/// Throws DataError for unreadable or undecodable files.
RgbImage read_image(const std::filesystem::path& path);

void write_png(const RgbImage& image, const std::filesystem::path& path);

bool has_image_extension(const std::filesystem::path& path);

/// (3, H, W) float tensor holding the raw 0..255 channel values.
Tensor to_planar(const RgbImage& image);

/// Bilinear resampling with half-pixel centers and edge clamping:
/// destination x samples source (x + 0.5) * in_w / out_w - 0.5. Works on
/// (C,H,W). Same-size calls return the input unchanged.
Tensor resize_bilinear(const Tensor& chw, std::size_t out_h, std::size_t out_w);

/// decode -> bilinear resize to target -> channels-first (3, H, W) scaled by
/// 1/255 into [0, 1].
Tensor preprocess(const std::filesystem::path& path, std::size_t target_h = 150,
                  std::size_t target_w = 150);
Tensor preprocess(const RgbImage& image, std::size_t target_h, std::size_t target_w);

}  // namespace melad
