#pragma once

#include <span>
#include <string>
#include <vector>

#include "fh/tensor.hpp"

namespace fh {

/// Interleaved H x W x 3 image of doubles. The value range depends on context:
/// 0..255 for raw fundus data, 0..1 everywhere else.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  RgbImage() = default;
  RgbImage(int h, int w, double fill = 0.0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  double& at(int r, int c, int ch) { return pixels[(static_cast<std::size_t>(r) * width + c) * 3 + ch]; }
  double at(int r, int c, int ch) const {
    return pixels[(static_cast<std::size_t>(r) * width + c) * 3 + ch];
  }
  bool same_size(const RgbImage& o) const { return height == o.height && width == o.width; }
  bool operator==(const RgbImage&) const = default;
};

/// Mirrors columns (horizontal) and/or rows (vertical).
RgbImage flip(const RgbImage& img, bool horizontal, bool vertical);

/// Bilinear resampling with pixel-centre alignment.
RgbImage resize_bilinear(const RgbImage& img, int height, int width);

/// Stacks images into an N x 3 x H x W tensor, multiplying values by `scale`.
template <class T>
Tensor<T> to_tensor(std::span<const RgbImage> images, double scale = 1.0);

/// Sample `n` of an N x 3 x H x W tensor.
template <class T>
RgbImage from_tensor(const Tensor<T>& t, int n = 0);

/// Reads any PNG as 8-bit RGB; values are 0..255. Throws DataError naming the file.
RgbImage read_png(const std::string& path);

/// Writes 8-bit RGB. Values are multiplied by `scale`, rounded and clamped to 0..255.
void write_png(const std::string& path, const RgbImage& img, double scale = 255.0);

}  // namespace fh
