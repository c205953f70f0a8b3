#include "fh/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "fh/errors.hpp"

namespace fh {

RgbImage flip(const RgbImage& img, bool horizontal, bool vertical) {
  RgbImage out(img.height, img.width);
  for (int r = 0; r < img.height; ++r) {
    const int sr = vertical ? img.height - 1 - r : r;
    for (int c = 0; c < img.width; ++c) {
      const int sc = horizontal ? img.width - 1 - c : c;
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = img.at(sr, sc, ch);
    }
  }
  return out;
}

RgbImage resize_bilinear(const RgbImage& img, int height, int width) {
  if (height < 1 || width < 1 || img.height < 1 || img.width < 1)
    throw ConfigError("resize_bilinear: empty image or target size");
  if (height == img.height && width == img.width) return img;
  RgbImage out(height, width);
  const double sy = static_cast<double>(img.height) / height;
  const double sx = static_cast<double>(img.width) / width;
  for (int r = 0; r < height; ++r) {
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int c = 0; c < width; ++c) {
      const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < 3; ++ch) {
        const double top = img.at(y0, x0, ch) * (1 - wx) + img.at(y0, x1, ch) * wx;
        const double bottom = img.at(y1, x0, ch) * (1 - wx) + img.at(y1, x1, ch) * wx;
        out.at(r, c, ch) = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> to_tensor(std::span<const RgbImage> images, double scale) {
  if (images.empty()) throw ShapeError("to_tensor: no images");
  const int h = images[0].height, w = images[0].width;
  Tensor<T> t({static_cast<int>(images.size()), 3, h, w});
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (images[n].height != h || images[n].width != w)
      throw ShapeError("to_tensor: image " + std::to_string(n) + " has a different size");
    T* dst = t.sample(static_cast<int>(n));
    for (int ch = 0; ch < 3; ++ch)
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
          dst[(static_cast<std::size_t>(ch) * h + r) * w + c] =
              static_cast<T>(images[n].at(r, c, ch) * scale);
  }
  return t;
}

template <class T>
RgbImage from_tensor(const Tensor<T>& t, int n) {
  const Shape s = t.shape();
  if (s.c != 3 || n < 0 || n >= s.n)
    throw ShapeError("from_tensor: need sample " + std::to_string(n) + " of an N x 3 x H x W tensor, got " +
                     s.str());
  RgbImage img(s.h, s.w);
  const T* src = t.sample(n);
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < s.h; ++r)
      for (int c = 0; c < s.w; ++c)
        img.at(r, c, ch) = static_cast<double>(src[(static_cast<std::size_t>(ch) * s.h + r) * s.w + c]);
  return img;
}

template Tensor<float> to_tensor<float>(std::span<const RgbImage>, double);
template Tensor<double> to_tensor<double>(std::span<const RgbImage>, double);
template RgbImage from_tensor<float>(const Tensor<float>&, int);
template RgbImage from_tensor<double>(const Tensor<double>&, int);

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

}  // namespace

RgbImage read_png(const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DataError(path + ": cannot open");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw DataError(path + ": not a PNG file");

  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError(path + ": out of memory");
  }
  int w = 0, h = 0;
  std::vector<unsigned char> all;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(path + ": corrupt PNG (" + message + ")");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  const int passes = png_set_interlace_handling(png);
  png_read_update_info(png, info);
  w = static_cast<int>(png_get_image_width(png, info));
  h = static_cast<int>(png_get_image_height(png, info));
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  if (rowbytes != static_cast<std::size_t>(w) * 3) png_error(png, "unexpected pixel layout");
  all.resize(rowbytes * h);
  for (int p = 0; p < passes; ++p)
    for (int r = 0; r < h; ++r) png_read_row(png, all.data() + rowbytes * r, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  RgbImage img(h, w);
  for (std::size_t i = 0; i < all.size(); ++i) img.pixels[i] = all[i];
  return img;
}

void write_png(const std::string& path, const RgbImage& img, double scale) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw DataError(path + ": cannot open for writing");
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError(path + ": out of memory");
  }
  std::vector<unsigned char> bytes(img.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = static_cast<unsigned char>(std::clamp(std::round(img.pixels[i] * scale), 0.0, 255.0));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError(path + ": PNG write failed (" + message + ")");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < img.height; ++r)
    png_write_row(png, bytes.data() + static_cast<std::size_t>(r) * img.width * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace fh
