#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "texlab/common.hpp"
#include "texlab/tensor.hpp"

namespace texlab {

// Planar CHW float image with values in [-1, 1].
struct Image {
  int channels = 0, height = 0, width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, 0.f) {}

  float& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  bool same_size(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

inline float clamp_unit(float x) { return std::min(1.f, std::max(-1.f, x)); }

template <typename S>
Tensor<S> to_tensor(const Image& img) {
  Tensor<S> t(1, img.channels, img.height, img.width);
  for (std::size_t i = 0; i < img.data.size(); ++i) t.v[i] = static_cast<S>(img.data[i]);
  return t;
}

template <typename S>
Image from_tensor(const Tensor<S>& t, int ni = 0) {
  Image img(t.c, t.h, t.w);
  const S* src = t.item(ni);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(src[i]);
  return img;
}

template <typename S>
void copy_into_tensor(const Image& img, Tensor<S>& t, int ni) {
  S* dst = t.item(ni);
  for (std::size_t i = 0; i < img.data.size(); ++i) dst[i] = static_cast<S>(img.data[i]);
}

// 8-bit quantization used for all PNG traffic: pixel = round((x+1)/2*255),
// clamped; the inverse maps 0 -> -1 and 255 -> +1.
inline unsigned char to_byte(float x) {
  const float p = std::round((x + 1.f) * 0.5f * 255.f);
  return static_cast<unsigned char>(std::min(255.f, std::max(0.f, p)));
}

inline float from_byte(unsigned char p) { return static_cast<float>(p) * (2.f / 255.f) - 1.f; }

namespace detail {
struct PngCloser {
  std::FILE* f = nullptr;
  ~PngCloser() {
    if (f) std::fclose(f);
  }
};
}  // namespace detail

inline void write_png(const Image& img, const std::string& path) {
  require(img.channels == 3 || img.channels == 1, ErrorCode::IoError,
          "write_png expects 1 or 3 channels, got " + std::to_string(img.channels));
  detail::PngCloser fc{std::fopen(path.c_str(), "wb")};
  require(fc.f != nullptr, ErrorCode::IoError, "cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::IoError, "libpng write failure: " + path);
  }
  png_init_io(png, fc.f);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        row[x * 3 + c] = to_byte(img.at(img.channels == 3 ? c : 0, y, x));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Decodes any libpng-readable file to a 3-channel [-1,1] image.
inline Image read_png(const std::string& path) {
  detail::PngCloser fc{std::fopen(path.c_str(), "rb")};
  require(fc.f != nullptr, ErrorCode::IoError, "cannot open: " + path);

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fc.f) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    fail(ErrorCode::UndecodableImage, "not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::UndecodableImage, "libpng decode failure: " + path);
  }
  png_init_io(png, fc.f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));

  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = raw.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = from_byte(raw[(static_cast<std::size_t>(y) * w + x) * 3 + c]);
  return img;
}

inline Image crop_window(const Image& base, int row, int col, int size) {
  require(row >= 0 && col >= 0 && row + size <= base.height && col + size <= base.width,
          ErrorCode::CropTooLarge, "crop window out of bounds");
  Image out(base.channels, size, size);
  for (int c = 0; c < base.channels; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) out.at(c, y, x) = base.at(c, row + y, col + x);
  return out;
}

inline Image cyclic_shift(const Image& img, int dy, int dx) {
  Image out(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const int sy = ((y - dy) % img.height + img.height) % img.height;
        const int sx = ((x - dx) % img.width + img.width) % img.width;
        out.at(c, y, x) = img.at(c, sy, sx);
      }
  return out;
}

// Bilinear sample with clamp-to-edge coordinates.
inline float sample_bilinear(const Image& img, int c, double y, double x) {
  y = std::min(static_cast<double>(img.height - 1), std::max(0.0, y));
  x = std::min(static_cast<double>(img.width - 1), std::max(0.0, x));
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
  const double fy = y - y0, fx = x - x0;
  const double a = img.at(c, y0, x0), b = img.at(c, y0, x1);
  const double d = img.at(c, y1, x0), e = img.at(c, y1, x1);
  return static_cast<float>((a * (1 - fx) + b * fx) * (1 - fy) + (d * (1 - fx) + e * fx) * fy);
}

inline double mean_pixel_sq_diff(const Image& a, const Image& b) {
  require(a.same_size(b), ErrorCode::SizeMismatch, "image size mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

// Horizontal concatenation, used for interpolation strips.
inline Image hconcat(const std::vector<Image>& frames, int gap = 2) {
  require(!frames.empty(), ErrorCode::InvalidParams, "no frames");
  const int h = frames[0].height, c = frames[0].channels;
  int w = -gap;
  for (const auto& f : frames) {
    require(f.height == h && f.channels == c, ErrorCode::SizeMismatch, "frame size mismatch");
    w += f.width + gap;
  }
  Image out(c, h, w);
  std::fill(out.data.begin(), out.data.end(), 1.f);
  int x0 = 0;
  for (const auto& f : frames) {
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < f.width; ++x) out.at(ci, y, x0 + x) = f.at(ci, y, x);
    x0 += f.width + gap;
  }
  return out;
}

}  // namespace texlab
