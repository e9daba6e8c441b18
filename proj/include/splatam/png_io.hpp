#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "splatam/image.hpp"

namespace splatam {
namespace detail {

struct PngWriteGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* fp = nullptr;
  ~PngWriteGuard() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngReadGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* fp = nullptr;
  ~PngReadGuard() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

/// Writes raw rows as a PNG to path via a .part file plus rename, so readers
/// never observe a half-written image.
inline void write_png_rows(const std::string& path, int width, int height, int bit_depth,
                           int color_type, std::vector<png_bytep>& rows) {
  const std::string tmp = path + ".part";
  PngWriteGuard g;
  g.fp = std::fopen(tmp.c_str(), "wb");
  if (!g.fp) throw std::runtime_error("png: cannot open " + tmp + " for writing");
  g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!g.png) throw std::runtime_error("png: write struct allocation failed");
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw std::runtime_error("png: info struct allocation failed");
  if (setjmp(png_jmpbuf(g.png))) {
    std::remove(tmp.c_str());
    throw std::runtime_error("png: failed writing " + path);
  }
  png_init_io(g.png, g.fp);
  png_set_IHDR(g.png, g.info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(g.png, g.info);
  png_write_image(g.png, rows.data());
  png_write_end(g.png, nullptr);
  std::fflush(g.fp);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::remove(tmp.c_str());
    throw std::runtime_error("png: cannot move " + tmp + " into place: " + ec.message());
  }
}

}  // namespace detail

/// Writes an H x W x 3 image with values in [0,1] as an 8-bit RGB PNG.
inline void write_png_rgb8(const std::string& path, const ImageD& img) {
  if (img.channels() != 3 || img.empty())
    throw std::invalid_argument("png: rgb writer needs a non-empty 3-channel image");
  const int W = img.width(), H = img.height();
  std::vector<unsigned char> buf(static_cast<std::size_t>(W) * H * 3);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const double v = std::clamp(img.data()[i], 0.0, 1.0);
    buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  std::vector<png_bytep> rows(H);
  for (int y = 0; y < H; ++y) rows[y] = buf.data() + static_cast<std::size_t>(y) * W * 3;
  detail::write_png_rows(path, W, H, 8, PNG_COLOR_TYPE_RGB, rows);
}

/// Writes a depth image (meters) as a 16-bit grayscale PNG with the given
/// meters-to-counts scale. Values outside the representable range saturate;
/// non-finite or negative depths store zero (the missing-depth code).
inline void write_png_gray16(const std::string& path, const ImageD& img, double scale) {
  if (img.channels() != 1 || img.empty())
    throw std::invalid_argument("png: gray16 writer needs a non-empty 1-channel image");
  if (!(scale > 0.0)) throw std::invalid_argument("png: depth scale must be positive");
  const int W = img.width(), H = img.height();
  std::vector<unsigned char> buf(static_cast<std::size_t>(W) * H * 2);  // big-endian rows
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double v = img.at(x, y) * scale;
      std::uint16_t q = 0;
      if (std::isfinite(v) && v > 0.0)
        q = static_cast<std::uint16_t>(std::lround(std::min(v, 65535.0)));
      const std::size_t o = (static_cast<std::size_t>(y) * W + x) * 2;
      buf[o] = static_cast<unsigned char>(q >> 8);
      buf[o + 1] = static_cast<unsigned char>(q & 0xff);
    }
  std::vector<png_bytep> rows(H);
  for (int y = 0; y < H; ++y) rows[y] = buf.data() + static_cast<std::size_t>(y) * W * 2;
  detail::write_png_rows(path, W, H, 16, PNG_COLOR_TYPE_GRAY, rows);
}

/// Reads any PNG as an H x W x 3 image in [0,1]; palette, gray, alpha and
/// 16-bit inputs are converted.
inline ImageD read_png_rgb8(const std::string& path) {
  detail::PngReadGuard g;
  g.fp = std::fopen(path.c_str(), "rb");
  if (!g.fp) throw std::runtime_error("png: cannot open " + path);
  g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!g.png) throw std::runtime_error("png: read struct allocation failed");
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw std::runtime_error("png: info struct allocation failed");
  std::vector<unsigned char> buf;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(g.png))) throw std::runtime_error("png: failed reading " + path);
  png_init_io(g.png, g.fp);
  png_read_info(g.png, g.info);
  png_set_expand(g.png);
  png_set_strip_16(g.png);
  png_set_strip_alpha(g.png);
  if (png_get_color_type(g.png, g.info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(g.png, g.info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(g.png);
  png_read_update_info(g.png, g.info);
  const int W = static_cast<int>(png_get_image_width(g.png, g.info));
  const int H = static_cast<int>(png_get_image_height(g.png, g.info));
  if (png_get_channels(g.png, g.info) != 3 || png_get_bit_depth(g.png, g.info) != 8)
    throw std::runtime_error("png: unsupported layout after conversion in " + path);
  buf.resize(static_cast<std::size_t>(W) * H * 3);
  rows.resize(H);
  for (int y = 0; y < H; ++y) rows[y] = buf.data() + static_cast<std::size_t>(y) * W * 3;
  png_read_image(g.png, rows.data());
  png_read_end(g.png, nullptr);
  ImageD img(W, H, 3);
  for (std::size_t i = 0; i < buf.size(); ++i) img.data()[i] = buf[i] / 255.0;
  return img;
}

/// Reads a 16-bit grayscale PNG into meters via the counts-to-meters scale.
/// Zero counts decode to depth zero, the missing-depth code.
inline ImageD read_png_gray16(const std::string& path, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("png: depth scale must be positive");
  detail::PngReadGuard g;
  g.fp = std::fopen(path.c_str(), "rb");
  if (!g.fp) throw std::runtime_error("png: cannot open " + path);
  g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!g.png) throw std::runtime_error("png: read struct allocation failed");
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw std::runtime_error("png: info struct allocation failed");
  std::vector<unsigned char> buf;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(g.png))) throw std::runtime_error("png: failed reading " + path);
  png_init_io(g.png, g.fp);
  png_read_info(g.png, g.info);
  if (png_get_color_type(g.png, g.info) != PNG_COLOR_TYPE_GRAY ||
      png_get_bit_depth(g.png, g.info) != 16)
    throw std::runtime_error("png: " + path + " is not 16-bit grayscale");
  const int W = static_cast<int>(png_get_image_width(g.png, g.info));
  const int H = static_cast<int>(png_get_image_height(g.png, g.info));
  buf.resize(static_cast<std::size_t>(W) * H * 2);
  rows.resize(H);
  for (int y = 0; y < H; ++y) rows[y] = buf.data() + static_cast<std::size_t>(y) * W * 2;
  png_read_image(g.png, rows.data());
  png_read_end(g.png, nullptr);
  ImageD img(W, H, 1);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const std::size_t o = (static_cast<std::size_t>(y) * W + x) * 2;
      // PNG 16-bit samples are stored most significant byte first
      const std::uint16_t q = static_cast<std::uint16_t>((buf[o] << 8) | buf[o + 1]);
      img.at(x, y) = q / scale;
    }
  return img;
}

}  // namespace splatam
