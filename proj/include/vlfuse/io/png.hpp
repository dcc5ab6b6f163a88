#pragma once

// 8-bit RGB and 16-bit grayscale PNG via libpng. Depth maps are 16-bit
// millimeters; no gamma or color conversion is applied on either path.

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "vlfuse/error.hpp"

namespace vlfuse::io {

struct Rgb8Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // width*height*3
};

struct Gray16Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> pixels;  // width*height
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) {
    fail(mode[0] == 'r' ? ErrorKind::kNotFound : ErrorKind::kIo, "cannot open " + path.string());
  }
  return f;
}

inline void write_png(const std::filesystem::path& path, int width, int height, int color_type,
                      int bit_depth, const std::vector<png_bytep>& rows) {
  auto file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(ErrorKind::kInternal, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::kIo, "png write failed: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

inline void write_rgb8(const std::filesystem::path& path, const Rgb8Image& img) {
  require(img.pixels.size() == static_cast<std::size_t>(img.width) * img.height * 3,
          "rgb image size mismatch");
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  auto* base = const_cast<std::uint8_t*>(img.pixels.data());
  for (int y = 0; y < img.height; ++y) rows[static_cast<std::size_t>(y)] = base + y * img.width * 3;
  detail::write_png(path, img.width, img.height, PNG_COLOR_TYPE_RGB, 8, rows);
}

inline void write_gray16(const std::filesystem::path& path, const Gray16Image& img) {
  require(img.pixels.size() == static_cast<std::size_t>(img.width) * img.height,
          "depth image size mismatch");
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  auto* base = reinterpret_cast<png_bytep>(const_cast<std::uint16_t*>(img.pixels.data()));
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<std::size_t>(y)] = base + static_cast<std::size_t>(y) * img.width * 2;
  detail::write_png(path, img.width, img.height, PNG_COLOR_TYPE_GRAY, 16, rows);
}

namespace detail {

struct DecodedPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint8_t> data;
};

inline DecodedPng read_png(const std::filesystem::path& path, bool want_16bit_gray) {
  auto file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(ErrorKind::kInternal, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::kCorrupt, "png decode failed: " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  DecodedPng out;
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  if (want_16bit_gray) {
    if (color != PNG_COLOR_TYPE_GRAY || depth != 16) {
      png_destroy_read_struct(&png, &info, nullptr);
      fail(ErrorKind::kCorrupt, path.string() + ": depth must be 16-bit grayscale");
    }
    png_set_swap(png);
    out.channels = 1;
    out.bit_depth = 16;
  } else {
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
      if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
      png_set_gray_to_rgb(png);
    }
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    out.channels = 3;
    out.bit_depth = 8;
  }
  png_read_update_info(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  out.data.resize(row_bytes * static_cast<std::size_t>(out.height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y)
    rows[static_cast<std::size_t>(y)] = out.data.data() + static_cast<std::size_t>(y) * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace detail

inline Rgb8Image read_rgb8(const std::filesystem::path& path) {
  auto d = detail::read_png(path, false);
  Rgb8Image img;
  img.width = d.width;
  img.height = d.height;
  img.pixels = std::move(d.data);
  return img;
}

inline Gray16Image read_gray16(const std::filesystem::path& path) {
  auto d = detail::read_png(path, true);
  Gray16Image img;
  img.width = d.width;
  img.height = d.height;
  img.pixels.resize(static_cast<std::size_t>(d.width) * d.height);
  std::memcpy(img.pixels.data(), d.data.data(), img.pixels.size() * 2);
  return img;
}

}  // namespace vlfuse::io
