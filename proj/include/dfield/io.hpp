#pragma once

// Image file I/O: 8-bit gray and RGB PNG, binary PGM (P5). Luminance is
// mapped to [0,1] on load and rounded back to 8 bits on save. Masks are
// written as 0/255 gray PNG.

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "dfield/core.hpp"

namespace dfield {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw Error("cannot open file: " + path);
  return f;
}

inline std::uint8_t to_byte(double v) {
  const double s = v * 255.0 + 0.5;
  return std::uint8_t(s < 0.0 ? 0.0 : s > 255.0 ? 255.0 : s);
}

// Reads any 8/16-bit gray/palette/rgb(a) PNG as packed 8-bit rows with
// `channels` samples per pixel (1 or 3).
inline std::vector<std::uint8_t> read_png_rows(const std::string& path, int channels,
                                               int& width, int& height) {
  FilePtr file = open_file(path, "rb");
  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw Error("not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng init failed");
  }
  std::vector<std::uint8_t> packed;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("PNG decode failed: " + path);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  width = int(png_get_image_width(png, info));
  height = int(png_get_image_height(png, info));
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (channels == 3) {
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
      png_set_gray_to_rgb(png);
  } else {
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
        color == PNG_COLOR_TYPE_PALETTE)
      png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);

  packed.resize(std::size_t(width) * height * channels);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y)
    rows[y] = packed.data() + std::size_t(y) * width * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return packed;
}

inline void write_png_rows(const std::string& path, const std::uint8_t* packed,
                           int width, int height, int channels) {
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("PNG encode failed: " + path);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(packed + std::size_t(y) * width * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

inline GrayImage load_png_gray(const std::string& path) {
  int w = 0, h = 0;
  const auto packed = detail::read_png_rows(path, 1, w, h);
  GrayImage img(w, h);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = packed[i] / 255.0;
  return img;
}

inline RgbImage load_png_rgb(const std::string& path) {
  int w = 0, h = 0;
  const auto packed = detail::read_png_rows(path, 3, w, h);
  RgbImage img(w, h);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = {packed[3 * i] / 255.0, packed[3 * i + 1] / 255.0, packed[3 * i + 2] / 255.0};
  return img;
}

inline void save_png(const GrayImage& img, const std::string& path) {
  std::vector<std::uint8_t> packed(img.data.size());
  for (std::size_t i = 0; i < packed.size(); ++i) packed[i] = detail::to_byte(img.data[i]);
  detail::write_png_rows(path, packed.data(), img.width, img.height, 1);
}

inline void save_png(const RgbImage& img, const std::string& path) {
  std::vector<std::uint8_t> packed(img.data.size() * 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    packed[3 * i] = detail::to_byte(img.data[i].r);
    packed[3 * i + 1] = detail::to_byte(img.data[i].g);
    packed[3 * i + 2] = detail::to_byte(img.data[i].b);
  }
  detail::write_png_rows(path, packed.data(), img.width, img.height, 3);
}

inline void save_png(const BinaryMask& mask, const std::string& path) {
  std::vector<std::uint8_t> packed(mask.data.size());
  for (std::size_t i = 0; i < packed.size(); ++i) packed[i] = mask.data[i] ? 255 : 0;
  detail::write_png_rows(path, packed.data(), mask.width, mask.height, 1);
}

inline BinaryMask load_png_mask(const std::string& path) {
  GrayImage g = load_png_gray(path);
  return threshold(g, 0.5);
}

inline void save_pgm(const GrayImage& img, const std::string& path) {
  detail::FilePtr f = detail::open_file(path, "wb");
  std::fprintf(f.get(), "P5\n%d %d\n255\n", img.width, img.height);
  std::vector<std::uint8_t> row(img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) row[x] = detail::to_byte(img.at(x, y));
    if (std::fwrite(row.data(), 1, row.size(), f.get()) != row.size())
      throw Error("PGM write failed: " + path);
  }
}

inline GrayImage load_pgm(const std::string& path) {
  detail::FilePtr f = detail::open_file(path, "rb");
  char magic[3] = {};
  if (std::fscanf(f.get(), "%2s", magic) != 1 || std::strcmp(magic, "P5") != 0)
    throw Error("not a binary PGM (P5) file: " + path);
  int vals[3], got = 0;
  while (got < 3) {
    int c = std::fgetc(f.get());
    if (c == '#') {
      while (c != '\n' && c != EOF) c = std::fgetc(f.get());
    } else if (std::isspace(c)) {
      continue;
    } else if (c == EOF) {
      throw Error("truncated PGM header: " + path);
    } else {
      std::ungetc(c, f.get());
      if (std::fscanf(f.get(), "%d", &vals[got]) != 1)
        throw Error("bad PGM header: " + path);
      ++got;
    }
  }
  const int w = vals[0], h = vals[1], maxval = vals[2];
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
    throw Error("unsupported PGM header: " + path);
  std::fgetc(f.get());  // single whitespace separating header from raster
  GrayImage img(w, h);
  std::vector<std::uint8_t> row(w);
  for (int y = 0; y < h; ++y) {
    if (std::fread(row.data(), 1, row.size(), f.get()) != row.size())
      throw Error("truncated PGM raster: " + path);
    for (int x = 0; x < w; ++x) img.at(x, y) = double(row[x]) / maxval;
  }
  return img;
}

}  // namespace dfield
