#pragma once

// PNG I/O on top of libpng: 8- and 16-bit grayscale read/write, 8-bit RGB write.

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "sacropipe/image.hpp"

namespace sacropipe::png {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] inline void on_png_error(png_structp, png_const_charp msg) { throw IoError(std::string("libpng: ") + msg); }
inline void on_png_warning(png_structp, png_const_charp) {}

template <class T>
void write_gray(const std::filesystem::path& path, const Image<T>& img, int bit_depth) {
  if (img.empty()) throw IoError("refusing to write empty image " + path.string());
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png_create_write_struct failed");
  }
  try {
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.cols), static_cast<png_uint_32>(img.rows), bit_depth,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    // No timestamps or text chunks: identical rasters give identical files.
    png_write_info(png, info);
    std::vector<png_byte> line(static_cast<size_t>(img.cols) * sizeof(T));
    for (int r = 0; r < img.rows; ++r) {
      auto src = img.row(r);
      for (int c = 0; c < img.cols; ++c) {
        if constexpr (sizeof(T) == 2) {
          line[2 * c] = static_cast<png_byte>(src[c] >> 8);
          line[2 * c + 1] = static_cast<png_byte>(src[c] & 0xFF);
        } else {
          line[c] = static_cast<png_byte>(src[c]);
        }
      }
      png_write_row(png, line.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
}

struct Raw {
  int rows = 0;
  int cols = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> values;
};

inline Raw read_gray(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open for reading: " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError("not a PNG file: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png_create_read_struct failed");
  }
  Raw raw;
  try {
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    raw.bit_depth = png_get_bit_depth(png, info);
    raw.cols = static_cast<int>(png_get_image_width(png, info));
    raw.rows = static_cast<int>(png_get_image_height(png, info));
    if (color != PNG_COLOR_TYPE_GRAY) throw IoError("expected single-channel grayscale PNG: " + path.string());
    if (raw.bit_depth < 8) {
      png_set_expand_gray_1_2_4_to_8(png);
      raw.bit_depth = 8;
    }
    png_read_update_info(png, info);
    const size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<png_byte> line(rowbytes);
    raw.values.resize(static_cast<size_t>(raw.rows) * raw.cols);
    for (int r = 0; r < raw.rows; ++r) {
      png_read_row(png, line.data(), nullptr);
      for (int c = 0; c < raw.cols; ++c) {
        raw.values[static_cast<size_t>(r) * raw.cols + c] =
            raw.bit_depth == 16 ? static_cast<std::uint16_t>((line[2 * c] << 8) | line[2 * c + 1]) : line[c];
      }
    }
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return raw;
}

}  // namespace detail

inline void write(const std::filesystem::path& path, const ImageU16& img) { detail::write_gray(path, img, 16); }
inline void write(const std::filesystem::path& path, const ImageU8& img) { detail::write_gray(path, img, 8); }

/// Interleaved 8-bit RGB raster, rows * cols * 3 bytes.
inline void write_rgb(const std::filesystem::path& path, int rows, int cols, const std::vector<std::uint8_t>& rgb) {
  if (rows <= 0 || cols <= 0 || rgb.size() != static_cast<size_t>(rows) * cols * 3)
    throw IoError("bad RGB raster for " + path.string());
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::on_png_error, detail::on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png_create_write_struct failed");
  }
  try {
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(cols), static_cast<png_uint_32>(rows), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < rows; ++r)
      png_write_row(png, const_cast<png_bytep>(rgb.data() + static_cast<size_t>(r) * cols * 3));
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
}

inline ImageU16 read_u16(const std::filesystem::path& path) {
  auto raw = detail::read_gray(path);
  if (raw.bit_depth != 16) throw IoError("expected 16-bit PNG: " + path.string());
  ImageU16 img(raw.rows, raw.cols);
  img.pixels = std::move(raw.values);
  return img;
}

inline ImageU8 read_u8(const std::filesystem::path& path) {
  auto raw = detail::read_gray(path);
  if (raw.bit_depth != 8) throw IoError("expected 8-bit PNG: " + path.string());
  ImageU8 img(raw.rows, raw.cols);
  std::transform(raw.values.begin(), raw.values.end(), img.pixels.begin(),
                 [](std::uint16_t v) { return static_cast<std::uint8_t>(v); });
  return img;
}

}  // namespace sacropipe::png
