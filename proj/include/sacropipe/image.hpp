#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "sacropipe/errors.hpp"

namespace sacropipe {

/// Row-major single-channel raster.
template <class T>
struct Image {
  using value_type = T;

  int rows = 0;
  int cols = 0;
  std::vector<T> pixels;

  Image() = default;
  Image(int r, int c, T fill = T{}) : rows(r), cols(c), pixels(static_cast<size_t>(r) * c, fill) {
    if (r < 0 || c < 0) throw ConfigError("negative image dimensions");
  }

  bool empty() const noexcept { return pixels.empty(); }
  size_t size() const noexcept { return pixels.size(); }

  T& operator()(int r, int c) { return pixels[static_cast<size_t>(r) * cols + c]; }
  const T& operator()(int r, int c) const { return pixels[static_cast<size_t>(r) * cols + c]; }

  std::span<T> row(int r) { return {pixels.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)}; }
  std::span<const T> row(int r) const {
    return {pixels.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
  }

  bool same_shape(const auto& other) const noexcept { return rows == other.rows && cols == other.cols; }

  friend bool operator==(const Image&, const Image&) = default;
};

using ImageU8 = Image<std::uint8_t>;
using ImageU16 = Image<std::uint16_t>;
using ImageF = Image<float>;
using LabelMap = Image<std::uint8_t>;
using BinaryMask = Image<std::uint8_t>;

/// Half-open pixel rectangle [row0,row1) x [col0,col1).
struct Box {
  int row0 = 0;
  int col0 = 0;
  int row1 = 0;
  int col1 = 0;

  int height() const noexcept { return row1 - row0; }
  int width() const noexcept { return col1 - col0; }
  long area() const noexcept { return height() > 0 && width() > 0 ? static_cast<long>(height()) * width() : 0; }
  double center_row() const noexcept { return 0.5 * (row0 + row1); }
  double center_col() const noexcept { return 0.5 * (col0 + col1); }
  bool contains(int r, int c) const noexcept { return r >= row0 && r < row1 && c >= col0 && c < col1; }
  bool contains(const Box& b) const noexcept {
    return b.row0 >= row0 && b.row1 <= row1 && b.col0 >= col0 && b.col1 <= col1;
  }

  friend bool operator==(const Box&, const Box&) = default;
};

inline Box intersect(const Box& a, const Box& b) {
  Box r{std::max(a.row0, b.row0), std::max(a.col0, b.col0), std::min(a.row1, b.row1), std::min(a.col1, b.col1)};
  if (r.row1 < r.row0) r.row1 = r.row0;
  if (r.col1 < r.col0) r.col1 = r.col0;
  return r;
}

inline Box bounding_union(const Box& a, const Box& b) {
  return {std::min(a.row0, b.row0), std::min(a.col0, b.col0), std::max(a.row1, b.row1), std::max(a.col1, b.col1)};
}

inline double iou(const Box& a, const Box& b) {
  const long inter = intersect(a, b).area();
  const long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

/// Grows each side by `margin` times the box dimension (rounded), clamped to [0,rows) x [0,cols).
inline Box expand_box(const Box& b, double margin, int rows, int cols) {
  const int dr = static_cast<int>(std::lround(margin * b.height()));
  const int dc = static_cast<int>(std::lround(margin * b.width()));
  return {std::max(0, b.row0 - dr), std::max(0, b.col0 - dc), std::min(rows, b.row1 + dr), std::min(cols, b.col1 + dc)};
}

template <class T>
Image<T> crop(const Image<T>& img, const Box& box) {
  if (box.row0 < 0 || box.col0 < 0 || box.row1 > img.rows || box.col1 > img.cols || box.area() == 0)
    throw ConfigError("crop box outside image or empty");
  Image<T> out(box.height(), box.width());
  for (int r = 0; r < out.rows; ++r) {
    auto src = img.row(box.row0 + r).subspan(static_cast<size_t>(box.col0), static_cast<size_t>(out.cols));
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

template <class To, class From>
Image<To> convert(const Image<From>& img) {
  Image<To> out(img.rows, img.cols);
  std::transform(img.pixels.begin(), img.pixels.end(), out.pixels.begin(),
                 [](From v) { return static_cast<To>(v); });
  return out;
}

}  // namespace sacropipe
