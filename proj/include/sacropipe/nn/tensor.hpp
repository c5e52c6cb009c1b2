#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sacropipe/errors.hpp"

namespace sacropipe::nn {

/// Dense NCHW float tensor.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, float fill = 0.0f)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t numel() const noexcept { return data.size(); }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  std::size_t sample_size() const noexcept { return static_cast<std::size_t>(c) * h * w; }
  bool same_shape(const Tensor& o) const noexcept { return n == o.n && c == o.c && h == o.h && w == o.w; }

  float* sample(int i) { return data.data() + static_cast<std::size_t>(i) * sample_size(); }
  const float* sample(int i) const { return data.data() + static_cast<std::size_t>(i) * sample_size(); }
  float* channel(int i, int ch) { return sample(i) + static_cast<std::size_t>(ch) * plane(); }
  const float* channel(int i, int ch) const { return sample(i) + static_cast<std::size_t>(ch) * plane(); }
  float& at(int i, int ch, int y, int x) { return channel(i, ch)[static_cast<std::size_t>(y) * w + x]; }
  float at(int i, int ch, int y, int x) const { return channel(i, ch)[static_cast<std::size_t>(y) * w + x]; }

  std::string shape_str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) throw ShapeError("concat: " + a.shape_str() + " vs " + b.shape_str());
  Tensor out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    std::copy(a.sample(i), a.sample(i) + a.sample_size(), out.sample(i));
    std::copy(b.sample(i), b.sample(i) + b.sample_size(), out.sample(i) + a.sample_size());
  }
  return out;
}

/// Inverse of concat_channels: first `ca` channels to `a`, the rest to `b`.
inline void split_channels(const Tensor& t, int ca, Tensor& a, Tensor& b) {
  a = Tensor(t.n, ca, t.h, t.w);
  b = Tensor(t.n, t.c - ca, t.h, t.w);
  for (int i = 0; i < t.n; ++i) {
    std::copy(t.sample(i), t.sample(i) + a.sample_size(), a.sample(i));
    std::copy(t.sample(i) + a.sample_size(), t.sample(i) + t.sample_size(), b.sample(i));
  }
}

inline void add_inplace(Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("add: " + a.shape_str() + " vs " + b.shape_str());
  for (std::size_t i = 0; i < a.numel(); ++i) a.data[i] += b.data[i];
}

/// Trainable tensor with gradient and optimizer bookkeeping.
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;
  int group = 0;          // discriminative learning-rate group
  bool trainable = true;  // false while frozen
  bool decay = true;      // decoupled weight decay applies

  Param() = default;
  Param(std::string n, std::vector<int> s, bool wd = true) : name(std::move(n)), shape(std::move(s)), decay(wd) {
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    value.assign(count, 0.0f);
    grad.assign(count, 0.0f);
  }
  std::size_t size() const noexcept { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

/// Non-trainable persistent state (batch-norm running statistics).
struct Buffer {
  std::string name;
  std::vector<float>* values = nullptr;
};

}  // namespace sacropipe::nn
