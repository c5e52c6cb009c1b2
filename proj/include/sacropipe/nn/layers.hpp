#pragma once

// Layers with explicit forward/backward. Each layer caches what its backward
// pass needs from the most recent forward call.

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "sacropipe/nn/tensor.hpp"
#include "sacropipe/random.hpp"

namespace sacropipe::nn {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

inline void kaiming_normal(Param& p, int fan_in, Rng& rng) {
  std::normal_distribution<float> d(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  for (auto& v : p.value) v = d(rng);
}

// ---- convolution -------------------------------------------------------------

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in, int out, int kernel, int stride, int pad, bool bias, Rng& rng)
      : in_(in), out_(out), k_(kernel), stride_(stride), pad_(pad), has_bias_(bias),
        weight_(name + ".weight", {out, in, kernel, kernel}) {
    kaiming_normal(weight_, in * kernel * kernel, rng);
    if (bias) bias_ = Param(name + ".bias", {out}, false);
  }

  int out_size(int len) const { return (len + 2 * pad_ - k_) / stride_ + 1; }

  Tensor forward(const Tensor& x) {
    if (x.c != in_) throw ShapeError(weight_.name + ": expected " + std::to_string(in_) + " channels, got " + x.shape_str());
    const int ho = out_size(x.h), wo = out_size(x.w);
    if (ho < 1 || wo < 1) throw ShapeError(weight_.name + ": input too small " + x.shape_str());
    input_ = x;
    Tensor y(x.n, out_, ho, wo);
    const int ckk = in_ * k_ * k_;
    CMapMat W(weight_.value.data(), out_, ckk);
    for (int i = 0; i < x.n; ++i) {
      MapMat Y(y.sample(i), out_, ho * wo);
      if (pointwise()) {
        Y.noalias() = W * CMapMat(x.sample(i), in_, ho * wo);
      } else {
        im2col(x, i, ho, wo);
        Y.noalias() = W * CMapMat(col_.data(), ckk, ho * wo);
      }
      if (has_bias_)
        for (int o = 0; o < out_; ++o) Y.row(o).array() += bias_.value[o];
    }
    return y;
  }

  /// Accumulates parameter gradients (if enabled) and returns dL/dx.
  Tensor backward(const Tensor& dy, bool param_grads = true, bool input_grad = true) {
    const Tensor& x = input_;
    const int ho = dy.h, wo = dy.w, ckk = in_ * k_ * k_;
    Tensor dx;
    if (input_grad) dx = Tensor(x.n, x.c, x.h, x.w);
    CMapMat W(weight_.value.data(), out_, ckk);
    MapMat dW(weight_.grad.data(), out_, ckk);
    for (int i = 0; i < x.n; ++i) {
      CMapMat dY(dy.sample(i), out_, ho * wo);
      if (param_grads) {
        if (pointwise()) {
          dW.noalias() += dY * CMapMat(x.sample(i), in_, ho * wo).transpose();
        } else {
          im2col(x, i, ho, wo);
          dW.noalias() += dY * CMapMat(col_.data(), ckk, ho * wo).transpose();
        }
        if (has_bias_)
          for (int o = 0; o < out_; ++o) bias_.grad[o] += dY.row(o).sum();
      }
      if (input_grad) {
        if (pointwise()) {
          MapMat(dx.sample(i), in_, ho * wo).noalias() = W.transpose() * dY;
        } else {
          dcol_.resize(static_cast<std::size_t>(ckk) * ho * wo);
          MapMat(dcol_.data(), ckk, ho * wo).noalias() = W.transpose() * dY;
          col2im(dx, i, ho, wo);
        }
      }
    }
    return dx;
  }

  void collect(std::vector<Param*>& ps) {
    ps.push_back(&weight_);
    if (has_bias_) ps.push_back(&bias_);
  }
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  void release() { input_ = Tensor(); }

 private:
  bool pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }

  void im2col(const Tensor& x, int i, int ho, int wo) {
    const std::size_t hw = static_cast<std::size_t>(ho) * wo;
    col_.resize(static_cast<std::size_t>(in_) * k_ * k_ * hw);
    float* dst = col_.data();
    for (int c = 0; c < in_; ++c) {
      const float* src = x.channel(i, c);
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx, dst += hw) {
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            float* row = dst + static_cast<std::size_t>(oy) * wo;
            if (iy < 0 || iy >= x.h) {
              std::fill(row, row + wo, 0.0f);
              continue;
            }
            const float* srow = src + static_cast<std::size_t>(iy) * x.w;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              row[ox] = (ix < 0 || ix >= x.w) ? 0.0f : srow[ix];
            }
          }
        }
      }
    }
  }

  void col2im(Tensor& dx, int i, int ho, int wo) const {
    const std::size_t hw = static_cast<std::size_t>(ho) * wo;
    const float* src = dcol_.data();
    for (int c = 0; c < in_; ++c) {
      float* dst = dx.channel(i, c);
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx, src += hw) {
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= dx.h) continue;
            const float* row = src + static_cast<std::size_t>(oy) * wo;
            float* drow = dst + static_cast<std::size_t>(iy) * dx.w;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < dx.w) drow[ix] += row[ox];
            }
          }
        }
      }
    }
  }

  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  bool has_bias_ = false;
  Param weight_, bias_;
  Tensor input_;
  std::vector<float> col_, dcol_;
};

/// 2x2 stride-2 transposed convolution (exact 2x upsampling).
class ConvTranspose2x2 {
 public:
  ConvTranspose2x2() = default;
  ConvTranspose2x2(const std::string& name, int in, int out, Rng& rng)
      : in_(in), out_(out), weight_(name + ".weight", {out * 4, in}), bias_(name + ".bias", {out}, false) {
    kaiming_normal(weight_, in, rng);
  }

  Tensor forward(const Tensor& x) {
    if (x.c != in_) throw ShapeError(weight_.name + ": channel mismatch " + x.shape_str());
    input_ = x;
    Tensor y(x.n, out_, x.h * 2, x.w * 2);
    const int hw = x.h * x.w;
    buf_.resize(static_cast<std::size_t>(out_) * 4 * hw);
    CMapMat W(weight_.value.data(), out_ * 4, in_);
    for (int i = 0; i < x.n; ++i) {
      MapMat(buf_.data(), out_ * 4, hw).noalias() = W * CMapMat(x.sample(i), in_, hw);
      for (int o = 0; o < out_; ++o) {
        float* dst = y.channel(i, o);
        for (int q = 0; q < 4; ++q) {
          const int a = q / 2, b = q % 2;
          const float* src = buf_.data() + static_cast<std::size_t>(o * 4 + q) * hw;
          for (int yy = 0; yy < x.h; ++yy)
            for (int xx = 0; xx < x.w; ++xx)
              dst[static_cast<std::size_t>(2 * yy + a) * y.w + 2 * xx + b] = src[yy * x.w + xx] + bias_.value[o];
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& dy, bool param_grads = true) {
    const Tensor& x = input_;
    const int hw = x.h * x.w;
    Tensor dx(x.n, x.c, x.h, x.w);
    buf_.resize(static_cast<std::size_t>(out_) * 4 * hw);
    CMapMat W(weight_.value.data(), out_ * 4, in_);
    MapMat dW(weight_.grad.data(), out_ * 4, in_);
    for (int i = 0; i < x.n; ++i) {
      for (int o = 0; o < out_; ++o) {
        const float* src = dy.channel(i, o);
        for (int q = 0; q < 4; ++q) {
          const int a = q / 2, b = q % 2;
          float* dst = buf_.data() + static_cast<std::size_t>(o * 4 + q) * hw;
          for (int yy = 0; yy < x.h; ++yy)
            for (int xx = 0; xx < x.w; ++xx) dst[yy * x.w + xx] = src[static_cast<std::size_t>(2 * yy + a) * dy.w + 2 * xx + b];
        }
      }
      CMapMat dB(buf_.data(), out_ * 4, hw);
      if (param_grads) {
        dW.noalias() += dB * CMapMat(x.sample(i), in_, hw).transpose();
        for (int o = 0; o < out_; ++o)
          for (int q = 0; q < 4; ++q) bias_.grad[o] += dB.row(o * 4 + q).sum();
      }
      MapMat(dx.sample(i), in_, hw).noalias() = W.transpose() * dB;
    }
    return dx;
  }

  void collect(std::vector<Param*>& ps) {
    ps.push_back(&weight_);
    ps.push_back(&bias_);
  }
  void release() { input_ = Tensor(); }

 private:
  int in_ = 0, out_ = 0;
  Param weight_, bias_;
  Tensor input_;
  std::vector<float> buf_;
};

// ---- normalisation / activations -------------------------------------------------

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(const std::string& name, int channels)
      : c_(channels), gamma_(name + ".gamma", {channels}, false), beta_(name + ".beta", {channels}, false),
        running_mean_(static_cast<std::size_t>(channels), 0.0f), running_var_(static_cast<std::size_t>(channels), 1.0f),
        name_(name) {
    std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0f);
  }

  Tensor forward(const Tensor& x, bool train) {
    if (x.c != c_) throw ShapeError(name_ + ": channel mismatch " + x.shape_str());
    train_ = train;
    Tensor y(x.n, x.c, x.h, x.w);
    xhat_ = Tensor(x.n, x.c, x.h, x.w);
    inv_std_.assign(static_cast<std::size_t>(c_), 0.0f);
    const double m = static_cast<double>(x.n) * x.plane();
    for (int ch = 0; ch < c_; ++ch) {
      double mean, var;
      if (train) {
        double s = 0.0;
        for (int i = 0; i < x.n; ++i) {
          const float* p = x.channel(i, ch);
          for (std::size_t k = 0; k < x.plane(); ++k) s += p[k];
        }
        mean = s / m;
        double ss = 0.0;
        for (int i = 0; i < x.n; ++i) {
          const float* p = x.channel(i, ch);
          for (std::size_t k = 0; k < x.plane(); ++k) ss += (p[k] - mean) * (p[k] - mean);
        }
        var = ss / m;
        const double unbiased = m > 1 ? ss / (m - 1) : var;
        running_mean_[ch] = static_cast<float>((1 - kMomentum) * running_mean_[ch] + kMomentum * mean);
        running_var_[ch] = static_cast<float>((1 - kMomentum) * running_var_[ch] + kMomentum * unbiased);
      } else {
        mean = running_mean_[ch];
        var = running_var_[ch];
      }
      const float inv = static_cast<float>(1.0 / std::sqrt(var + kEps));
      inv_std_[ch] = inv;
      const float g = gamma_.value[ch], b = beta_.value[ch], mu = static_cast<float>(mean);
      for (int i = 0; i < x.n; ++i) {
        const float* p = x.channel(i, ch);
        float* xh = xhat_.channel(i, ch);
        float* q = y.channel(i, ch);
        for (std::size_t k = 0; k < x.plane(); ++k) {
          xh[k] = (p[k] - mu) * inv;
          q[k] = g * xh[k] + b;
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& dy, bool param_grads = true) {
    Tensor dx(dy.n, dy.c, dy.h, dy.w);
    const double m = static_cast<double>(dy.n) * dy.plane();
    for (int ch = 0; ch < c_; ++ch) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int i = 0; i < dy.n; ++i) {
        const float* d = dy.channel(i, ch);
        const float* xh = xhat_.channel(i, ch);
        for (std::size_t k = 0; k < dy.plane(); ++k) {
          sum_dy += d[k];
          sum_dy_xhat += static_cast<double>(d[k]) * xh[k];
        }
      }
      if (param_grads) {
        gamma_.grad[ch] += static_cast<float>(sum_dy_xhat);
        beta_.grad[ch] += static_cast<float>(sum_dy);
      }
      const float g = gamma_.value[ch], inv = inv_std_[ch];
      for (int i = 0; i < dy.n; ++i) {
        const float* d = dy.channel(i, ch);
        const float* xh = xhat_.channel(i, ch);
        float* out = dx.channel(i, ch);
        if (train_) {
          const float a = static_cast<float>(sum_dy / m), b = static_cast<float>(sum_dy_xhat / m);
          for (std::size_t k = 0; k < dy.plane(); ++k) out[k] = g * inv * (d[k] - a - xh[k] * b);
        } else {
          for (std::size_t k = 0; k < dy.plane(); ++k) out[k] = g * inv * d[k];
        }
      }
    }
    return dx;
  }

  void collect(std::vector<Param*>& ps) {
    ps.push_back(&gamma_);
    ps.push_back(&beta_);
  }
  void collect_buffers(std::vector<Buffer>& bs) {
    bs.push_back({name_ + ".running_mean", &running_mean_});
    bs.push_back({name_ + ".running_var", &running_var_});
  }
  void release() { xhat_ = Tensor(); }

 private:
  static constexpr double kMomentum = 0.1;
  static constexpr double kEps = 1e-5;
  int c_ = 0;
  Param gamma_, beta_;
  std::vector<float> running_mean_, running_var_;
  std::string name_;
  bool train_ = true;
  Tensor xhat_;
  std::vector<float> inv_std_;
};

class ReLU {
 public:
  Tensor forward(const Tensor& x) {
    Tensor y = x;
    mask_.resize(x.numel());
    for (std::size_t i = 0; i < x.numel(); ++i) {
      mask_[i] = x.data[i] > 0.0f;
      if (!mask_[i]) y.data[i] = 0.0f;
    }
    return y;
  }
  Tensor backward(const Tensor& dy) const {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.numel(); ++i)
      if (!mask_[i]) dx.data[i] = 0.0f;
    return dx;
  }

 private:
  std::vector<char> mask_;
};

class MaxPool2x2 {
 public:
  Tensor forward(const Tensor& x) {
    if (x.h % 2 || x.w % 2) throw ShapeError("maxpool: odd spatial size " + x.shape_str());
    in_shape_ = Tensor(0, x.c, x.h, x.w);
    in_shape_.n = x.n;
    Tensor y(x.n, x.c, x.h / 2, x.w / 2);
    argmax_.resize(y.numel());
    std::size_t o = 0;
    for (int i = 0; i < x.n; ++i)
      for (int ch = 0; ch < x.c; ++ch) {
        const float* p = x.channel(i, ch);
        for (int yy = 0; yy < y.h; ++yy)
          for (int xx = 0; xx < y.w; ++xx, ++o) {
            const std::size_t base = static_cast<std::size_t>(2 * yy) * x.w + 2 * xx;
            std::size_t best = base;
            for (std::size_t cand : {base + 1, base + x.w, base + x.w + 1})
              if (p[cand] > p[best]) best = cand;
            argmax_[o] = static_cast<unsigned>(best);
            y.data[o] = p[best];
          }
      }
    return y;
  }
  Tensor backward(const Tensor& dy) const {
    Tensor dx(in_shape_.n, in_shape_.c, in_shape_.h, in_shape_.w);
    std::size_t o = 0;
    for (int i = 0; i < dy.n; ++i)
      for (int ch = 0; ch < dy.c; ++ch) {
        float* p = dx.channel(i, ch);
        for (std::size_t k = 0; k < dy.plane(); ++k, ++o) p[argmax_[o]] += dy.data[o];
      }
    return dx;
  }

 private:
  Tensor in_shape_;
  std::vector<unsigned> argmax_;
};

/// Mean over each channel plane: (N,C,H,W) -> (N,C,1,1).
class GlobalAvgPool {
 public:
  Tensor forward(const Tensor& x) {
    h_ = x.h;
    w_ = x.w;
    Tensor y(x.n, x.c, 1, 1);
    for (int i = 0; i < x.n; ++i)
      for (int ch = 0; ch < x.c; ++ch) {
        const float* p = x.channel(i, ch);
        double s = 0.0;
        for (std::size_t k = 0; k < x.plane(); ++k) s += p[k];
        y.at(i, ch, 0, 0) = static_cast<float>(s / static_cast<double>(x.plane()));
      }
    return y;
  }
  Tensor backward(const Tensor& dy) const {
    Tensor dx(dy.n, dy.c, h_, w_);
    const float inv = 1.0f / static_cast<float>(h_ * w_);
    for (int i = 0; i < dy.n; ++i)
      for (int ch = 0; ch < dy.c; ++ch) {
        const float g = dy.at(i, ch, 0, 0) * inv;
        float* p = dx.channel(i, ch);
        std::fill(p, p + dx.plane(), g);
      }
    return dx;
  }

 private:
  int h_ = 0, w_ = 0;
};

/// Fully connected layer on (N,C,1,1) inputs.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng)
      : in_(in), out_(out), weight_(name + ".weight", {out, in}), bias_(name + ".bias", {out}, false) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(in));
    std::uniform_real_distribution<float> d(-bound, bound);
    for (auto& v : weight_.value) v = d(rng);
  }
  Tensor forward(const Tensor& x) {
    if (static_cast<int>(x.sample_size()) != in_) throw ShapeError(weight_.name + ": bad input " + x.shape_str());
    input_ = x;
    Tensor y(x.n, out_, 1, 1);
    CMapMat W(weight_.value.data(), out_, in_);
    MapMat Y(y.data.data(), x.n, out_);
    Y.noalias() = CMapMat(x.data.data(), x.n, in_) * W.transpose();
    for (int i = 0; i < x.n; ++i)
      for (int o = 0; o < out_; ++o) Y(i, o) += bias_.value[o];
    return y;
  }
  Tensor backward(const Tensor& dy, bool param_grads = true) {
    Tensor dx(input_.n, input_.c, input_.h, input_.w);
    CMapMat dY(dy.data.data(), dy.n, out_);
    CMapMat W(weight_.value.data(), out_, in_);
    if (param_grads) {
      MapMat(weight_.grad.data(), out_, in_).noalias() += dY.transpose() * CMapMat(input_.data.data(), input_.n, in_);
      for (int i = 0; i < dy.n; ++i)
        for (int o = 0; o < out_; ++o) bias_.grad[o] += dY(i, o);
    }
    MapMat(dx.data.data(), dy.n, in_).noalias() = dY * W;
    return dx;
  }
  void collect(std::vector<Param*>& ps) {
    ps.push_back(&weight_);
    ps.push_back(&bias_);
  }
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 private:
  int in_ = 0, out_ = 0;
  Param weight_, bias_;
  Tensor input_;
};

}  // namespace sacropipe::nn
