#pragma once

// Segmentation (soft Dice + cross-entropy) and classification (label-smoothed
// cross-entropy) losses with analytic gradients w.r.t. the logits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <json.hpp>

#include "sacropipe/config.hpp"
#include "sacropipe/errors.hpp"

namespace sacropipe::nn {

struct LossWeights {
  double w_dice = 1.0;
  double w_ce = 1.0;
  double dice_smooth = 1.0;
  double label_smooth_eps = 0.1;

  void validate() const {
    if (w_dice < 0 || w_ce < 0 || w_dice + w_ce <= 0) throw ConfigError("loss weights must be >= 0 with positive sum");
    if (dice_smooth <= 0) throw ConfigError("dice_smooth must be > 0");
    if (label_smooth_eps < 0 || label_smooth_eps >= 1) throw ConfigError("label_smooth_eps must be in [0,1)");
  }
};

inline void to_json(nlohmann::json& j, const LossWeights& w) {
  j = nlohmann::json{{"w_dice", w.w_dice},
                     {"w_ce", w.w_ce},
                     {"dice_smooth", w.dice_smooth},
                     {"label_smooth_eps", w.label_smooth_eps}};
}
inline void from_json(const nlohmann::json& j, LossWeights& w) {
  check_keys(j, {"w_dice", "w_ce", "dice_smooth", "label_smooth_eps"}, "loss config");
  LossWeights d;
  w.w_dice = j.value("w_dice", d.w_dice);
  w.w_ce = j.value("w_ce", d.w_ce);
  w.dice_smooth = j.value("dice_smooth", d.dice_smooth);
  w.label_smooth_eps = j.value("label_smooth_eps", d.label_smooth_eps);
}

/// Softmax over the channel axis of an (N,K,P) array, P = pixels per plane.
template <class T>
std::vector<T> softmax_channels(std::span<const T> logits, int n, int k, std::size_t plane) {
  std::vector<T> p(logits.size());
  for (int i = 0; i < n; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * k * plane;
    for (std::size_t q = 0; q < plane; ++q) {
      T mx = logits[base + q];
      for (int c = 1; c < k; ++c) mx = std::max(mx, logits[base + c * plane + q]);
      T s = 0;
      for (int c = 0; c < k; ++c) {
        const T e = std::exp(logits[base + c * plane + q] - mx);
        p[base + c * plane + q] = e;
        s += e;
      }
      for (int c = 0; c < k; ++c) p[base + c * plane + q] /= s;
    }
  }
  return p;
}

template <class T>
struct LossResult {
  T value = 0;
  std::vector<T> grad;  // d value / d logits, same layout as the logits
};

/// w_dice * (1 - mean_{sample,class} soft Dice) + w_ce * mean pixel cross-entropy.
/// logits: (N,K,H*W) row-major; target: (N,H*W) labels in [0,K).
template <class T>
LossResult<T> dice_ce_loss(std::span<const T> logits, std::span<const std::uint8_t> target, int n, int k,
                           std::size_t plane, const LossWeights& w) {
  if (logits.size() != static_cast<std::size_t>(n) * k * plane || target.size() != static_cast<std::size_t>(n) * plane)
    throw ShapeError("dice_ce_loss: logits/target size mismatch");
  for (auto t : target)
    if (t >= k) throw ConfigError("dice_ce_loss: target label out of range");
  const auto p = softmax_channels(logits, n, k, plane);
  LossResult<T> out;
  out.grad.assign(logits.size(), T(0));
  const T s = static_cast<T>(w.dice_smooth);
  const T npix = static_cast<T>(n) * static_cast<T>(plane);
  const T nterms = static_cast<T>(n) * k;

  // dL/dp accumulated first, then pushed through the softmax Jacobian.
  std::vector<T> dp(logits.size(), T(0));
  T dice_mean = 0, ce = 0;
  for (int i = 0; i < n; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * k * plane;
    const std::uint8_t* tg = target.data() + static_cast<std::size_t>(i) * plane;
    for (int c = 0; c < k; ++c) {
      T inter = 0, psum = 0, gsum = 0;
      for (std::size_t q = 0; q < plane; ++q) {
        const T pv = p[base + c * plane + q];
        const T g = tg[q] == c ? T(1) : T(0);
        inter += pv * g;
        psum += pv;
        gsum += g;
      }
      const T num = 2 * inter + s, den = psum + gsum + s;
      dice_mean += num / den;
      // d(-w_dice * dice / nterms)/dp
      const T coef = -static_cast<T>(w.w_dice) / nterms;
      for (std::size_t q = 0; q < plane; ++q) {
        const T g = tg[q] == c ? T(1) : T(0);
        dp[base + c * plane + q] += coef * (2 * g * den - num) / (den * den);
      }
    }
  }
  dice_mean /= nterms;

  for (int i = 0; i < n; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * k * plane;
    const std::uint8_t* tg = target.data() + static_cast<std::size_t>(i) * plane;
    for (std::size_t q = 0; q < plane; ++q) {
      const std::size_t idx = base + tg[q] * plane + q;
      ce -= std::log(std::max(p[idx], std::numeric_limits<T>::min()));
      // Cross-entropy gradient w.r.t. logits is (p - onehot) / npix, added after the Jacobian below.
    }
  }
  ce /= npix;
  out.value = static_cast<T>(w.w_dice) * (1 - dice_mean) + static_cast<T>(w.w_ce) * ce;

  for (int i = 0; i < n; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * k * plane;
    const std::uint8_t* tg = target.data() + static_cast<std::size_t>(i) * plane;
    for (std::size_t q = 0; q < plane; ++q) {
      T dot = 0;
      for (int c = 0; c < k; ++c) dot += dp[base + c * plane + q] * p[base + c * plane + q];
      for (int c = 0; c < k; ++c) {
        const std::size_t idx = base + c * plane + q;
        T g = p[idx] * (dp[idx] - dot);
        g += static_cast<T>(w.w_ce) * (p[idx] - (tg[q] == c ? T(1) : T(0))) / npix;
        out.grad[idx] = g;
      }
    }
  }
  return out;
}

/// Mean over the batch of -sum_c q_c log softmax(z)_c with
/// q = (1 - eps) * target_dist + eps / K. `target_dist` is (N,K): one-hot rows
/// or, under mixup, convex combinations of two one-hot rows.
template <class T>
LossResult<T> soft_target_ce(std::span<const T> logits, std::span<const T> target_dist, int n, int k, double eps) {
  if (eps < 0 || eps >= 1) throw ConfigError("label smoothing eps must be in [0,1)");
  if (logits.size() != static_cast<std::size_t>(n) * k || target_dist.size() != logits.size())
    throw ShapeError("ce: logits/target size mismatch");
  LossResult<T> out;
  out.grad.assign(logits.size(), T(0));
  const T e = static_cast<T>(eps);
  for (int i = 0; i < n; ++i) {
    const T* z = logits.data() + static_cast<std::size_t>(i) * k;
    T mx = z[0];
    for (int c = 1; c < k; ++c) mx = std::max(mx, z[c]);
    T s = 0;
    for (int c = 0; c < k; ++c) s += std::exp(z[c] - mx);
    const T lse = mx + std::log(s);
    for (int c = 0; c < k; ++c) {
      const T q = (1 - e) * target_dist[static_cast<std::size_t>(i) * k + c] + e / k;
      const T logp = z[c] - lse;
      out.value -= q * logp;
      out.grad[static_cast<std::size_t>(i) * k + c] = (std::exp(logp) - q) / n;
    }
  }
  out.value /= n;
  return out;
}

template <class T>
LossResult<T> ce_label_smoothing(std::span<const T> logits, std::span<const int> targets, int k, double eps) {
  const int n = static_cast<int>(targets.size());
  std::vector<T> dist(static_cast<std::size_t>(n) * k, T(0));
  for (int i = 0; i < n; ++i) {
    if (targets[i] < 0 || targets[i] >= k) throw ConfigError("ce: target class out of range");
    dist[static_cast<std::size_t>(i) * k + targets[i]] = 1;
  }
  return soft_target_ce<T>(logits, dist, n, k, eps);
}

/// Entropy of the smoothed one-hot target: the lower bound of ce_label_smoothing.
inline double smoothed_target_entropy(int k, double eps) {
  const double hi = 1 - eps + eps / k, lo = eps / k;
  double h = hi > 0 ? -hi * std::log(hi) : 0.0;
  if (lo > 0) h -= (k - 1) * lo * std::log(lo);
  return h;
}

}  // namespace sacropipe::nn
