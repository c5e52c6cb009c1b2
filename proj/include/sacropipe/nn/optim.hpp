#pragma once

// AdamW, the one-cycle learning-rate schedule and per-group learning rates.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <json.hpp>

#include "sacropipe/errors.hpp"
#include "sacropipe/nn/tensor.hpp"

namespace sacropipe::nn {

struct OneCycleConfig {
  double max_lr = 1e-3;
  long total_steps = 100;
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;

  void validate() const {
    if (max_lr <= 0) throw ConfigError("one-cycle max_lr must be > 0");
    if (total_steps < 1) throw ConfigError("one-cycle total_steps must be >= 1");
    if (!(pct_start > 0 && pct_start < 1)) throw ConfigError("one-cycle pct_start must be in (0,1)");
    if (div_factor <= 1 || final_div_factor <= 1) throw ConfigError("one-cycle factors must be > 1");
  }
  double initial_lr() const { return max_lr / div_factor; }
  double final_lr() const { return max_lr / final_div_factor; }
  double peak_step() const { return pct_start * static_cast<double>(total_steps); }
};

inline void to_json(nlohmann::json& j, const OneCycleConfig& c) {
  j = nlohmann::json{{"max_lr", c.max_lr},
                     {"total_steps", c.total_steps},
                     {"pct_start", c.pct_start},
                     {"div_factor", c.div_factor},
                     {"final_div_factor", c.final_div_factor}};
}

/// Cosine interpolation from a (t = 0) to b (t = 1); exact at both ends.
inline double cosine_interp(double a, double b, double t) {
  const double c = std::cos(std::numbers::pi * t);
  return a * (1 + c) / 2 + b * (1 - c) / 2;
}

/// Learning rate at `step` in [0, total_steps]: cosine warm-up to max_lr at
/// pct_start * total_steps, then cosine anneal to max_lr / final_div_factor.
inline double one_cycle_lr(double step, const OneCycleConfig& cfg) {
  cfg.validate();
  if (!(step >= 0 && step <= static_cast<double>(cfg.total_steps)))
    throw ConfigError("one-cycle step " + std::to_string(step) + " outside [0, " + std::to_string(cfg.total_steps) +
                      "]");
  const double peak = cfg.peak_step();
  if (step <= peak) return cosine_interp(cfg.initial_lr(), cfg.max_lr, step / peak);
  return cosine_interp(cfg.max_lr, cfg.final_lr(), (step - peak) / (static_cast<double>(cfg.total_steps) - peak));
}

/// head_lr / rho^(G-1-g) for g = 0 (earliest layers) .. G-1 (head).
inline std::vector<double> discriminative_lrs(double head_lr, int groups, double rho) {
  if (groups < 1) throw ConfigError("discriminative_lrs: groups must be >= 1");
  if (rho < 1) throw ConfigError("discriminative_lrs: rho must be >= 1");
  std::vector<double> lrs(static_cast<std::size_t>(groups));
  for (int g = 0; g < groups; ++g) lrs[g] = head_lr / std::pow(rho, groups - 1 - g);
  return lrs;
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Adam with decoupled weight decay. Frozen (non-trainable) parameters keep
/// their moments untouched.
class AdamW {
 public:
  AdamW(std::vector<Param*> params, AdamWConfig cfg = {}) : params_(std::move(params)), cfg_(cfg) {
    for (Param* p : params_) {
      m_.emplace_back(p->size(), 0.0f);
      v_.emplace_back(p->size(), 0.0f);
    }
    steps_.assign(params_.size(), 0);
  }

  /// lrs[g] is the learning rate of parameter group g.
  void step(const std::vector<double>& lrs) {
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Param& p = *params_[k];
      if (!p.trainable) continue;
      const double lr = lrs.empty() ? 0.0 : lrs[std::min<std::size_t>(static_cast<std::size_t>(p.group), lrs.size() - 1)];
      const long t = ++steps_[k];
      const double bc1 = 1 - std::pow(cfg_.beta1, static_cast<double>(t));
      const double bc2 = 1 - std::pow(cfg_.beta2, static_cast<double>(t));
      const float b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
      const float step_size = static_cast<float>(lr / bc1);
      const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
      const float eps = static_cast<float>(cfg_.eps);
      const float decay = p.decay ? static_cast<float>(1.0 - lr * cfg_.weight_decay) : 1.0f;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const float g = p.grad[i];
        m[i] = b1 * m[i] + (1 - b1) * g;
        v[i] = b2 * v[i] + (1 - b2) * g * g;
        p.value[i] = p.value[i] * decay - step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
      }
    }
  }

  void zero_grad() {
    for (Param* p : params_) p->zero_grad();
  }

 private:
  std::vector<Param*> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<float>> m_, v_;
  std::vector<long> steps_;
};

}  // namespace sacropipe::nn
