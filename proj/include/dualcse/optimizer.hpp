#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>

#include "dualcse/autograd.hpp"
#include "dualcse/error.hpp"
#include "dualcse/transformer.hpp"

namespace dualcse {

// Linear warmup over the first `warmup_fraction` of steps, then linear decay to zero.
class WarmupLinearSchedule {
 public:
  WarmupLinearSchedule(double peak_lr, std::size_t total_steps, double warmup_fraction = 0.1)
      : peak_(peak_lr), total_(total_steps), warmup_(static_cast<std::size_t>(std::ceil(warmup_fraction * total_steps))) {
    if (!(peak_lr > 0)) throw ConfigError("learning rate must be positive");
    if (total_steps == 0) throw ConfigError("schedule needs at least one step");
  }

  // Learning rate for 0-based step index.
  double at(std::size_t step) const {
    if (warmup_ > 0 && step < warmup_) return peak_ * static_cast<double>(step + 1) / static_cast<double>(warmup_);
    if (total_ <= warmup_) return peak_;
    const double remaining = static_cast<double>(total_ - step) / static_cast<double>(total_ - warmup_);
    return peak_ * std::max(0.0, remaining);
  }

  std::size_t warmup_steps() const { return warmup_; }

 private:
  double peak_;
  std::size_t total_;
  std::size_t warmup_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW style)
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Applies one update from the gradients currently stored in `params`.
  void step(ParamStore& params, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : params) {
      auto& st = state_[name];
      if (st.m.size() == 0) {
        st.m = ad::Matrix::Zero(p.value.rows(), p.value.cols());
        st.v = ad::Matrix::Zero(p.value.rows(), p.value.cols());
      }
      st.m = cfg_.beta1 * st.m + (1.0 - cfg_.beta1) * p.grad;
      st.v = cfg_.beta2 * st.v + (1.0 - cfg_.beta2) * p.grad.cwiseAbs2();
      const ad::Matrix mhat = st.m / bc1;
      const ad::Matrix vhat = st.v / bc2;
      if (cfg_.weight_decay != 0.0) p.value *= (1.0 - lr * cfg_.weight_decay);
      p.value.array() -= lr * mhat.array() / (vhat.array().sqrt() + cfg_.eps);
    }
  }

  std::size_t steps() const { return t_; }

 private:
  struct Moments {
    ad::Matrix m;
    ad::Matrix v;
  };
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace dualcse
