#pragma once

#include <cmath>
#include <vector>

#include "marss2l/nn/unet.hpp"

namespace marss2l::nn {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-6;  // decoupled
};

/// Adam with decoupled weight decay; running statistics are never touched.
template <typename T>
class Adam {
 public:
  Adam(const ModelParams<T>& p, AdamConfig cfg = {}) : cfg_(cfg), m_(p.values.size(), 0.0), v_(p.values.size(), 0.0) {
    for (const auto& t : p.table)
      if (t.trainable) ranges_.push_back({t.offset, t.offset + t.count});
  }

  void step(ModelParams<T>& p, const std::vector<T>& grad) {
    ++t_;
    const double b1t = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double b2t = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (auto [lo, hi] : ranges_)
      for (std::size_t i = lo; i < hi; ++i) {
        const double g = grad[i];
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
        double x = double(p.values[i]) * (1.0 - cfg_.lr * cfg_.weight_decay);
        x -= cfg_.lr * (m_[i] / b1t) / (std::sqrt(v_[i] / b2t) + cfg_.eps);
        p.values[i] = T(x);
      }
  }
  long steps() const { return t_; }
  AdamConfig& config() { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  std::vector<std::pair<std::size_t, std::size_t>> ranges_;
  long t_ = 0;
};

}  // namespace marss2l::nn
