#pragma once

#include <algorithm>
#include <cmath>
#include <type_traits>
#include <vector>

#include "marss2l/nn/tensor.hpp"

namespace marss2l::nn {

inline constexpr double kProbabilityClamp = 1e-7;

/// Per-pixel weights: 1 on negatives, 1 + alpha * delta_ch4 on positives.
template <typename T>
Tensor<T> pixel_weights(const Tensor<T>& target, const Tensor<T>& delta_ch4, double alpha) {
  Tensor<T> w(target.n, 1, target.h, target.w, T(1));
  for (std::size_t i = 0; i < w.size(); ++i)
    if (target.data[i] > T(0.5)) w.data[i] = T(1.0 + alpha * std::max(0.0, double(delta_ch4.data[i])));
  return w;
}

/// Mean weighted binary cross-entropy of sigmoid(logits); fills grad with dL/dlogit.
/// Where the probability clamp is active the gradient is zero.
template <typename T>
double weighted_bce(const Tensor<T>& logits, const Tensor<T>& target, const Tensor<T>& weight,
                    std::type_identity_t<Tensor<T>>* grad) {
  const double M = double(logits.size());
  if (grad) grad->resize(logits.n, logits.c, logits.h, logits.w);
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits.data[i];
    const double p = 1.0 / (1.0 + std::exp(-z));
    const double y = target.data[i], w = weight.data[i];
    const double pc = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
    loss -= w * (y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
    if (grad) grad->data[i] = pc == p ? T(w * (p - y) / M) : T(0);
  }
  return loss / M;
}

}  // namespace marss2l::nn
