#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "marss2l/error.hpp"

namespace marss2l::nn {

/// Dense NCHW activation tensor.
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_), data(std::size_t(n_) * c_ * h_ * w_, fill) {}

  std::size_t plane_size() const { return std::size_t(h) * w; }
  std::size_t size() const { return data.size(); }
  T* plane(int ni, int ci) { return data.data() + (std::size_t(ni) * c + ci) * plane_size(); }
  const T* plane(int ni, int ci) const { return data.data() + (std::size_t(ni) * c + ci) * plane_size(); }
  T& at(int ni, int ci, int y, int x) { return plane(ni, ci)[std::size_t(y) * w + x]; }
  const T& at(int ni, int ci, int y, int x) const { return plane(ni, ci)[std::size_t(y) * w + x]; }

  void resize(int n_, int c_, int h_, int w_) {
    n = n_, c = c_, h = h_, w = w_;
    data.assign(std::size_t(n_) * c_ * h_ * w_, T(0));
  }
  void zero() { std::fill(data.begin(), data.end(), T(0)); }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

}  // namespace marss2l::nn
