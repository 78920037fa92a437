#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "marss2l/error.hpp"

namespace marss2l {

/// Natural cubic spline through (x_i, y_i) on a strictly increasing grid.
class NaturalCubicSpline {
 public:
  NaturalCubicSpline() = default;
  NaturalCubicSpline(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) throw ArgumentError("spline needs >= 2 matching nodes");
    for (std::size_t i = 1; i < n; ++i)
      if (!(x_[i] > x_[i - 1])) throw ArgumentError("spline grid must be strictly increasing");
    m_.assign(n, 0.0);
    if (n == 2) return;
    // Thomas algorithm on the interior second derivatives; M_0 = M_{n-1} = 0.
    std::vector<double> c(n, 0.0), d(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      double h0 = x_[i] - x_[i - 1], h1 = x_[i + 1] - x_[i];
      double a = h0 / 6.0, b = (h0 + h1) / 3.0, cc = h1 / 6.0;
      double r = (y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0;
      double denom = b - a * c[i - 1];
      c[i] = cc / denom;
      d[i] = (r - a * d[i - 1]) / denom;
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
      m_[i] = d[i] - c[i] * m_[i + 1];
      if (i == 1) break;
    }
  }

  double operator()(double x) const {
    const std::size_t n = x_.size();
    std::size_t j = std::size_t(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin());
    j = std::clamp<std::size_t>(j, 1, n - 1) - 1;
    double h = x_[j + 1] - x_[j];
    double a = (x_[j + 1] - x) / h, b = (x - x_[j]) / h;
    return a * y_[j] + b * y_[j + 1] + ((a * a * a - a) * m_[j] + (b * b * b - b) * m_[j + 1]) * h * h / 6.0;
  }

  double front() const { return x_.front(); }
  double back() const { return x_.back(); }

 private:
  std::vector<double> x_, y_, m_;
};

/// The natural spline is linear in the node values, so evaluating it at a fixed
/// abscissa is a dot product with a weight vector over the nodes.
inline std::vector<double> spline_weights(const std::vector<double>& grid, double x) {
  std::vector<double> w(grid.size());
  std::vector<double> e(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    e[i] = 1.0;
    w[i] = NaturalCubicSpline(grid, e)(x);
    e[i] = 0.0;
  }
  return w;
}

}  // namespace marss2l
