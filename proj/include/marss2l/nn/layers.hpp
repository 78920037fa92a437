#pragma once

// Forward and backward kernels for the UNet's layers. Every backward routine
// accumulates (+=) into its gradient outputs.

#include <cmath>
#include <cstddef>
#include <vector>

#include "marss2l/nn/tensor.hpp"

namespace marss2l::nn {

/// 3x3 convolution, zero padding 1, stride 1, no bias. weight is [out][in][3][3].
template <typename T>
void conv3x3_forward(const Tensor<T>& in, const T* weight, int out_channels, Tensor<T>& out) {
  const int H = in.h, W = in.w, C = in.c;
  out.resize(in.n, out_channels, H, W);
  for (int n = 0; n < in.n; ++n)
    for (int oc = 0; oc < out_channels; ++oc) {
      T* o = out.plane(n, oc);
      for (int ic = 0; ic < C; ++ic) {
        const T* src = in.plane(n, ic);
        const T* k = weight + (std::size_t(oc) * C + ic) * 9;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const T wv = k[ky * 3 + kx];
            const int x0 = kx == 0 ? 1 : 0, x1 = kx == 2 ? W - 1 : W;
            const int y0 = ky == 0 ? 1 : 0, y1 = ky == 2 ? H - 1 : H;
            for (int y = y0; y < y1; ++y) {
              T* orow = o + std::size_t(y) * W;
              const T* irow = src + std::size_t(y + ky - 1) * W + (kx - 1);
              for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
            }
          }
      }
    }
}

template <typename T>
void conv3x3_backward(const Tensor<T>& in, const T* weight, const Tensor<T>& grad_out, Tensor<T>* grad_in,
                      T* grad_weight) {
  const int H = in.h, W = in.w, C = in.c, O = grad_out.c;
  for (int n = 0; n < in.n; ++n)
    for (int oc = 0; oc < O; ++oc) {
      const T* g = grad_out.plane(n, oc);
      for (int ic = 0; ic < C; ++ic) {
        const T* src = in.plane(n, ic);
        T* gi = grad_in ? grad_in->plane(n, ic) : nullptr;
        const T* k = weight + (std::size_t(oc) * C + ic) * 9;
        T* gk = grad_weight + (std::size_t(oc) * C + ic) * 9;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const T wv = k[ky * 3 + kx];
            const int x0 = kx == 0 ? 1 : 0, x1 = kx == 2 ? W - 1 : W;
            const int y0 = ky == 0 ? 1 : 0, y1 = ky == 2 ? H - 1 : H;
            T acc = 0;
            for (int y = y0; y < y1; ++y) {
              const T* grow = g + std::size_t(y) * W;
              const std::size_t off = std::size_t(y + ky - 1) * W + (kx - 1);
              const T* irow = src + off;
              for (int x = x0; x < x1; ++x) acc += grow[x] * irow[x];
              if (gi) {
                T* girow = gi + off;
                for (int x = x0; x < x1; ++x) girow[x] += wv * grow[x];
              }
            }
            gk[ky * 3 + kx] += acc;
          }
      }
    }
}

/// Per-channel batch statistics captured in training mode for the backward pass.
template <typename T>
struct BatchNormCache {
  std::vector<T> mean, inv_std;
  Tensor<T> xhat;
};

/// Batch norm; train mode normalises with batch statistics (biased variance) and
/// updates running statistics with the unbiased variance.
template <typename T>
void batchnorm_forward(const Tensor<T>& in, const T* gamma, const T* beta, T* running_mean, T* running_var, bool train,
                       bool update_running, double eps, double momentum, Tensor<T>& out, BatchNormCache<T>* cache) {
  out.resize(in.n, in.c, in.h, in.w);
  const std::size_t P = in.plane_size();
  const double M = double(in.n) * double(P);
  if (cache) {
    cache->mean.assign(in.c, T(0));
    cache->inv_std.assign(in.c, T(0));
    cache->xhat.resize(in.n, in.c, in.h, in.w);
  }
  for (int c = 0; c < in.c; ++c) {
    T mean, inv_std;
    if (train) {
      double s = 0.0;
      for (int n = 0; n < in.n; ++n) {
        const T* p = in.plane(n, c);
        for (std::size_t i = 0; i < P; ++i) s += p[i];
      }
      double mu = s / M, v = 0.0;
      for (int n = 0; n < in.n; ++n) {
        const T* p = in.plane(n, c);
        for (std::size_t i = 0; i < P; ++i) {
          double d = p[i] - mu;
          v += d * d;
        }
      }
      double var = v / M;
      mean = T(mu);
      inv_std = T(1.0 / std::sqrt(var + eps));
      if (update_running) {
        running_mean[c] = T((1.0 - momentum) * running_mean[c] + momentum * mu);
        double unbiased = M > 1 ? v / (M - 1.0) : var;
        running_var[c] = T((1.0 - momentum) * running_var[c] + momentum * unbiased);
      }
    } else {
      mean = running_mean[c];
      inv_std = T(1.0 / std::sqrt(double(running_var[c]) + eps));
    }
    if (cache) cache->mean[c] = mean, cache->inv_std[c] = inv_std;
    const T g = gamma[c], b = beta[c];
    for (int n = 0; n < in.n; ++n) {
      const T* p = in.plane(n, c);
      T* o = out.plane(n, c);
      T* xh = cache ? cache->xhat.plane(n, c) : nullptr;
      for (std::size_t i = 0; i < P; ++i) {
        T x = (p[i] - mean) * inv_std;
        if (xh) xh[i] = x;
        o[i] = g * x + b;
      }
    }
  }
}

/// Backward through train-mode batch norm.
template <typename T>
void batchnorm_backward(const BatchNormCache<T>& cache, const T* gamma, const Tensor<T>& grad_out, Tensor<T>& grad_in,
                        T* grad_gamma, T* grad_beta) {
  const std::size_t P = grad_out.plane_size();
  const double M = double(grad_out.n) * double(P);
  grad_in.resize(grad_out.n, grad_out.c, grad_out.h, grad_out.w);
  for (int c = 0; c < grad_out.c; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < grad_out.n; ++n) {
      const T* g = grad_out.plane(n, c);
      const T* xh = cache.xhat.plane(n, c);
      for (std::size_t i = 0; i < P; ++i) {
        sum_dy += g[i];
        sum_dy_xhat += g[i] * xh[i];
      }
    }
    grad_gamma[c] += T(sum_dy_xhat);
    grad_beta[c] += T(sum_dy);
    const double k = double(gamma[c]) * double(cache.inv_std[c]) / M;
    for (int n = 0; n < grad_out.n; ++n) {
      const T* g = grad_out.plane(n, c);
      const T* xh = cache.xhat.plane(n, c);
      T* gi = grad_in.plane(n, c);
      for (std::size_t i = 0; i < P; ++i) gi[i] = T(k * (M * g[i] - sum_dy - xh[i] * sum_dy_xhat));
    }
  }
}

template <typename T>
void relu_inplace(Tensor<T>& t) {
  for (T& v : t.data) v = v > T(0) ? v : T(0);
}

/// Zeroes gradient where the ReLU output was not positive.
template <typename T>
void relu_backward_inplace(const Tensor<T>& relu_out, Tensor<T>& grad) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(relu_out.data[i] > T(0))) grad.data[i] = T(0);
}

/// 2x2 max pool, stride 2; argmax holds the flat index (within the input plane) of each winner.
template <typename T>
void maxpool2_forward(const Tensor<T>& in, Tensor<T>& out, std::vector<std::uint32_t>* argmax) {
  const int OH = in.h / 2, OW = in.w / 2;
  out.resize(in.n, in.c, OH, OW);
  if (argmax) argmax->assign(out.size(), 0);
  std::size_t k = 0;
  for (int n = 0; n < in.n; ++n)
    for (int c = 0; c < in.c; ++c) {
      const T* p = in.plane(n, c);
      T* o = out.plane(n, c);
      for (int y = 0; y < OH; ++y)
        for (int x = 0; x < OW; ++x, ++k) {
          std::uint32_t best = std::uint32_t((2 * y) * in.w + 2 * x);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              std::uint32_t idx = std::uint32_t((2 * y + dy) * in.w + 2 * x + dx);
              if (p[idx] > p[best]) best = idx;
            }
          o[y * OW + x] = p[best];
          if (argmax) (*argmax)[k] = best;
        }
    }
}

template <typename T>
void maxpool2_backward(const std::vector<std::uint32_t>& argmax, const Tensor<T>& grad_out, Tensor<T>& grad_in) {
  std::size_t k = 0;
  for (int n = 0; n < grad_out.n; ++n)
    for (int c = 0; c < grad_out.c; ++c) {
      const T* g = grad_out.plane(n, c);
      T* gi = grad_in.plane(n, c);
      for (std::size_t i = 0; i < grad_out.plane_size(); ++i, ++k) gi[argmax[k]] += g[i];
    }
}

/// Transposed convolution, kernel 2, stride 2. weight is [in][out][2][2].
template <typename T>
void upconv2_forward(const Tensor<T>& in, const T* weight, const T* bias, int out_channels, Tensor<T>& out) {
  const int OH = in.h * 2, OW = in.w * 2;
  out.resize(in.n, out_channels, OH, OW);
  for (int n = 0; n < in.n; ++n)
    for (int oc = 0; oc < out_channels; ++oc) {
      T* o = out.plane(n, oc);
      for (std::size_t i = 0; i < out.plane_size(); ++i) o[i] = bias[oc];
      for (int ic = 0; ic < in.c; ++ic) {
        const T* p = in.plane(n, ic);
        const T* k = weight + (std::size_t(ic) * out_channels + oc) * 4;
        for (int y = 0; y < in.h; ++y) {
          T* r0 = o + std::size_t(2 * y) * OW;
          T* r1 = r0 + OW;
          const T* src = p + std::size_t(y) * in.w;
          for (int x = 0; x < in.w; ++x) {
            const T v = src[x];
            r0[2 * x] += k[0] * v;
            r0[2 * x + 1] += k[1] * v;
            r1[2 * x] += k[2] * v;
            r1[2 * x + 1] += k[3] * v;
          }
        }
      }
    }
}

template <typename T>
void upconv2_backward(const Tensor<T>& in, const T* weight, const Tensor<T>& grad_out, Tensor<T>& grad_in,
                      T* grad_weight, T* grad_bias) {
  const int O = grad_out.c, OW = grad_out.w;
  grad_in.resize(in.n, in.c, in.h, in.w);
  for (int n = 0; n < in.n; ++n)
    for (int oc = 0; oc < O; ++oc) {
      const T* g = grad_out.plane(n, oc);
      T sb = 0;
      for (std::size_t i = 0; i < grad_out.plane_size(); ++i) sb += g[i];
      grad_bias[oc] += sb;
      for (int ic = 0; ic < in.c; ++ic) {
        const T* p = in.plane(n, ic);
        T* gi = grad_in.plane(n, ic);
        const T* k = weight + (std::size_t(ic) * O + oc) * 4;
        T* gk = grad_weight + (std::size_t(ic) * O + oc) * 4;
        T a0 = 0, a1 = 0, a2 = 0, a3 = 0;
        for (int y = 0; y < in.h; ++y) {
          const T* g0 = g + std::size_t(2 * y) * OW;
          const T* g1 = g0 + OW;
          const T* src = p + std::size_t(y) * in.w;
          T* gir = gi + std::size_t(y) * in.w;
          for (int x = 0; x < in.w; ++x) {
            const T v = src[x];
            a0 += g0[2 * x] * v;
            a1 += g0[2 * x + 1] * v;
            a2 += g1[2 * x] * v;
            a3 += g1[2 * x + 1] * v;
            gir[x] += k[0] * g0[2 * x] + k[1] * g0[2 * x + 1] + k[2] * g1[2 * x] + k[3] * g1[2 * x + 1];
          }
        }
        gk[0] += a0, gk[1] += a1, gk[2] += a2, gk[3] += a3;
      }
    }
}

/// Channel concatenation [a, b].
template <typename T>
void concat_channels(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) throw ArgumentError("concat shape mismatch");
  out.resize(a.n, a.c + b.c, a.h, a.w);
  const std::size_t P = a.plane_size();
  for (int n = 0; n < a.n; ++n) {
    std::copy_n(a.plane(n, 0), std::size_t(a.c) * P, out.plane(n, 0));
    std::copy_n(b.plane(n, 0), std::size_t(b.c) * P, out.plane(n, a.c));
  }
}

template <typename T>
void split_channels(const Tensor<T>& grad, int first_channels, Tensor<T>& ga, Tensor<T>& gb) {
  const std::size_t P = grad.plane_size();
  ga.resize(grad.n, first_channels, grad.h, grad.w);
  gb.resize(grad.n, grad.c - first_channels, grad.h, grad.w);
  for (int n = 0; n < grad.n; ++n) {
    std::copy_n(grad.plane(n, 0), std::size_t(first_channels) * P, ga.plane(n, 0));
    std::copy_n(grad.plane(n, first_channels), std::size_t(grad.c - first_channels) * P, gb.plane(n, 0));
  }
}

/// 1x1 convolution to a single logit plane.
template <typename T>
void head_forward(const Tensor<T>& in, const T* weight, const T* bias, Tensor<T>& out) {
  out.resize(in.n, 1, in.h, in.w);
  const std::size_t P = in.plane_size();
  for (int n = 0; n < in.n; ++n) {
    T* o = out.plane(n, 0);
    for (std::size_t i = 0; i < P; ++i) o[i] = bias[0];
    for (int c = 0; c < in.c; ++c) {
      const T* p = in.plane(n, c);
      const T wv = weight[c];
      for (std::size_t i = 0; i < P; ++i) o[i] += wv * p[i];
    }
  }
}

template <typename T>
void head_backward(const Tensor<T>& in, const T* weight, const Tensor<T>& grad_out, Tensor<T>& grad_in, T* grad_weight,
                   T* grad_bias) {
  grad_in.resize(in.n, in.c, in.h, in.w);
  const std::size_t P = in.plane_size();
  for (int n = 0; n < in.n; ++n) {
    const T* g = grad_out.plane(n, 0);
    T sb = 0;
    for (std::size_t i = 0; i < P; ++i) sb += g[i];
    grad_bias[0] += sb;
    for (int c = 0; c < in.c; ++c) {
      const T* p = in.plane(n, c);
      T* gi = grad_in.plane(n, c);
      T acc = 0;
      const T wv = weight[c];
      for (std::size_t i = 0; i < P; ++i) {
        acc += g[i] * p[i];
        gi[i] = wv * g[i];
      }
      grad_weight[c] += acc;
    }
  }
}

}  // namespace marss2l::nn
