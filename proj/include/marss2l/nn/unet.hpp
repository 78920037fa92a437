#pragma once

// UNet with `depth` encoder blocks (conv3x3 -> BN -> ReLU -> maxpool 2x2) and
// `depth` decoder blocks (upconv 2x2/2 -> concat skip -> conv3x3 -> BN -> ReLU ->
// conv3x3 -> BN -> ReLU), closed by a 1x1 conv to one logit plane. Convolutions
// feeding a batch norm carry no bias. All parameters live in one flat vector
// addressed through a table of named tensors.

#include <cmath>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include "marss2l/nn/layers.hpp"
#include "marss2l/random.hpp"

namespace marss2l::nn {

inline constexpr int kInputChannels = 16;

struct UNetConfig {
  int in_channels = kInputChannels;
  int depth = 4;
  std::vector<int> widths = {16, 32, 64, 128};  // per encoder level
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  static UNetConfig with_base_width(int base, int depth = 4) {
    UNetConfig c;
    c.depth = depth;
    c.widths.clear();
    for (int i = 0; i < depth; ++i) c.widths.push_back(base << i);
    return c;
  }
  int divisor() const { return 1 << depth; }
  bool operator==(const UNetConfig&) const = default;
};

struct TensorInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t count = 0;
  bool trainable = true;
};

template <typename T>
struct ModelParams {
  UNetConfig config;
  std::vector<TensorInfo> table;
  std::vector<T> values;

  const TensorInfo& info(const std::string& name) const {
    for (const auto& t : table)
      if (t.name == name) return t;
    throw ArgumentError("unknown tensor " + name);
  }
  T* ptr(const std::string& name) { return values.data() + info(name).offset; }
  const T* ptr(const std::string& name) const { return values.data() + info(name).offset; }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out{config, table, std::vector<U>(values.begin(), values.end())};
    return out;
  }
};

/// Parameter layout with zero-filled values (BN gamma and running variance set to 1).
template <typename T>
ModelParams<T> make_params(const UNetConfig& cfg) {
  if (cfg.depth < 1 || int(cfg.widths.size()) != cfg.depth) throw ArgumentError("UNet widths must match depth");
  if (cfg.in_channels != kInputChannels) throw ArgumentError("the detector consumes exactly 16 input channels");
  ModelParams<T> p;
  p.config = cfg;
  std::size_t off = 0;
  auto add = [&](std::string name, std::vector<int> shape, bool trainable = true) {
    std::size_t n = 1;
    for (int s : shape) n *= std::size_t(s);
    p.table.push_back({std::move(name), std::move(shape), off, n, trainable});
    off += n;
  };
  auto add_bn = [&](const std::string& prefix, int ch) {
    add(prefix + ".gamma", {ch});
    add(prefix + ".beta", {ch});
    add(prefix + ".running_mean", {ch}, false);
    add(prefix + ".running_var", {ch}, false);
  };
  int in = cfg.in_channels;
  for (int i = 0; i < cfg.depth; ++i) {
    std::string e = "enc" + std::to_string(i);
    add(e + ".conv.weight", {cfg.widths[i], in, 3, 3});
    add_bn(e + ".bn", cfg.widths[i]);
    in = cfg.widths[i];
  }
  for (int j = 0; j < cfg.depth; ++j) {
    int level = cfg.depth - 1 - j;
    int out = cfg.widths[level];
    std::string d = "dec" + std::to_string(j);
    add(d + ".up.weight", {in, out, 2, 2});
    add(d + ".up.bias", {out});
    add(d + ".conv1.weight", {out, 2 * out, 3, 3});
    add_bn(d + ".bn1", out);
    add(d + ".conv2.weight", {out, out, 3, 3});
    add_bn(d + ".bn2", out);
    in = out;
  }
  add("head.weight", {1, in, 1, 1});
  add("head.bias", {1});
  p.values.assign(off, T(0));
  for (const auto& t : p.table)
    if (t.name.ends_with(".gamma") || t.name.ends_with(".running_var"))
      std::fill_n(p.values.begin() + std::ptrdiff_t(t.offset), t.count, T(1));
  return p;
}

/// He-normal initialisation of convolution weights from a seed.
template <typename T>
ModelParams<T> init_params(const UNetConfig& cfg, std::uint64_t seed) {
  ModelParams<T> p = make_params<T>(cfg);
  Rng rng(seed);
  for (const auto& t : p.table) {
    if (!t.name.ends_with(".weight")) continue;
    int fan_in = t.name.find(".up.") != std::string::npos ? t.shape[0] * 4 : t.shape[1] * t.shape[2] * t.shape[3];
    double sd = std::sqrt(2.0 / double(fan_in));
    if (t.name == "head.weight") sd = std::sqrt(1.0 / double(fan_in));
    for (std::size_t i = 0; i < t.count; ++i) p.values[t.offset + i] = T(normal(rng, 0.0, sd));
  }
  return p;
}

enum class Mode { train, eval };

/// Activations recorded by a train-mode forward pass.
template <typename T>
struct ForwardCache {
  struct Enc {
    Tensor<T> input, conv, act;  // act = ReLU(BN(conv)), the skip tensor
    BatchNormCache<T> bn;
    std::vector<std::uint32_t> argmax;
  };
  struct Dec {
    Tensor<T> input, up, cat, conv1, act1, conv2, act2;
    BatchNormCache<T> bn1, bn2;
  };
  std::vector<Enc> enc;
  std::vector<Dec> dec;
  Tensor<T> head_in, logits;
};

template <typename T>
void check_input(const UNetConfig& cfg, const Tensor<T>& x) {
  if (x.c != cfg.in_channels) throw ArgumentError("input must have 16 channels");
  if (x.h <= 0 || x.w <= 0 || x.h % cfg.divisor() || x.w % cfg.divisor())
    throw ArgumentError("input height and width must be divisible by " + std::to_string(cfg.divisor()));
}

/// Logits for a batch. In train mode batch statistics normalise each BN layer
/// (running statistics updated when `update_running`), and `cache` receives the
/// activations needed by backward.
template <typename T>
Tensor<T> forward_logits(ModelParams<T>& p, const Tensor<T>& x, Mode mode, std::type_identity_t<ForwardCache<T>>* cache,
                         bool update_running = true) {
  const UNetConfig& cfg = p.config;
  check_input(cfg, x);
  const bool train = mode == Mode::train;
  ForwardCache<T> local;
  ForwardCache<T>& c = cache ? *cache : local;
  c.enc.resize(cfg.depth);
  c.dec.resize(cfg.depth);
  auto bn = [&](const std::string& prefix, const Tensor<T>& in, Tensor<T>& out, BatchNormCache<T>* bc) {
    batchnorm_forward(in, p.ptr(prefix + ".gamma"), p.ptr(prefix + ".beta"), p.ptr(prefix + ".running_mean"),
                      p.ptr(prefix + ".running_var"), train, train && update_running, cfg.bn_eps, cfg.bn_momentum,
                      out, bc);
    relu_inplace(out);
  };
  Tensor<T> cur = x;
  for (int i = 0; i < cfg.depth; ++i) {
    auto& e = c.enc[i];
    std::string name = "enc" + std::to_string(i);
    e.input = std::move(cur);
    conv3x3_forward(e.input, p.ptr(name + ".conv.weight"), cfg.widths[i], e.conv);
    bn(name + ".bn", e.conv, e.act, train ? &e.bn : nullptr);
    maxpool2_forward(e.act, cur, train ? &e.argmax : nullptr);
  }
  for (int j = 0; j < cfg.depth; ++j) {
    auto& d = c.dec[j];
    int level = cfg.depth - 1 - j;
    int out = cfg.widths[level];
    std::string name = "dec" + std::to_string(j);
    d.input = std::move(cur);
    upconv2_forward(d.input, p.ptr(name + ".up.weight"), p.ptr(name + ".up.bias"), out, d.up);
    concat_channels(d.up, c.enc[level].act, d.cat);
    conv3x3_forward(d.cat, p.ptr(name + ".conv1.weight"), out, d.conv1);
    bn(name + ".bn1", d.conv1, d.act1, train ? &d.bn1 : nullptr);
    conv3x3_forward(d.act1, p.ptr(name + ".conv2.weight"), out, d.conv2);
    bn(name + ".bn2", d.conv2, d.act2, train ? &d.bn2 : nullptr);
    cur = d.act2;
  }
  c.head_in = std::move(cur);
  head_forward(c.head_in, p.ptr("head.weight"), p.ptr("head.bias"), c.logits);
  return c.logits;
}

/// Eval-mode probabilities; the parameters are only read.
template <typename T>
Tensor<T> predict_probabilities(const ModelParams<T>& p, const Tensor<T>& x) {
  ModelParams<T>& mp = const_cast<ModelParams<T>&>(p);  // eval mode never writes running stats
  Tensor<T> logits = forward_logits(mp, x, Mode::eval, nullptr, false);
  for (T& v : logits.data) v = T(1) / (T(1) + std::exp(-v));
  return logits;
}

/// Accumulates parameter gradients (same layout as p.values) given dLoss/dlogits.
template <typename T>
void backward(const ModelParams<T>& p, const ForwardCache<T>& c, const Tensor<T>& grad_logits, std::vector<T>& grad) {
  const UNetConfig& cfg = p.config;
  if (grad.size() != p.values.size()) grad.assign(p.values.size(), T(0));
  auto g = [&](const std::string& name) { return grad.data() + p.info(name).offset; };
  Tensor<T> gcur;
  head_backward(c.head_in, p.ptr("head.weight"), grad_logits, gcur, g("head.weight"), g("head.bias"));
  std::vector<Tensor<T>> skip_grad(cfg.depth);
  for (int j = cfg.depth - 1; j >= 0; --j) {
    const auto& d = c.dec[j];
    int level = cfg.depth - 1 - j;
    std::string name = "dec" + std::to_string(j);
    Tensor<T> tmp;
    relu_backward_inplace(d.act2, gcur);
    batchnorm_backward(d.bn2, p.ptr(name + ".bn2.gamma"), gcur, tmp, g(name + ".bn2.gamma"), g(name + ".bn2.beta"));
    Tensor<T> g_act1(d.act1.n, d.act1.c, d.act1.h, d.act1.w);
    conv3x3_backward(d.act1, p.ptr(name + ".conv2.weight"), tmp, &g_act1, g(name + ".conv2.weight"));
    relu_backward_inplace(d.act1, g_act1);
    batchnorm_backward(d.bn1, p.ptr(name + ".bn1.gamma"), g_act1, tmp, g(name + ".bn1.gamma"), g(name + ".bn1.beta"));
    Tensor<T> g_cat(d.cat.n, d.cat.c, d.cat.h, d.cat.w);
    conv3x3_backward(d.cat, p.ptr(name + ".conv1.weight"), tmp, &g_cat, g(name + ".conv1.weight"));
    Tensor<T> g_up;
    split_channels(g_cat, d.up.c, g_up, skip_grad[level]);
    upconv2_backward(d.input, p.ptr(name + ".up.weight"), g_up, gcur, g(name + ".up.weight"), g(name + ".up.bias"));
  }
  for (int i = cfg.depth - 1; i >= 0; --i) {
    const auto& e = c.enc[i];
    std::string name = "enc" + std::to_string(i);
    Tensor<T> g_act = skip_grad[i];
    maxpool2_backward(e.argmax, gcur, g_act);
    relu_backward_inplace(e.act, g_act);
    Tensor<T> g_conv;
    batchnorm_backward(e.bn, p.ptr(name + ".bn.gamma"), g_act, g_conv, g(name + ".bn.gamma"), g(name + ".bn.beta"));
    if (i > 0) {
      gcur.resize(e.input.n, e.input.c, e.input.h, e.input.w);
      conv3x3_backward(e.input, p.ptr(name + ".conv.weight"), g_conv, &gcur, g(name + ".conv.weight"));
    } else {
      conv3x3_backward<T>(e.input, p.ptr(name + ".conv.weight"), g_conv, nullptr, g(name + ".conv.weight"));
    }
  }
}

}  // namespace marss2l::nn
