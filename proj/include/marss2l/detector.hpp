#pragma once

// The plume detector: 16-channel input assembly, training with validation-AP model
// selection and early stopping, offshore fine-tuning, and inference.

#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "marss2l/evaluation.hpp"
#include "marss2l/nn/adam.hpp"
#include "marss2l/nn/loss.hpp"
#include "marss2l/nn/unet.hpp"
#include "marss2l/random.hpp"
#include "marss2l/retrieval.hpp"
#include "marss2l/scene_analysis.hpp"

namespace marss2l {

// Channel order of the model input.
inline constexpr std::array<const char*, nn::kInputChannels> kChannelNames = {
    "blue",     "green",     "red",   "nir",  "swir1",  "swir2",  "ref_blue", "ref_green",
    "ref_red",  "ref_nir",   "ref_swir1", "ref_swir2", "cloud", "mbmp", "wind_u", "wind_v"};
inline constexpr int kCloudChannel = 12;
inline constexpr int kRatioChannel = 13;
inline constexpr int kWindUChannel = 14;
inline constexpr int kWindVChannel = 15;
// The ratio plane is clipped to this band before standardisation.
inline constexpr float kRatioClipLow = 0.8f, kRatioClipHigh = 1.2f;

struct ChannelStats {
  std::array<double, nn::kInputChannels> mean{};
  std::array<double, nn::kInputChannels> std{};

  static ChannelStats identity() {
    ChannelStats s;
    s.std.fill(1.0);
    return s;
  }
  bool operator==(const ChannelStats&) const = default;
};

/// Unstandardised 1x16xHxW input. Masked ratio pixels read as 1 (no absorption).
inline nn::Tensor<float> raw_input(const SceneImage& scene, const SceneImage& reference,
                                   const RetrievalProduct& retrieval) {
  const int W = scene.width(), H = scene.height();
  if (reference.width() != W || reference.height() != H || retrieval.ratio.width() != W ||
      retrieval.ratio.height() != H)
    throw ArgumentError("scene, reference and retrieval differ in shape");
  nn::Tensor<float> t(1, nn::kInputChannels, H, W);
  const std::size_t P = t.plane_size();
  for (int b = 0; b < kBandCount; ++b) {
    std::copy_n(scene.bands[std::size_t(b)].storage().data(), P, t.plane(0, b));
    std::copy_n(reference.bands[std::size_t(b)].storage().data(), P, t.plane(0, kBandCount + b));
  }
  float* cloud = t.plane(0, kCloudChannel);
  float* ratio = t.plane(0, kRatioChannel);
  for (std::size_t i = 0; i < P; ++i) {
    cloud[i] = scene.cloud_mask[i] == CloudState::clear ? 0.0f : 1.0f;
    ratio[i] = retrieval.valid(i) ? std::clamp(retrieval.ratio[i], kRatioClipLow, kRatioClipHigh) : 1.0f;
  }
  std::fill_n(t.plane(0, kWindUChannel), P, float(scene.wind_u));
  std::fill_n(t.plane(0, kWindVChannel), P, float(scene.wind_v));
  return t;
}

inline void standardize(nn::Tensor<float>& t, const ChannelStats& s) {
  for (int n = 0; n < t.n; ++n)
    for (int c = 0; c < t.c; ++c) {
      float* p = t.plane(n, c);
      const float m = float(s.mean[std::size_t(c)]), inv = float(1.0 / s.std[std::size_t(c)]);
      for (std::size_t i = 0; i < t.plane_size(); ++i) p[i] = (p[i] - m) * inv;
    }
}

/// Standardised model input for a scene, its reference and their retrieval.
inline nn::Tensor<float> assemble_input(const SceneImage& scene, const SceneImage& reference,
                                        const RetrievalProduct& retrieval, const ChannelStats& stats) {
  nn::Tensor<float> t = raw_input(scene, reference, retrieval);
  standardize(t, stats);
  return t;
}

/// Per-channel mean and standard deviation over the cloud-free pixels of raw inputs.
/// The cloud channel itself uses every pixel. Degenerate spreads fall back to 1.
inline ChannelStats compute_channel_stats(std::span<const nn::Tensor<float>> inputs) {
  ChannelStats s;
  std::array<double, nn::kInputChannels> sum{}, sq{}, count{};
  for (const auto& t : inputs)
    for (int n = 0; n < t.n; ++n) {
      const float* cloud = t.plane(n, kCloudChannel);
      for (int c = 0; c < t.c; ++c) {
        const float* p = t.plane(n, c);
        for (std::size_t i = 0; i < t.plane_size(); ++i) {
          if (c != kCloudChannel && cloud[i] != 0.0f) continue;
          sum[std::size_t(c)] += p[i];
          sq[std::size_t(c)] += double(p[i]) * p[i];
          count[std::size_t(c)] += 1;
        }
      }
    }
  for (std::size_t c = 0; c < s.mean.size(); ++c) {
    if (count[c] == 0) {
      s.std[c] = 1.0;
      continue;
    }
    s.mean[c] = sum[c] / count[c];
    double var = std::max(sq[c] / count[c] - s.mean[c] * s.mean[c], 0.0);
    s.std[c] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return s;
}

struct Detector {
  nn::ModelParams<float> params;
  ChannelStats stats = ChannelStats::identity();
  double alpha = 10.0;
  std::uint64_t seed = 0;
  std::string tag = "base";
};

inline ProbabilityMap to_probability(const nn::Tensor<float>& probs, int n) {
  ProbabilityMap out{Plane(probs.w, probs.h)};
  std::copy_n(probs.plane(n, 0), probs.plane_size(), out.values.storage().data());
  return out;
}

/// Probability map for an already standardised 1x16xHxW input.
inline ProbabilityMap predict(const Detector& d, const nn::Tensor<float>& input) {
  return to_probability(nn::predict_probabilities(d.params, input), 0);
}

inline ProbabilityMap predict(const Detector& d, const SceneImage& scene, const SceneImage& reference,
                              const RetrievalProduct& retrieval) {
  return predict(d, assemble_input(scene, reference, retrieval, d.stats));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainingExample {
  nn::Tensor<float> input;  // raw (unstandardised) 1x16xHxW
  Mask mask;
  Plane delta_ch4;
  bool positive = false;
  bool simulated = false;
  bool skipped = false;  // no compatible donor; emitted as a negative
};

using ExampleSource = std::function<TrainingExample(Rng&)>;

/// Real validation scene (no simulation) with its raw input.
struct ValidationScene {
  nn::Tensor<float> input;
  Mask excluded;
  bool has_plume = false;
};

struct TrainConfig {
  double learning_rate = 5e-4;
  double weight_decay = 1e-6;
  int batch_size = 8;
  int steps_per_epoch = 50;
  int max_epochs = 10;
  int patience = 3;
  std::uint64_t seed = 1;
  int base_width = 16;
  int depth = 4;
  std::optional<double> alpha;  // positive-pixel weight slope; estimated when absent
  double target_median_weight = 5.0;
  std::size_t component_pixels = kDefaultComponentPixels;

  void validate() const {
    if (!(learning_rate > 0) || !(weight_decay >= 0)) throw ArgumentError("learning rate and decay must be positive");
    if (batch_size < 1 || steps_per_epoch < 1 || max_epochs < 1 || patience < 1 || base_width < 1 || depth < 1)
      throw ArgumentError("training sizes must be positive");
    if (alpha && !(*alpha >= 0)) throw ArgumentError("alpha must be non-negative");
  }
};

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  Metric validation_ap;
  double seconds = 0.0;
};

struct TrainResult {
  Detector detector;  // best-validation checkpoint
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  std::size_t skipped_examples = 0;
  std::size_t simulated_examples = 0;
};

/// Slope that makes the median positive-pixel weight 1 + alpha * median(delta) equal `target`.
inline double alpha_for_median_weight(std::vector<double> positive_deltas, double target = 5.0) {
  if (positive_deltas.empty()) return 10.0;
  double med = detail::median_of(std::move(positive_deltas));
  return med > 0 ? (target - 1.0) / med : 10.0;
}

inline std::vector<double> scene_scores(const Detector& d, std::span<const ValidationScene> scenes, std::size_t k) {
  std::vector<double> out;
  for (const auto& v : scenes) {
    nn::Tensor<float> x = v.input;
    standardize(x, d.stats);
    ProbabilityMap p = predict(d, x);
    out.push_back(scene_score(p.values, k, &v.excluded));
  }
  return out;
}

inline Metric validation_ap(const Detector& d, std::span<const ValidationScene> scenes, std::size_t k) {
  std::vector<double> s = scene_scores(d, scenes, k);
  std::vector<ScoredScene> scored;
  for (std::size_t i = 0; i < s.size(); ++i) {
    ScoredScene x;
    x.score = s[i];
    x.has_plume = scenes[i].has_plume;
    scored.push_back(std::move(x));
  }
  return average_precision(scored);
}

namespace detail {

struct Batch {
  nn::Tensor<float> x, target, weight;
};

inline Batch make_batch(std::span<const TrainingExample> ex, const ChannelStats& stats, double alpha) {
  const auto& f = ex.front().input;
  Batch b{nn::Tensor<float>(int(ex.size()), f.c, f.h, f.w), nn::Tensor<float>(int(ex.size()), 1, f.h, f.w),
          nn::Tensor<float>(int(ex.size()), 1, f.h, f.w)};
  nn::Tensor<float> delta(int(ex.size()), 1, f.h, f.w);
  const std::size_t P = b.x.plane_size();
  for (std::size_t n = 0; n < ex.size(); ++n) {
    if (!ex[n].input.same_shape(f)) throw ArgumentError("training examples differ in shape");
    std::copy_n(ex[n].input.data.data(), ex[n].input.size(), b.x.plane(int(n), 0));
    for (std::size_t i = 0; i < P; ++i) {
      b.target.plane(int(n), 0)[i] = ex[n].mask[i] ? 1.0f : 0.0f;
      delta.plane(int(n), 0)[i] = ex[n].delta_ch4[i];
    }
  }
  standardize(b.x, stats);
  b.weight = nn::pixel_weights(b.target, delta, alpha);
  return b;
}

/// One optimiser step on a batch; returns the loss.
inline double train_step(nn::ModelParams<float>& params, nn::Adam<float>& opt, const Batch& b) {
  nn::ForwardCache<float> cache;
  nn::Tensor<float> logits = nn::forward_logits(params, b.x, nn::Mode::train, &cache, true);
  nn::Tensor<float> g;
  double loss = nn::weighted_bce(logits, b.target, b.weight, &g);
  if (!std::isfinite(loss)) throw DivergenceError("training loss became non-finite");
  std::vector<float> grad;
  nn::backward(params, cache, g, grad);
  opt.step(params, grad);
  return loss;
}

}  // namespace detail

/// Trains from an example source, selecting the checkpoint with the best validation AP.
inline TrainResult train(const ExampleSource& source, std::span<const ValidationScene> validation,
                         const ChannelStats& stats, const TrainConfig& cfg,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  if (validation.empty()) throw ArgumentError("validation set must not be empty");
  Rng rng(derive_seed(cfg.seed, 0x7A11));
  TrainResult result;
  Detector d;
  d.params = nn::init_params<float>(nn::UNetConfig::with_base_width(cfg.base_width, cfg.depth), derive_seed(cfg.seed, 1));
  d.stats = stats;
  d.seed = cfg.seed;
  if (cfg.alpha) {
    d.alpha = *cfg.alpha;
  } else {
    Rng pilot(derive_seed(cfg.seed, 0xA1FA));
    std::vector<double> deltas;
    for (int i = 0; i < 32; ++i) {
      TrainingExample e = source(pilot);
      for (std::size_t j = 0; j < e.mask.size(); ++j)
        if (e.mask[j]) deltas.push_back(e.delta_ch4[j]);
    }
    d.alpha = alpha_for_median_weight(std::move(deltas), cfg.target_median_weight);
  }
  nn::Adam<float> opt(d.params, {.lr = cfg.learning_rate, .weight_decay = cfg.weight_decay});
  Metric best;
  int since_best = 0;
  result.detector = d;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      std::vector<TrainingExample> ex;
      for (int i = 0; i < cfg.batch_size; ++i) {
        ex.push_back(source(rng));
        result.skipped_examples += ex.back().skipped;
        result.simulated_examples += ex.back().simulated;
      }
      loss_sum += detail::train_step(d.params, opt, detail::make_batch(ex, d.stats, d.alpha));
    }
    EpochRecord rec{epoch, loss_sum / cfg.steps_per_epoch, validation_ap(d, validation, cfg.component_pixels),
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    double ap = rec.validation_ap.value_or(0.0);
    if (!best || ap > *best) {
      best = ap;
      since_best = 0;
      result.detector = d;
      result.best_epoch = epoch;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

struct FinetuneResult {
  Detector detector;
  std::size_t steps = 0;
};

/// One extra pass over real offshore examples only; an empty set leaves the model unchanged.
inline FinetuneResult finetune_offshore(const Detector& base, std::span<const TrainingExample> offshore,
                                        int batch_size = 8, double learning_rate = 5e-4, double weight_decay = 1e-6,
                                        int epochs = 1) {
  if (batch_size < 1 || epochs < 0) throw ArgumentError("batch size must be positive");
  FinetuneResult out{base, 0};
  if (offshore.empty()) return out;
  out.detector.tag = "offshore";
  nn::Adam<float> opt(out.detector.params, {.lr = learning_rate, .weight_decay = weight_decay});
  for (int e = 0; e < epochs; ++e)
    for (std::size_t i = 0; i < offshore.size(); i += std::size_t(batch_size)) {
      auto chunk = offshore.subspan(i, std::min<std::size_t>(std::size_t(batch_size), offshore.size() - i));
      detail::train_step(out.detector.params, opt, detail::make_batch(chunk, out.detector.stats, out.detector.alpha));
      ++out.steps;
    }
  return out;
}

}  // namespace marss2l
