#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "marss2l/raster.hpp"
#include "marss2l/retrieval.hpp"
#include "marss2l/scene_analysis.hpp"

namespace marss2l {

/// Undefined metrics (empty denominators) are nullopt and print as "n/a".
using Metric = std::optional<double>;

inline std::string format_metric(const Metric& m, int precision = 4) {
  if (!m) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, *m);
  return buf;
}

inline json metric_json(const Metric& m) { return m ? json(*m) : json("n/a"); }

struct ScoredScene {
  std::string scene_ref;
  double score = 0.0;
  bool has_plume = false;
  std::optional<double> flux_t_per_h;
  std::optional<Mask> pred_mask;
  std::optional<Mask> true_mask;
};

inline Metric ratio_metric(double num, double den) { return den > 0 ? Metric(num / den) : std::nullopt; }

struct ConfusionMetrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  Metric precision, recall, fpr, accuracy;
};

inline ConfusionMetrics confusion_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  ConfusionMetrics m{tp, fp, tn, fn, {}, {}, {}, {}};
  m.precision = ratio_metric(double(tp), double(tp + fp));
  m.recall = ratio_metric(double(tp), double(tp + fn));
  m.fpr = ratio_metric(double(fp), double(fp + tn));
  m.accuracy = ratio_metric(double(tp + tn), double(tp + fp + tn + fn));
  return m;
}

/// Scene-level counts with prediction = score >= threshold.
inline ConfusionMetrics confusion_metrics(std::span<const ScoredScene> scenes, double threshold) {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (const auto& s : scenes) {
    bool pred = s.score >= threshold;
    if (s.has_plume)
      pred ? ++tp : ++fn;
    else
      pred ? ++fp : ++tn;
  }
  return confusion_from_counts(tp, fp, tn, fn);
}

struct PrPoint {
  double threshold, precision, recall;
};

/// Precision/recall at every distinct score, highest threshold first.
inline std::vector<PrPoint> precision_recall_curve(std::span<const ScoredScene> scenes) {
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scenes[a].score > scenes[b].score; });
  std::size_t positives = 0;
  for (const auto& s : scenes) positives += s.has_plume;
  std::vector<PrPoint> curve;
  std::size_t tp = 0, taken = 0;
  for (std::size_t g = 0; g < order.size();) {
    double level = scenes[order[g]].score;
    while (g < order.size() && scenes[order[g]].score == level) {
      tp += scenes[order[g]].has_plume;
      ++taken;
      ++g;
    }
    curve.push_back({level, double(tp) / double(taken), positives ? double(tp) / double(positives) : 0.0});
  }
  return curve;
}

/// Area under the precision-recall step curve: sum of recall increments times the
/// precision reached at each distinct score (equal scores enter together).
inline Metric average_precision(std::span<const ScoredScene> scenes) {
  std::size_t positives = 0;
  for (const auto& s : scenes) positives += s.has_plume;
  if (positives == 0) return std::nullopt;
  double ap = 0.0, prev_recall = 0.0;
  for (const auto& p : precision_recall_curve(scenes)) {
    ap += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
  }
  return ap;
}

struct SegmentationMetrics {
  Metric precision, recall, accuracy, fpr;
  double iou = 0.0;
  bool empty_union = false;  // IoU reported as 1 by convention
};

inline SegmentationMetrics segmentation_metrics(const Mask& pred, const Mask& truth) {
  if (!pred.same_shape(truth)) throw ArgumentError("masks differ in shape");
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    bool p = pred[i] != 0, t = truth[i] != 0;
    if (p && t) ++tp;
    else if (p) ++fp;
    else if (t) ++fn;
    else ++tn;
  }
  ConfusionMetrics c = confusion_from_counts(tp, fp, tn, fn);
  SegmentationMetrics m{c.precision, c.recall, c.accuracy, c.fpr, 1.0, false};
  std::size_t uni = tp + fp + fn;
  if (uni == 0)
    m.empty_union = true;
  else
    m.iou = double(tp) / double(uni);
  return m;
}

struct FluxRecall {
  double min_flux;
  std::size_t positives;
  Metric recall;
};

/// Recall over positives whose flux is at least each edge.
inline std::vector<FluxRecall> recall_by_flux(std::span<const ScoredScene> scenes, std::span<const double> flux_edges,
                                              double threshold = 0.5) {
  std::vector<FluxRecall> out;
  for (double q : flux_edges) {
    std::size_t n = 0, hit = 0;
    for (const auto& s : scenes) {
      if (!s.has_plume) continue;
      if (!s.flux_t_per_h) throw ArgumentError("positive scene without flux in flux-stratified recall");
      if (*s.flux_t_per_h < q) continue;
      ++n;
      hit += s.score >= threshold;
    }
    out.push_back({q, n, ratio_metric(double(hit), double(n))});
  }
  return out;
}

struct WorkloadPoint {
  std::size_t images_reviewed;
  std::size_t plumes_found;
  double vs_random;  // plumes_found over the random-order expectation
};

struct WorkloadCurve {
  std::vector<WorkloadPoint> points;
  std::size_t total_images = 0;
  std::size_t total_positives = 0;

  /// Images a random ordering needs on average to find m plumes: m (N + 1) / (P + 1).
  double random_images_for(std::size_t m) const {
    return double(m) * double(total_images + 1) / double(total_positives + 1);
  }
  std::optional<std::size_t> images_for(std::size_t m) const {
    for (const auto& p : points)
      if (p.plumes_found >= m) return p.images_reviewed;
    return std::nullopt;
  }
  /// Random-order review effort divided by the model's, at a fraction of all plumes found.
  Metric reduction_factor(double fraction) const {
    if (total_positives == 0) return std::nullopt;
    auto m = std::size_t(std::ceil(fraction * double(total_positives)));
    auto n = images_for(m);
    if (!n || *n == 0) return std::nullopt;
    return random_images_for(m) / double(*n);
  }
};

/// Cumulative true positives when scenes are reviewed in descending score order (stable on ties).
inline WorkloadCurve workload_curve(std::span<const ScoredScene> scenes) {
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scenes[a].score > scenes[b].score; });
  WorkloadCurve c;
  c.total_images = scenes.size();
  for (const auto& s : scenes) c.total_positives += s.has_plume;
  std::size_t found = 0;
  for (std::size_t n = 0; n < order.size(); ++n) {
    found += scenes[order[n]].has_plume;
    double expected = double(n + 1) * double(c.total_positives) / double(c.total_images);
    c.points.push_back({n + 1, found, expected > 0 ? double(found) / expected : 0.0});
  }
  return c;
}

// ---------------------------------------------------------------------------
// Probability of detection
// ---------------------------------------------------------------------------

struct PodSample {
  double flux_t_per_h;
  bool detected;
};

struct PoDCurve {
  double q50 = 0.0;
  double scale = 1.0;  // logistic scale s, t/h
  std::array<double, 4> covariance{};  // row-major over (q50, s)
  double q90 = 0.0;
  std::vector<std::array<double, 3>> bins;  // mean flux, detection frequency, count

  double operator()(double q) const { return 1.0 / (1.0 + std::exp(-(q - q50) / scale)); }
};

inline double q90_from(double q50, double scale) { return q50 + scale * std::log(9.0); }

/// Least-squares logistic fit to detection frequencies in equal-count flux bins
/// (n/100 bins, at least 8 and at most 50, or one bin per sample below 8 samples per bin).
inline PoDCurve fit_pod(std::span<const PodSample> samples) {
  if (samples.size() < 10) throw FitError("PoD fit needs at least 10 samples");
  std::size_t hits = 0;
  for (const auto& s : samples) hits += s.detected;
  if (hits == 0 || hits == samples.size()) throw FitError("PoD fit needs both detected and missed samples");
  std::vector<PodSample> sorted(samples.begin(), samples.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.flux_t_per_h < b.flux_t_per_h; });
  const std::size_t n = sorted.size();
  std::size_t nbins = n >= 800 ? std::min<std::size_t>(n / 100, 50) : std::min<std::size_t>(n, 8);
  PoDCurve out;
  for (std::size_t b = 0; b < nbins; ++b) {
    std::size_t lo = b * n / nbins, hi = (b + 1) * n / nbins;
    double fx = 0.0, fy = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      fx += sorted[i].flux_t_per_h;
      fy += sorted[i].detected;
    }
    out.bins.push_back({fx / double(hi - lo), fy / double(hi - lo), double(hi - lo)});
  }
  // Levenberg-Marquardt over (q50, log s).
  auto residuals = [&](double q50, double ls, std::vector<double>* jq, std::vector<double>* js) {
    double s = std::exp(ls), rss = 0.0;
    for (std::size_t i = 0; i < out.bins.size(); ++i) {
      double x = out.bins[i][0], y = out.bins[i][1];
      double f = 1.0 / (1.0 + std::exp(-(x - q50) / s));
      double r = y - f;
      rss += r * r;
      if (jq) {
        double df = f * (1.0 - f);
        (*jq)[i] = -df / s;                // d f / d q50
        (*js)[i] = -df * (x - q50) / s;    // d f / d log s
      }
    }
    return rss;
  };
  double q50 = out.bins[out.bins.size() / 2][0];
  for (std::size_t i = 1; i < out.bins.size(); ++i)
    if (out.bins[i - 1][1] < 0.5 && out.bins[i][1] >= 0.5) {
      double t = (0.5 - out.bins[i - 1][1]) / (out.bins[i][1] - out.bins[i - 1][1]);
      q50 = out.bins[i - 1][0] + t * (out.bins[i][0] - out.bins[i - 1][0]);
      break;
    }
  double spread = out.bins.back()[0] - out.bins.front()[0];
  double ls = std::log(std::max(spread / 10.0, 1e-6));
  double lambda = 1e-3;
  std::vector<double> jq(out.bins.size()), js(out.bins.size());
  double rss = residuals(q50, ls, &jq, &js);
  for (int it = 0; it < 500; ++it) {
    double a = 0, b = 0, c = 0, gq = 0, gs = 0;
    for (std::size_t i = 0; i < out.bins.size(); ++i) {
      double x = out.bins[i][0];
      double s = std::exp(ls);
      double r = out.bins[i][1] - 1.0 / (1.0 + std::exp(-(x - q50) / s));
      a += jq[i] * jq[i], b += jq[i] * js[i], c += js[i] * js[i];
      gq += jq[i] * r, gs += js[i] * r;
    }
    bool improved = false;
    for (int tries = 0; tries < 30 && !improved; ++tries) {
      double A = a * (1 + lambda), C = c * (1 + lambda);
      double det = A * C - b * b;
      if (!(std::abs(det) > 1e-300)) {
        lambda *= 10;
        continue;
      }
      // J is the Jacobian of the model f, so the damped step solves (J^T J) delta = J^T (y - f).
      double dq = (C * gq - b * gs) / det, ds = (A * gs - b * gq) / det;
      double trial = residuals(q50 + dq, ls + ds, nullptr, nullptr);
      if (trial < rss) {
        q50 += dq, ls += ds;
        double rel = (rss - trial) / std::max(rss, 1e-300);
        rss = residuals(q50, ls, &jq, &js);
        lambda = std::max(lambda / 10, 1e-12);
        improved = true;
        if (rel < 1e-14 && std::abs(dq) < 1e-12) it = 1000;
      } else {
        lambda *= 10;
      }
    }
    if (!improved) break;
  }
  if (!std::isfinite(q50) || !std::isfinite(ls)) throw FitError("PoD fit diverged");
  out.q50 = q50;
  out.scale = std::exp(ls);
  out.q90 = q90_from(out.q50, out.scale);
  // Covariance of (q50, s) from sigma^2 (J^T J)^-1, transformed from log s.
  double a = 0, b = 0, c = 0;
  for (std::size_t i = 0; i < out.bins.size(); ++i) a += jq[i] * jq[i], b += jq[i] * js[i], c += js[i] * js[i];
  double dof = std::max<double>(double(out.bins.size()) - 2.0, 1.0);
  double sigma2 = rss / dof, det = a * c - b * b;
  if (std::abs(det) > 0) {
    double s = out.scale;
    out.covariance = {sigma2 * c / det, -sigma2 * b / det * s, -sigma2 * b / det * s, sigma2 * a / det * s * s};
  }
  return out;
}

// ---------------------------------------------------------------------------
// MBMP threshold baseline
// ---------------------------------------------------------------------------

/// Positive when {ratio <= threshold} holds a connected component of at least k pixels.
/// Pixels flagged in `excluded` never join a component, as in scene_score.
inline bool mbmp_baseline_score(const RetrievalProduct& retrieval, double threshold = 0.99,
                                std::size_t k = kDefaultComponentPixels, const Mask* excluded = nullptr) {
  Mask m(retrieval.ratio.width(), retrieval.ratio.height(), 0);
  for (std::size_t i = 0; i < m.size(); ++i)
    m[i] = retrieval.valid(i) && retrieval.ratio[i] <= threshold && !(excluded && (*excluded)[i]);
  return connected_components(m, kConnectivity).largest() >= k;
}

/// Continuous form used for ranking: the largest absorption depth d = 1 - ratio such
/// that {1 - ratio >= d} holds a k-pixel component, in [0, 1].
inline double mbmp_baseline_strength(const RetrievalProduct& retrieval, std::size_t k = kDefaultComponentPixels,
                                     const Mask* excluded = nullptr) {
  Plane depth(retrieval.ratio.width(), retrieval.ratio.height(), 0.0f);
  for (std::size_t i = 0; i < depth.size(); ++i)
    if (retrieval.valid(i)) depth[i] = std::clamp(1.0f - retrieval.ratio[i], 0.0f, 1.0f);
  return scene_score(depth, k, excluded);
}

}  // namespace marss2l
