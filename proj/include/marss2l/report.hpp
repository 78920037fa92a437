#pragma once

// Benchmark report tables (JSON and CSV) and small SVG line plots.

#include <fstream>
#include <sstream>

#include "marss2l/evaluation.hpp"

namespace marss2l {

/// Classification plus pooled pixel-level metrics for one model over one scene set.
struct ModelMetricsRow {
  std::string model;
  Metric ap;
  ConfusionMetrics classification;
  ConfusionMetrics segmentation;  // pixel counts pooled over scenes carrying both masks
  Metric iou;
};

inline ModelMetricsRow model_metrics(const std::string& model, std::span<const ScoredScene> scenes,
                                     double threshold = 0.5) {
  ModelMetricsRow r{model, average_precision(scenes), confusion_metrics(scenes, threshold), {}, {}};
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (const auto& s : scenes) {
    if (!s.pred_mask || !s.true_mask) continue;
    if (!s.pred_mask->same_shape(*s.true_mask)) throw ArgumentError("masks differ in shape");
    for (std::size_t i = 0; i < s.pred_mask->size(); ++i) {
      bool p = (*s.pred_mask)[i] != 0, t = (*s.true_mask)[i] != 0;
      tp += p && t, fp += p && !t, fn += !p && t, tn += !p && !t;
    }
  }
  r.segmentation = confusion_from_counts(tp, fp, tn, fn);
  r.iou = ratio_metric(double(tp), double(tp + fp + fn));
  return r;
}

/// One row of a scene-score component-size sweep.
struct KSweepRow {
  std::size_t k;
  Metric ap, precision, recall, fpr;
};

/// One row of a decision-threshold sweep.
struct ThresholdRow {
  double threshold;
  ConfusionMetrics metrics;
};

inline std::vector<ThresholdRow> threshold_sweep(std::span<const ScoredScene> scenes, std::span<const double> thresholds) {
  std::vector<ThresholdRow> out;
  for (double t : thresholds) out.push_back({t, confusion_metrics(scenes, t)});
  return out;
}

namespace detail {

inline std::string pct(const Metric& m) { return m ? format_metric(Metric(*m * 100.0), 2) : "n/a"; }

inline std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

}  // namespace detail

// Percentages with two decimals; undefined cells read "n/a".
inline std::string model_metrics_csv(std::span<const ModelMetricsRow> rows) {
  std::ostringstream os;
  os << "Model,AP (%),Precision (%),Recall (%),Acc. (%),FPR (%),Segmentation Precision (%),"
        "Segmentation Recall (%),Segmentation Acc. (%),Segmentation FPR (%),IoU (%)\n";
  for (const auto& r : rows) {
    const auto& c = r.classification;
    const auto& s = r.segmentation;
    os << detail::csv_cell(r.model) << ',' << detail::pct(r.ap) << ',' << detail::pct(c.precision) << ','
       << detail::pct(c.recall) << ',' << detail::pct(c.accuracy) << ',' << detail::pct(c.fpr) << ','
       << detail::pct(s.precision) << ',' << detail::pct(s.recall) << ',' << detail::pct(s.accuracy) << ','
       << detail::pct(s.fpr) << ',' << detail::pct(r.iou) << '\n';
  }
  return os.str();
}

inline std::string k_sweep_csv(std::span<const KSweepRow> rows) {
  std::ostringstream os;
  os << "Threshold pixels (k),AP (%),Precision (%),Recall (%),FPR (%)\n";
  for (const auto& r : rows)
    os << r.k << ',' << detail::pct(r.ap) << ',' << detail::pct(r.precision) << ',' << detail::pct(r.recall) << ','
       << detail::pct(r.fpr) << '\n';
  return os.str();
}

/// FPR per threshold, one column per model.
inline std::string threshold_fpr_csv(const std::vector<std::pair<std::string, std::vector<ThresholdRow>>>& models) {
  std::ostringstream os;
  os << "Threshold";
  for (const auto& [name, rows] : models) os << ',' << detail::csv_cell(name) << " FPR (%)";
  os << '\n';
  if (models.empty()) return os.str();
  for (std::size_t i = 0; i < models[0].second.size(); ++i) {
    os << format_metric(models[0].second[i].threshold, 2);
    for (const auto& [name, rows] : models) os << ',' << (i < rows.size() ? detail::pct(rows[i].metrics.fpr) : "n/a");
    os << '\n';
  }
  return os.str();
}

inline json to_json(const ConfusionMetrics& c) {
  return {{"tp", c.tp},
          {"fp", c.fp},
          {"tn", c.tn},
          {"fn", c.fn},
          {"precision", metric_json(c.precision)},
          {"recall", metric_json(c.recall)},
          {"fpr", metric_json(c.fpr)},
          {"accuracy", metric_json(c.accuracy)}};
}

inline json to_json(const ModelMetricsRow& r) {
  return {{"model", r.model},
          {"ap", metric_json(r.ap)},
          {"classification", to_json(r.classification)},
          {"segmentation", to_json(r.segmentation)},
          {"iou", metric_json(r.iou)}};
}

inline json to_json(const KSweepRow& r) {
  return {{"k", r.k},
          {"ap", metric_json(r.ap)},
          {"precision", metric_json(r.precision)},
          {"recall", metric_json(r.recall)},
          {"fpr", metric_json(r.fpr)}};
}

inline json to_json(const FluxRecall& r) {
  return {{"min_flux_t_per_h", r.min_flux}, {"positives", r.positives}, {"recall", metric_json(r.recall)}};
}

inline json to_json(const WorkloadCurve& c) {
  json pts = json::array();
  for (const auto& p : c.points) pts.push_back({p.images_reviewed, p.plumes_found});
  return {{"total_images", c.total_images},
          {"total_positives", c.total_positives},
          {"reduction_at_80pct", metric_json(c.reduction_factor(0.8))},
          {"points", pts}};
}

inline json to_json(const PoDCurve& c) {
  return {{"q50", c.q50}, {"s", c.scale}, {"q90", c.q90}, {"covariance", c.covariance}, {"bins", c.bins}};
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
  std::string color = "#1f77b4";
  bool dashed = false;
  bool markers = false;
};

struct PlotSpec {
  std::string title, x_label, y_label;
  double width = 560, height = 380;
  std::optional<std::pair<double, double>> x_range, y_range;
};

/// Axes, four ticks per axis, one polyline per series and a legend.
inline std::string svg_line_plot(const PlotSpec& spec, std::span<const PlotSeries> series) {
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      if (first) x0 = x1 = x, y0 = y1 = y, first = false;
      x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  if (spec.x_range) std::tie(x0, x1) = *spec.x_range;
  if (spec.y_range) std::tie(y0, y1) = *spec.y_range;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const double L = 60, R = 20, T = 30, B = 45;
  const double pw = spec.width - L - R, ph = spec.height - T - B;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return T + ph - (y - y0) / (y1 - y0) * ph; };
  auto esc = [](const std::string& s) {
    std::string o;
    for (char c : s) o += c == '<' ? "&lt;" : c == '>' ? "&gt;" : c == '&' ? "&amp;" : std::string(1, c);
    return o;
  };
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\"" << spec.height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << spec.width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << esc(spec.title)
     << "</text>\n";
  os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    os << "<text x=\"" << px(xv) << "\" y=\"" << T + ph + 15 << "\" text-anchor=\"middle\">" << format_metric(xv, 2)
       << "</text>\n";
    os << "<text x=\"" << L - 5 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << format_metric(yv, 2)
       << "</text>\n";
  }
  os << "<text x=\"" << L + pw / 2 << "\" y=\"" << spec.height - 8 << "\" text-anchor=\"middle\">" << esc(spec.x_label)
     << "</text>\n";
  os << "<text transform=\"translate(14," << T + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << esc(spec.y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.6\""
       << (s.dashed ? " stroke-dasharray=\"5,4\"" : "") << " points=\"";
    for (auto [x, y] : s.points) os << px(x) << ',' << py(y) << ' ';
    os << "\"/>\n";
    if (s.markers)
      for (auto [x, y] : s.points)
        os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"2.5\" fill=\"" << s.color << "\"/>\n";
    double ly = T + 14 + 14 * double(k);
    os << "<line x1=\"" << L + 10 << "\" y1=\"" << ly << "\" x2=\"" << L + 30 << "\" y2=\"" << ly << "\" stroke=\""
       << s.color << "\"" << (s.dashed ? " stroke-dasharray=\"5,4\"" : "") << "/>\n";
    os << "<text x=\"" << L + 35 << "\" y=\"" << ly + 4 << "\">" << esc(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline std::string workload_svg(const WorkloadCurve& c) {
  PlotSeries model{"model order", {}, "#d62728"};
  PlotSeries random{"random order", {}, "#7f7f7f", true};
  model.points.push_back({0, 0});
  for (const auto& p : c.points) model.points.push_back({double(p.images_reviewed), double(p.plumes_found)});
  random.points = {{0, 0}, {c.random_images_for(c.total_positives), double(c.total_positives)}};
  std::vector<PlotSeries> s{model, random};
  return svg_line_plot({"Review workload", "images reviewed", "plumes found"}, s);
}

inline std::string pr_curve_svg(const std::vector<std::pair<std::string, std::vector<PrPoint>>>& curves) {
  static const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd"};
  std::vector<PlotSeries> s;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    PlotSeries p{curves[i].first, {}, colors[i % 4]};
    for (const auto& q : curves[i].second) p.points.push_back({q.recall, q.precision});
    s.push_back(p);
  }
  return svg_line_plot({"Precision-recall", "recall", "precision", 560, 380, {{0, 1}}, {{0, 1}}}, s);
}

inline std::string pod_svg(const PoDCurve& c, double q_max) {
  PlotSeries fit{"logistic fit", {}, "#d62728"}, bins{"binned frequency", {}, "#1f77b4", false, true};
  for (int i = 0; i <= 100; ++i) {
    double q = q_max * i / 100.0;
    fit.points.push_back({q, c(q)});
  }
  for (const auto& b : c.bins) bins.points.push_back({b[0], b[1]});
  std::vector<PlotSeries> s{fit, bins};
  return svg_line_plot({"Probability of detection", "flux (t/h)", "PoD", 560, 380, {{0, q_max}}, {{0, 1}}}, s);
}

inline std::string recall_by_flux_svg(const std::vector<std::pair<std::string, std::vector<FluxRecall>>>& models) {
  static const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd"};
  std::vector<PlotSeries> s;
  for (std::size_t i = 0; i < models.size(); ++i) {
    PlotSeries p{models[i].first, {}, colors[i % 4], false, true};
    for (const auto& r : models[i].second)
      if (r.recall) p.points.push_back({r.min_flux, *r.recall});
    s.push_back(p);
  }
  return svg_line_plot({"Cumulative recall", "flux >= q (t/h)", "recall", 560, 380, std::nullopt, {{0, 1}}}, s);
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
}

}  // namespace marss2l
