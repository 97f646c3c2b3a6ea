#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsrnet/numerics.hpp"

namespace tsrnet {

struct Interval {
  double start = 0.0;
  double end = 0.0;
};

inline double tiou(Interval a, Interval b) {
  if (!(a.start < a.end) || !(b.start < b.end)) fail(ErrorKind::Input, "tiou: degenerate segment");
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = (a.end - a.start) + (b.end - b.start) - inter;
  return inter / uni;
}

struct Detection {
  std::string video_id;
  int label = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  double confidence = 0.0;
};

struct GroundTruth {
  std::string video_id;
  int label = 0;
  double t_start = 0.0;
  double t_end = 0.0;
};

/// Ranking order for AP: confidence descending, then earlier start, then video id.
inline bool ranks_before(const Detection& a, const Detection& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.t_start != b.t_start) return a.t_start < b.t_start;
  if (a.video_id != b.video_id) return a.video_id < b.video_id;
  return a.t_end < b.t_end;
}

/// Non-interpolated AP for one class: walk detections in rank order, match each
/// to the unmatched ground truth (same video) with the highest tIoU >= thr, and
/// average the precision at every true positive over the ground-truth count.
inline double average_precision(std::vector<Detection> dets, const std::vector<GroundTruth>& gts, double iou_thr) {
  if (gts.empty() || dets.empty()) return 0.0;
  std::stable_sort(dets.begin(), dets.end(), ranks_before);
  std::map<std::string, std::vector<std::size_t>> by_video;
  for (std::size_t g = 0; g < gts.size(); ++g) by_video[gts[g].video_id].push_back(g);
  std::vector<bool> used(gts.size(), false);
  std::size_t tp = 0;
  double precision_sum = 0.0;
  for (std::size_t k = 0; k < dets.size(); ++k) {
    const auto& d = dets[k];
    std::optional<std::size_t> best;
    double best_iou = iou_thr;
    const auto it = by_video.find(d.video_id);
    if (it != by_video.end() && d.t_start < d.t_end) {
      for (std::size_t g : it->second) {
        if (used[g]) continue;
        const double iou = tiou({d.t_start, d.t_end}, {gts[g].t_start, gts[g].t_end});
        if (iou >= best_iou && (!best || iou > best_iou)) {
          best = g;
          best_iou = iou;
        }
      }
    }
    if (best) {
      used[*best] = true;
      ++tp;
      precision_sum += static_cast<double>(tp) / static_cast<double>(k + 1);
    }
  }
  return precision_sum / static_cast<double>(gts.size());
}

struct ThresholdResult {
  double iou = 0.0;
  double map = 0.0;
  std::vector<std::optional<double>> per_class_ap;  // nullopt for classes without ground truth
};

struct EvalReport {
  std::vector<ThresholdResult> thresholds;
  double average_map = 0.0;  // plain mean over the configured threshold grid
  std::optional<double> accuracy_rgb;
  std::optional<double> accuracy_flow;
  std::optional<double> accuracy_fused;
  std::size_t evaluable_classes = 0;

  double map_at(double iou) const {
    for (const auto& t : thresholds)
      if (std::abs(t.iou - iou) < 1e-9) return t.map;
    fail(ErrorKind::Input, "no mAP computed at IoU " + std::to_string(iou));
  }
};

inline EvalReport map_at_iou(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int num_classes,
                             const std::vector<double>& thresholds) {
  EvalReport rep;
  std::vector<std::vector<Detection>> dets_by_class(static_cast<std::size_t>(num_classes));
  std::vector<std::vector<GroundTruth>> gts_by_class(static_cast<std::size_t>(num_classes));
  for (const auto& d : dets)
    if (d.label >= 0 && d.label < num_classes) dets_by_class[static_cast<std::size_t>(d.label)].push_back(d);
  for (const auto& g : gts) {
    if (g.label < 0 || g.label >= num_classes) fail(ErrorKind::Input, "ground truth label out of range");
    gts_by_class[static_cast<std::size_t>(g.label)].push_back(g);
  }
  for (const auto& g : gts_by_class) rep.evaluable_classes += g.empty() ? 0 : 1;
  for (double thr : thresholds) {
    ThresholdResult tr;
    tr.iou = thr;
    double sum = 0.0;
    for (int c = 0; c < num_classes; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      if (gts_by_class[ci].empty()) {
        tr.per_class_ap.push_back(std::nullopt);
        continue;
      }
      const double ap = average_precision(dets_by_class[ci], gts_by_class[ci], thr);
      tr.per_class_ap.push_back(ap);
      sum += ap;
    }
    tr.map = rep.evaluable_classes ? sum / static_cast<double>(rep.evaluable_classes) : 0.0;
    rep.thresholds.push_back(std::move(tr));
  }
  if (!rep.thresholds.empty()) {
    double s = 0.0;
    for (const auto& t : rep.thresholds) s += t.map;
    rep.average_map = s / static_cast<double>(rep.thresholds.size());
  }
  return rep;
}

/// Fraction of videos whose predicted class is among their true labels.
inline double accuracy(const std::vector<int>& predicted, const std::vector<std::vector<int>>& truth) {
  if (predicted.size() != truth.size()) fail(ErrorKind::Input, "accuracy: one prediction per video required");
  if (truth.empty()) fail(ErrorKind::Input, "accuracy: no videos");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    hit += std::find(truth[i].begin(), truth[i].end(), predicted[i]) != truth[i].end() ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

inline int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline std::vector<double> thumos_thresholds() { return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}; }
inline std::vector<double> activitynet_thresholds() { return {0.5, 0.75, 0.95}; }

/// "lo:hi:step", a comma-separated list, or one of the names "thumos" / "activitynet".
inline std::vector<double> parse_thresholds(const std::string& spec) {
  if (spec == "thumos") return thumos_thresholds();
  if (spec == "activitynet") return activitynet_thresholds();
  auto num = [&](const std::string& s) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "bad threshold value '" + s + "'");
    }
  };
  std::vector<double> out;
  if (std::count(spec.begin(), spec.end(), ':') == 2) {
    const auto a = spec.find(':');
    const auto b = spec.find(':', a + 1);
    const double lo = num(spec.substr(0, a));
    const double hi = num(spec.substr(a + 1, b - a - 1));
    const double step = num(spec.substr(b + 1));
    if (!(step > 0.0) || hi < lo) fail(ErrorKind::Config, "bad threshold range '" + spec + "'");
    // integer stepping avoids accumulating 0.1 + 0.1 + ... drift
    const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long k = 0; k <= count; ++k) out.push_back(std::round((lo + static_cast<double>(k) * step) * 1e9) / 1e9);
  } else {
    std::size_t start = 0;
    while (start <= spec.size()) {
      const auto comma = spec.find(',', start);
      out.push_back(num(spec.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  for (double t : out)
    if (!(t > 0.0 && t <= 1.0)) fail(ErrorKind::Config, "IoU thresholds must lie in (0, 1]");
  return out;
}

inline nlohmann::json report_to_json(const EvalReport& r, const std::vector<std::string>& class_names) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& t : r.thresholds) {
    nlohmann::json aps = nlohmann::json::object();
    for (std::size_t c = 0; c < t.per_class_ap.size(); ++c)
      if (t.per_class_ap[c]) aps[c < class_names.size() ? class_names[c] : std::to_string(c)] = *t.per_class_ap[c];
    per.push_back({{"iou", t.iou}, {"mAP", t.map}, {"per_class_ap", aps}});
  }
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"thresholds", per},
          {"average_mAP_over_grid", r.average_map},
          {"evaluable_classes", r.evaluable_classes},
          {"accuracy", {{"rgb", opt(r.accuracy_rgb)}, {"flow", opt(r.accuracy_flow)}, {"fused", opt(r.accuracy_fused)}}}};
}

inline std::string report_to_csv(const EvalReport& r) {
  std::string out = "iou,mAP\n";
  char buf[64];
  for (const auto& t : r.thresholds) {
    std::snprintf(buf, sizeof buf, "%.4g,%.17g\n", t.iou, t.map);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "average,%.17g\n", r.average_map);
  out += buf;
  return out;
}

/// Bar chart of mAP against the IoU threshold.
inline std::string report_to_svg(const EvalReport& r) {
  const int width = 60 + 50 * static_cast<int>(r.thresholds.size());
  const int height = 260;
  const int base = 220;
  const int plot_h = 180;
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" viewBox=\"0 0 %d %d\">\n", width,
                height, width, height);
  out += buf;
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<line x1=\"40\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", base, width - 10, base);
  out += buf;
  std::snprintf(buf, sizeof buf, "<line x1=\"40\" y1=\"%d\" x2=\"40\" y2=\"%d\" stroke=\"black\"/>\n", base, base - plot_h);
  out += buf;
  out += "<text x=\"4\" y=\"24\" font-size=\"11\">mAP</text>\n";
  for (std::size_t k = 0; k < r.thresholds.size(); ++k) {
    const auto& t = r.thresholds[k];
    const int x = 50 + 50 * static_cast<int>(k);
    const int h = static_cast<int>(std::lround(t.map * plot_h));
    std::snprintf(buf, sizeof buf, "<rect x=\"%d\" y=\"%d\" width=\"36\" height=\"%d\" fill=\"steelblue\"/>\n", x, base - h, h);
    out += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" font-size=\"10\">%.3f</text>\n", x, base - h - 4, t.map);
    out += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" font-size=\"11\">%.2f</text>\n", x + 6, base + 16, t.iou);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" font-size=\"11\">IoU threshold</text>\n", width / 2 - 30, height - 6);
  out += buf;
  out += "</svg>\n";
  return out;
}

}  // namespace tsrnet
