#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sidewalk/errors.hpp"

namespace sidewalk::evalkit {

// The three frame cases: not anomalous, anomalous but not hazardous,
// anomalous and hazardous.
enum class FrameLabel { normal, anomaly_nonhazard, hazard };

inline std::string_view to_string(FrameLabel label) {
  switch (label) {
    case FrameLabel::normal: return "normal";
    case FrameLabel::anomaly_nonhazard: return "anomaly_nonhazard";
    case FrameLabel::hazard: return "hazard";
  }
  return "?";
}

inline FrameLabel parse_label(std::string_view text) {
  if (text == "normal") return FrameLabel::normal;
  if (text == "anomaly_nonhazard") return FrameLabel::anomaly_nonhazard;
  if (text == "hazard") return FrameLabel::hazard;
  throw FormatError("unknown frame label '" + std::string(text) + "'");
}

inline bool is_hazard(FrameLabel label) { return label == FrameLabel::hazard; }
inline bool is_anomaly(FrameLabel label) { return label != FrameLabel::normal; }

// Named cells, hazard = positive class.
struct ConfusionMatrix {
  std::size_t true_nonhazard = 0;
  std::size_t false_hazard = 0;
  std::size_t false_nonhazard = 0;
  std::size_t true_hazard = 0;

  std::size_t total() const noexcept {
    return true_nonhazard + false_hazard + false_nonhazard + true_hazard;
  }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion_matrix(const std::vector<bool>& predicted_hazard,
                                        const std::vector<bool>& actual_hazard) {
  if (predicted_hazard.size() != actual_hazard.size()) {
    throw DimensionError("confusion_matrix: " + std::to_string(predicted_hazard.size()) +
                         " predictions vs " + std::to_string(actual_hazard.size()) + " labels");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < predicted_hazard.size(); ++i) {
    if (actual_hazard[i]) {
      ++(predicted_hazard[i] ? cm.true_hazard : cm.false_nonhazard);
    } else {
      ++(predicted_hazard[i] ? cm.false_hazard : cm.true_nonhazard);
    }
  }
  return cm;
}

// Normal and anomaly_nonhazard both binarize to non-hazard.
inline ConfusionMatrix confusion_matrix(const std::vector<bool>& predicted_hazard,
                                        const std::vector<FrameLabel>& labels) {
  std::vector<bool> actual(labels.size());
  std::transform(labels.begin(), labels.end(), actual.begin(), is_hazard);
  return confusion_matrix(predicted_hazard, actual);
}

inline double accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ArgumentError("accuracy: empty confusion matrix");
  return static_cast<double>(cm.true_nonhazard + cm.true_hazard) / static_cast<double>(cm.total());
}

// Relative drop in false hazards from `before` to `after`.
inline double false_hazard_reduction(const ConfusionMatrix& before, const ConfusionMatrix& after) {
  if (before.false_hazard == 0) throw ArgumentError("false_hazard_reduction: baseline has no false hazards");
  return (static_cast<double>(before.false_hazard) - static_cast<double>(after.false_hazard)) /
         static_cast<double>(before.false_hazard);
}

inline double round_to(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(value * scale) / scale;
}

struct RocPoint {
  double threshold = 0.0;
  double true_positive_rate = 0.0;
  double false_positive_rate = 0.0;
};

// Per threshold T, a frame is predicted positive when score >= T.
inline std::vector<RocPoint> roc_curve(const std::vector<double>& scores,
                                       const std::vector<bool>& positive,
                                       const std::vector<double>& thresholds) {
  if (scores.size() != positive.size()) throw DimensionError("roc_curve: scores and labels differ in length");
  if (thresholds.empty()) throw ArgumentError("roc_curve: no thresholds");
  const auto n_pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  const std::size_t n_neg = positive.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw EvaluationError("roc_curve: labels contain a single class, AUC is undefined");

  std::vector<RocPoint> points;
  points.reserve(thresholds.size());
  for (double t : thresholds) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) ++(positive[i] ? tp : fp);
    }
    points.push_back({t, static_cast<double>(tp) / static_cast<double>(n_pos),
                      static_cast<double>(fp) / static_cast<double>(n_neg)});
  }
  return points;
}

inline std::vector<RocPoint> roc_curve(const std::vector<double>& scores,
                                       const std::vector<FrameLabel>& labels,
                                       const std::vector<double>& thresholds) {
  std::vector<bool> positive(labels.size());
  std::transform(labels.begin(), labels.end(), positive.begin(), is_anomaly);
  return roc_curve(scores, positive, thresholds);
}

// `count` evenly spaced values over [lo, hi].
inline std::vector<double> linear_thresholds(double lo = 10.0, double hi = 500.0, std::size_t count = 50) {
  if (count == 0) throw ArgumentError("linear_thresholds: count must be positive");
  if (count == 1) return {lo};
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return out;
}

// Every distinct score plus +inf: the full empirical ROC.
inline std::vector<double> score_thresholds(std::vector<double> scores) {
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
  scores.push_back(std::numeric_limits<double>::infinity());
  return scores;
}

// Trapezoidal area over points sorted by FPR, with (0,0) and (1,1) added.
inline double auc(std::vector<RocPoint> points) {
  if (points.size() < 2) throw ArgumentError("auc: at least 2 ROC points are required");
  points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  points.push_back({-std::numeric_limits<double>::infinity(), 1.0, 1.0});
  std::sort(points.begin(), points.end(), [](const RocPoint& a, const RocPoint& b) {
    if (a.false_positive_rate != b.false_positive_rate) return a.false_positive_rate < b.false_positive_rate;
    return a.true_positive_rate < b.true_positive_rate;
  });
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double dx = points[i].false_positive_rate - points[i - 1].false_positive_rate;
    area += dx * 0.5 * (points[i].true_positive_rate + points[i - 1].true_positive_rate);
  }
  return std::clamp(area, 0.0, 1.0);
}

// Shortest round-trip decimal form.
inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// `threshold,fpr,tpr` lines.
inline std::string format_roc_csv(const std::vector<RocPoint>& points) {
  std::string out = "threshold,fpr,tpr\n";
  for (const auto& p : points) {
    out += format_number(p.threshold) + ',' + format_number(p.false_positive_rate) + ',' +
           format_number(p.true_positive_rate) + '\n';
  }
  return out;
}

inline std::string format_confusion(const ConfusionMatrix& cm, std::string_view title = "") {
  std::ostringstream os;
  char acc[32];
  std::snprintf(acc, sizeof acc, "%.3f", accuracy(cm));
  if (!title.empty()) os << title << '\n';
  os << "binarization: hazard -> positive; normal, anomaly_nonhazard -> non-hazard\n";
  os << "  true non-hazardous  " << cm.true_nonhazard << '\n';
  os << "  false hazardous     " << cm.false_hazard << '\n';
  os << "  false non-hazardous " << cm.false_nonhazard << '\n';
  os << "  true hazardous      " << cm.true_hazard << '\n';
  os << "  accuracy            " << acc << '\n';
  os << "cm," << cm.true_nonhazard << ',' << cm.false_hazard << ',' << cm.false_nonhazard << ','
     << cm.true_hazard << ',' << acc << '\n';
  return os.str();
}

}  // namespace sidewalk::evalkit
