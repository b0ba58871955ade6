#include "gridstab/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "gridstab/error.hpp"
#include "gridstab/rng.hpp"

namespace gridstab {
namespace {

double pct(long num, long den) { return 100.0 * static_cast<double>(num) / static_cast<double>(den); }

}  // namespace

ConfusionCounts count_confusion(std::span<const double> scores, std::span<const Label> labels, double threshold) {
  if (scores.size() != labels.size()) fail(ErrorCode::InvalidArgument, "scores and labels differ in length");
  ConfusionCounts c;
  c.s_f = static_cast<long>(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool truth = labels[i] == Label::Unstable;
    const bool flagged = scores[i] >= threshold;
    c.s_tf += truth;
    c.p_ds += flagged;
    c.p_df += truth && flagged;
    c.l += truth && !flagged;
  }
  return c;
}

ConfusionCounts count_predictions(std::span<const Label> predicted, std::span<const Label> labels) {
  if (predicted.size() != labels.size()) fail(ErrorCode::InvalidArgument, "predictions and labels differ in length");
  std::vector<double> s(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) s[i] = predicted[i] == Label::Unstable ? 1.0 : 0.0;
  return count_confusion(s, labels, 0.5);
}

MetricRow metrics_from_counts(const ConfusionCounts& c, double threshold) {
  MetricRow m;
  m.threshold = threshold;
  m.kkd = c.s_tf == 0 ? 100.0 : pct(c.s_tf - c.l, c.s_tf);
  m.ryd = c.p_ds == 0 ? 0.0 : pct(c.p_ds - c.p_df, c.p_ds);
  m.ysl = c.s_f == 0 ? 0.0 : pct(c.s_f - c.p_ds, c.s_f);
  const long true_negatives = c.s_f - c.s_tf - (c.p_ds - c.p_df);
  m.acc = c.s_f == 0 ? 0.0 : pct(c.p_df + true_negatives, c.s_f);
  return m;
}

MetricRow compute_metrics(std::span<const double> scores, std::span<const Label> labels, double threshold) {
  if (scores.empty()) fail(ErrorCode::InvalidArgument, "metrics of an empty evaluation set");
  if (!(threshold >= 0.0 && threshold <= 1.0)) fail(ErrorCode::InvalidArgument, "threshold must lie in [0, 1]");
  return metrics_from_counts(count_confusion(scores, labels, threshold), threshold);
}

std::string format_metrics(const MetricRow& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.2f %.2f %.2f %.2f", r.kkd, r.ryd, r.ysl, r.acc);
  return buf;
}

Calibration calibrate_threshold(std::span<const double> scores, std::span<const Label> labels, double target_kkd) {
  if (scores.size() != labels.size()) fail(ErrorCode::InvalidArgument, "scores and labels differ in length");
  Calibration cal;
  if (scores.empty()) {
    cal.infeasible = true;
    return cal;
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const long unstable = std::count(labels.begin(), labels.end(), Label::Unstable);

  long caught = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double t = scores[order[k]];
    while (k < order.size() && scores[order[k]] == t) caught += labels[order[k++]] == Label::Unstable;
    const double kkd = unstable == 0 ? 100.0 : pct(caught, unstable);
    if (kkd >= target_kkd) {
      cal.threshold = t;
      cal.at_threshold = metrics_from_counts(count_confusion(scores, labels, t), t);
      return cal;
    }
  }
  cal.threshold = 0.0;
  cal.infeasible = true;
  cal.at_threshold = metrics_from_counts(count_confusion(scores, labels, 0.0), 0.0);
  return cal;
}

std::vector<std::size_t> undersample_balance(std::span<const std::size_t> ids, std::span<const Label> labels,
                                             std::uint64_t seed) {
  if (ids.size() != labels.size()) fail(ErrorCode::InvalidArgument, "ids and labels differ in length");
  std::vector<std::size_t> unstable, stable;
  for (std::size_t i = 0; i < ids.size(); ++i) (labels[i] == Label::Unstable ? unstable : stable).push_back(ids[i]);
  if (unstable.empty() || stable.empty())
    fail(ErrorCode::InvalidArgument, "undersampling needs both stable and unstable samples");
  Rng rng(seed);
  // Partial Fisher-Yates: the first |unstable| slots become the sample.
  const std::size_t keep = std::min(unstable.size(), stable.size());
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(stable.size() - i));
    std::swap(stable[i], stable[j]);
  }
  std::vector<std::size_t> out = unstable;
  out.insert(out.end(), stable.begin(), stable.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(out.begin(), out.end());
  return out;
}

std::string report_csv(const std::vector<ReportRow>& rows, const std::string& key_column) {
  std::string out = key_column + ",threshold,kkd,ryd,ysl,acc\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.6g,%.2f,%.2f,%.2f,%.2f\n", r.metrics.threshold, r.metrics.kkd, r.metrics.ryd,
                  r.metrics.ysl, r.metrics.acc);
    out += r.key + buf;
  }
  return out;
}

std::string report_table(const std::vector<ReportRow>& rows, const std::string& key_column) {
  std::size_t width = key_column.size();
  for (const auto& r : rows) width = std::max(width, r.key.size());
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-*s %10s %8s %8s %8s %8s\n", static_cast<int>(width), key_column.c_str(), "threshold",
                "kkd", "ryd", "ysl", "acc");
  std::string out = buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %10.6g %8.2f %8.2f %8.2f %8.2f%s\n", static_cast<int>(width), r.key.c_str(),
                  r.metrics.threshold, r.metrics.kkd, r.metrics.ryd, r.metrics.ysl, r.metrics.acc,
                  r.infeasible ? "  (infeasible)" : "");
    out += buf;
  }
  return out;
}

}  // namespace gridstab
