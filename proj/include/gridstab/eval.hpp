#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gridstab/grid_model.hpp"

namespace gridstab {

// Screening confusion counts. A sample is predicted Unstable iff
// score >= threshold.
struct ConfusionCounts {
  long s_f = 0;   // all fault samples
  long s_tf = 0;  // truly unstable
  long l = 0;     // missed: truly unstable, predicted stable
  long p_ds = 0;  // predicted unstable
  long p_df = 0;  // predicted unstable and truly unstable

  bool operator==(const ConfusionCounts&) const = default;
};

// Percentages in [0, 100].
struct MetricRow {
  double threshold = 0.0;
  double kkd = 0.0;  // reliability: caught share of unstable samples
  double ryd = 0.0;  // redundancy: stable share of the flagged samples
  double ysl = 0.0;  // compression: share of samples not flagged
  double acc = 0.0;
};

ConfusionCounts count_confusion(std::span<const double> scores, std::span<const Label> labels, double threshold);
ConfusionCounts count_predictions(std::span<const Label> predicted, std::span<const Label> labels);

// kkd = 100 when there is nothing to catch; ryd = 0 when nothing is flagged.
MetricRow metrics_from_counts(const ConfusionCounts& c, double threshold = 0.0);

// Throws Error(InvalidArgument) on empty or mismatched input or a threshold outside [0, 1].
MetricRow compute_metrics(std::span<const double> scores, std::span<const Label> labels, double threshold);

// "kkd ryd ysl acc" to two decimals.
std::string format_metrics(const MetricRow& row);

struct Calibration {
  double threshold = 0.0;
  bool infeasible = false;
  MetricRow at_threshold;
};

// Largest candidate score whose flag set still reaches target_kkd. When even
// flagging everything misses the target, returns threshold 0 flagged infeasible.
Calibration calibrate_threshold(std::span<const double> scores, std::span<const Label> labels,
                                double target_kkd = 98.0);

// Keeps every unstable id and an equal number of stable ids drawn without
// replacement. Result is sorted. Throws Error(InvalidArgument) on single-class input.
std::vector<std::size_t> undersample_balance(std::span<const std::size_t> ids, std::span<const Label> labels,
                                             std::uint64_t seed);

struct ReportRow {
  std::string key;  // day or model name
  MetricRow metrics;
  bool infeasible = false;
};

// CSV with the given first column name: key,threshold,kkd,ryd,ysl,acc
std::string report_csv(const std::vector<ReportRow>& rows, const std::string& key_column);
// Aligned text table.
std::string report_table(const std::vector<ReportRow>& rows, const std::string& key_column);

}  // namespace gridstab
