#include "gridstab/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "gridstab/error.hpp"
#include "gridstab/log.hpp"

namespace gridstab {

DaySplit split_day(const FeatureSet& fs, int day, double calib_fraction) {
  if (!(calib_fraction > 0.0 && calib_fraction < 1.0))
    fail(ErrorCode::InvalidArgument, "calibration fraction must lie in (0, 1)");
  DaySplit s;
  s.day = day;
  const int slots = fs.slots_per_day;
  const int cut = std::clamp(static_cast<int>(std::lround(slots * (1.0 - calib_fraction))), 1, slots - 1);
  s.train = fs.day_indices(day, 0, cut);
  s.calib = fs.day_indices(day, cut);
  s.eval = fs.day_indices(day + 1);
  if (s.train.empty() || s.calib.empty()) fail(ErrorCode::InvalidArgument, "no samples for day " + std::to_string(day));
  if (s.eval.empty()) fail(ErrorCode::InvalidArgument, "no samples for day " + std::to_string(day + 1));
  return s;
}

const char* to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::PrevDay: return "prevday";
    case BaselineKind::Svm: return "svm";
    case BaselineKind::Mlp: return "mlp";
  }
  return "?";
}

BaselineKind baseline_from_string(const std::string& s) {
  if (s == "prevday") return BaselineKind::PrevDay;
  if (s == "svm") return BaselineKind::Svm;
  if (s == "mlp") return BaselineKind::Mlp;
  fail(ErrorCode::InvalidArgument, "unknown baseline '" + s + "'");
}

std::vector<Label> labels_of(const FeatureSet& fs, std::span<const std::size_t> indices) {
  std::vector<Label> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(fs.samples[i].label);
  return out;
}

std::vector<Label> predict_labels(std::span<const double> scores, double threshold) {
  std::vector<Label> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back(s >= threshold ? Label::Unstable : Label::Stable);
  return out;
}

Outcome evaluate_scores(std::string name, std::vector<double> scores, std::vector<Label> labels, double threshold,
                        bool infeasible) {
  Outcome o;
  o.name = std::move(name);
  o.threshold = threshold;
  o.infeasible = infeasible;
  o.metrics = compute_metrics(scores, labels, threshold);
  o.scores = std::move(scores);
  o.labels = std::move(labels);
  return o;
}

namespace {

// Calibrated (or overridden) threshold for a calibration score set.
std::pair<double, bool> pick_threshold(std::span<const double> calib_scores, std::span<const Label> calib_labels,
                                       const ExperimentConfig& config, std::optional<double> trained = std::nullopt) {
  if (config.threshold) return {*config.threshold, false};
  if (trained) return {*trained, false};
  const auto cal = calibrate_threshold(calib_scores, calib_labels, config.target_kkd);
  return {cal.threshold, cal.infeasible};
}

}  // namespace

Outcome run_model(const FeatureSet& fs, const DaySplit& split, ModelVariant variant, const ExperimentConfig& config,
                  std::optional<TrainResult>* trained) {
  TrainConfig tc = config.train;
  tc.target_kkd = config.target_kkd;
  TrainResult r = train_model(fs, split.train, split.calib, variant, config.model, tc);
  // Re-derive the flag; the trained threshold already is the calibrated one.
  const auto calib_scores = r.model.predict(fs, split.calib);
  const auto cal = calibrate_threshold(calib_scores, labels_of(fs, split.calib), config.target_kkd);
  const double threshold = config.threshold ? *config.threshold : cal.threshold;
  r.model.threshold = threshold;
  auto o = evaluate_scores(to_string(variant), r.model.predict(fs, split.eval), labels_of(fs, split.eval), threshold,
                           !config.threshold && cal.infeasible);
  if (trained) trained->emplace(std::move(r));
  return o;
}

Outcome run_prev_day(const FeatureSet& fs, const DaySplit& split, const ExperimentConfig& config) {
  const auto days = fs.days();
  double threshold = 0.03;
  bool infeasible = false;
  if (config.threshold) {
    threshold = *config.threshold;
  } else if (std::find(days.begin(), days.end(), split.day - 1) != days.end()) {
    // Nothing is fitted, so the whole training day serves as calibration data.
    const auto before = build_prev_day_index(fs, split.day - 1);
    const auto whole = fs.day_indices(split.day);
    std::vector<double> calib;
    for (auto i : whole) calib.push_back(prev_day_score(before, fs.samples[i].element_id));
    std::tie(threshold, infeasible) = pick_threshold(calib, labels_of(fs, whole), config);
  } else {
    // Strict "share > 0.03" on label shares of a 96-slot day equals ">= 3/96".
    threshold = std::nextafter(0.03, 1.0);
  }
  const auto index = build_prev_day_index(fs, split.day);
  std::vector<double> scores;
  for (auto i : split.eval) scores.push_back(prev_day_score(index, fs.samples[i].element_id));
  return evaluate_scores("Baseline", std::move(scores), labels_of(fs, split.eval), threshold, infeasible);
}

Outcome run_svm(const FeatureSet& fs, const DaySplit& split, const ExperimentConfig& config, SvmExpansion* expansion) {
  const auto r = svm_train_expanded(fs, split.train, config.svm);
  if (expansion) *expansion = r.expansion;
  const auto calib = svm_scores(r.params, fs, split.calib);
  const auto [threshold, infeasible] = pick_threshold(calib, labels_of(fs, split.calib), config);
  return evaluate_scores("SVM", svm_scores(r.params, fs, split.eval), labels_of(fs, split.eval), threshold,
                         infeasible);
}

Outcome run_baseline(const FeatureSet& fs, const DaySplit& split, BaselineKind kind, const ExperimentConfig& config) {
  switch (kind) {
    case BaselineKind::PrevDay: return run_prev_day(fs, split, config);
    case BaselineKind::Svm: return run_svm(fs, split, config);
    case BaselineKind::Mlp: {
      auto o = run_model(fs, split, ModelVariant::MlpOnly, config);
      o.name = "MLP";
      return o;
    }
  }
  fail(ErrorCode::Internal, "unhandled baseline kind");
}

Outcome run_union(std::string name, const Outcome& a, const Outcome& b) {
  if (a.labels != b.labels) fail(ErrorCode::InvalidArgument, "union of outcomes on different samples");
  const auto pred = combine_union(predict_labels(a.scores, a.threshold), predict_labels(b.scores, b.threshold));
  Outcome o;
  o.name = std::move(name);
  o.infeasible = a.infeasible || b.infeasible;
  o.metrics = metrics_from_counts(count_predictions(pred, a.labels));
  o.labels = a.labels;
  o.scores.reserve(pred.size());
  for (auto l : pred) o.scores.push_back(l == Label::Unstable ? 1.0 : 0.0);
  o.threshold = 1.0;
  o.metrics.threshold = 1.0;
  return o;
}

ReportRow to_row(const Outcome& o, std::string key) { return {std::move(key), o.metrics, o.infeasible}; }

Outcome run_system(const FeatureSet& fs, const DaySplit& split, const std::string& system,
                   const ExperimentConfig& config) {
  if (system == "prevday" || system == "svm" || system == "mlp")
    return run_baseline(fs, split, baseline_from_string(system), config);
  return run_model(fs, split, variant_from_string(system), config);
}

std::vector<ReportRow> daily_report(const FeatureSet& fs, const std::string& system, const std::vector<int>& days,
                                    const ExperimentConfig& config) {
  if (days.empty()) fail(ErrorCode::InvalidArgument, "no days to report");
  std::vector<ReportRow> rows;
  for (int d : days) {
    const auto split = split_day(fs, d, config.calib_fraction);
    const auto o = run_system(fs, split, system, config);
    logger().info("{} day {}: {}", system, d + 1, format_metrics(o.metrics));
    rows.push_back(to_row(o, std::to_string(d + 1)));
  }
  return rows;
}

std::vector<ReportRow> ablation_report(const FeatureSet& fs, int day, const ExperimentConfig& config) {
  const auto split = split_day(fs, day, config.calib_fraction);
  std::vector<ReportRow> rows;
  const std::pair<const char*, ModelVariant> runs[] = {{"full", ModelVariant::GraphModel},
                                                       {"no-global", ModelVariant::NoGlobal},
                                                       {"no-local", ModelVariant::NoLocal},
                                                       {"no-graph", ModelVariant::NoGraph}};
  for (const auto& [key, v] : runs) rows.push_back(to_row(run_model(fs, split, v, config), key));
  return rows;
}

std::vector<ReportRow> compare_report(const FeatureSet& fs, int day, const ExperimentConfig& config) {
  const auto split = split_day(fs, day, config.calib_fraction);
  std::vector<ReportRow> rows;
  const auto prev = run_prev_day(fs, split, config);
  rows.push_back(to_row(prev, "Baseline"));
  rows.push_back(to_row(run_baseline(fs, split, BaselineKind::Mlp, config), "MLP"));
  rows.push_back(to_row(run_svm(fs, split, config), "SVM"));
  const auto graph = run_model(fs, split, ModelVariant::GraphModel, config);
  rows.push_back(to_row(graph, "GraphModel"));
  rows.push_back(to_row(run_model(fs, split, ModelVariant::GraphPool, config), "GraphPool"));
  rows.push_back(to_row(run_model(fs, split, ModelVariant::DeepCnn5, config), "DeepCNN5"));
  rows.push_back(to_row(run_union("GraphModel+Baseline", graph, prev), "GraphModel+Baseline"));
  return rows;
}

}  // namespace gridstab
