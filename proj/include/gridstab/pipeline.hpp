#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gridstab/baselines.hpp"
#include "gridstab/eval.hpp"
#include "gridstab/features.hpp"
#include "gridstab/model.hpp"

namespace gridstab {

// Train on the head of day d, calibrate on its tail, evaluate on day d + 1.
struct DaySplit {
  int day = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> calib;
  std::vector<std::size_t> eval;
};

// Throws Error(InvalidArgument) when either day has no samples.
DaySplit split_day(const FeatureSet& fs, int day, double calib_fraction = 0.2);

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  SvmConfig svm;
  double target_kkd = 98.0;
  double calib_fraction = 0.2;
  std::optional<double> threshold;  // skips calibration
};

enum class BaselineKind { PrevDay, Svm, Mlp };
const char* to_string(BaselineKind kind);
BaselineKind baseline_from_string(const std::string& s);

struct Outcome {
  std::string name;
  double threshold = 0.0;
  bool infeasible = false;
  MetricRow metrics;
  std::vector<double> scores;  // eval-day scores, split.eval order
  std::vector<Label> labels;
};

std::vector<Label> labels_of(const FeatureSet& fs, std::span<const std::size_t> indices);
std::vector<Label> predict_labels(std::span<const double> scores, double threshold);

Outcome evaluate_scores(std::string name, std::vector<double> scores, std::vector<Label> labels, double threshold,
                        bool infeasible);

// Trains the variant on the split and scores day + 1 at the calibrated threshold.
Outcome run_model(const FeatureSet& fs, const DaySplit& split, ModelVariant variant, const ExperimentConfig& config,
                  std::optional<TrainResult>* trained = nullptr);
// Previous-day share of unstable labels. Without a day before the training day
// the fixed 0.03 operating point is used.
Outcome run_prev_day(const FeatureSet& fs, const DaySplit& split, const ExperimentConfig& config);
Outcome run_svm(const FeatureSet& fs, const DaySplit& split, const ExperimentConfig& config,
                SvmExpansion* expansion = nullptr);
Outcome run_baseline(const FeatureSet& fs, const DaySplit& split, BaselineKind kind, const ExperimentConfig& config);
// Union of two outcomes on the same split, each at its own threshold.
Outcome run_union(std::string name, const Outcome& a, const Outcome& b);

ReportRow to_row(const Outcome& o, std::string key);

// One row per evaluated day (train d, evaluate d + 1).
std::vector<ReportRow> daily_report(const FeatureSet& fs, const std::string& system, const std::vector<int>& days,
                                    const ExperimentConfig& config);
// Full model and the ablations without global, local and graph input.
std::vector<ReportRow> ablation_report(const FeatureSet& fs, int day, const ExperimentConfig& config);
// Baseline, MLP, SVM, GraphModel, GraphPool, DeepCNN5 and the union of GraphModel with the baseline.
std::vector<ReportRow> compare_report(const FeatureSet& fs, int day, const ExperimentConfig& config);

// Runs a named system: a model variant name or a baseline kind.
Outcome run_system(const FeatureSet& fs, const DaySplit& split, const std::string& system,
                   const ExperimentConfig& config);

}  // namespace gridstab
