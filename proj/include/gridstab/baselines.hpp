#pragma once

#include <map>
#include <span>
#include <vector>

#include "gridstab/features.hpp"
#include "gridstab/model.hpp"

namespace gridstab {

// ---- previous-day labels -----------------------------------------------------

struct PrevDayIndex {
  int day = -1;
  std::map<int, std::vector<Label>> labels;  // element id -> labels over that day's slots
};

// Throws Error(InvalidArgument) when the feature set has no samples for `day`.
PrevDayIndex build_prev_day_index(const FeatureSet& fs, int day);

// Share of unstable labels for the element; 0 when the element is absent.
double prev_day_score(const PrevDayIndex& index, int element_id);
// Unstable iff the share is strictly above the threshold.
Label prev_day_predict(const PrevDayIndex& index, int element_id, double threshold = 0.03);

// ---- boundary-expansion linear SVM ----------------------------------------------

struct SvmConfig {
  double c = 20000.0;
  int epochs = 20;
  double eta0 = 0.05;
  std::uint64_t seed = 17;
};

struct LinearSvmParams {
  std::vector<double> w;
  double b = 0.0;
  double c = 20000.0;
  std::vector<double> mean, scale;  // input standardization

  double margin(std::span<const double> x) const;
  double norm() const;
};

// Class-weighted hinge loss (weight N / (2 N_class)) minimized by averaged
// stochastic subgradient descent. Rows are standardized beforehand.
// Throws Error(InvalidArgument) on single-class or ragged input.
LinearSvmParams svm_train(const std::vector<std::vector<double>>& x, std::span<const Label> y, const SvmConfig& config);

struct SvmExpansion {
  std::size_t true_unstable = 0;
  std::size_t support_vectors = 0;   // |margin| <= 1, either class
  std::size_t false_positives = 0;   // stable, margin >= 0
  std::size_t expanded = 0;          // size of the union
  std::size_t stable_selected = 0;
  std::vector<std::size_t> expanded_ids;
  std::vector<std::size_t> stable_ids;
};

// Size of the union of the three sets.
std::size_t expanded_count(std::size_t true_unstable, std::size_t support_vectors, std::size_t false_positives,
                           std::size_t overlap);

struct SvmResult {
  LinearSvmParams stage1;
  LinearSvmParams params;  // stage 2
  SvmExpansion expansion;
};

// Stage 1 trains on everything and forms expanded = unstable | support vectors |
// stable false positives. Stage 2 pairs it with as many stable samples nearest
// the boundary and retrains. Indices refer to fs.samples.
SvmResult svm_train_expanded(const FeatureSet& fs, std::span<const std::size_t> indices, const SvmConfig& config);

// sigmoid of the geometric margin (margin / |w|); the raw margin saturates
// the sigmoid at large C. Monotone, 0.5 on the boundary.
std::vector<double> svm_scores(const LinearSvmParams& params, const FeatureSet& fs,
                               std::span<const std::size_t> indices);

// ---- MLP ------------------------------------------------------------------------

TrainResult mlp_baseline(const FeatureSet& fs, std::span<const std::size_t> train_indices,
                         std::span<const std::size_t> val_indices, const ModelConfig& config,
                         const TrainConfig& train);

// ---- ensemble ------------------------------------------------------------------

// Unstable iff either input says so. Throws Error(InvalidArgument) on a length mismatch.
std::vector<Label> combine_union(std::span<const Label> a, std::span<const Label> b);

}  // namespace gridstab
