#include "gridstab/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gridstab/error.hpp"
#include "gridstab/log.hpp"
#include "gridstab/rng.hpp"

namespace gridstab {

PrevDayIndex build_prev_day_index(const FeatureSet& fs, int day) {
  PrevDayIndex index;
  index.day = day;
  for (const auto& s : fs.samples)
    if (s.day == day) index.labels[s.element_id].push_back(s.label);
  if (index.labels.empty()) fail(ErrorCode::InvalidArgument, "no samples for day " + std::to_string(day));
  return index;
}

double prev_day_score(const PrevDayIndex& index, int element_id) {
  const auto it = index.labels.find(element_id);
  if (it == index.labels.end() || it->second.empty()) {
    logger().debug("element {} absent from day {} history, predicting stable", element_id, index.day);
    return 0.0;
  }
  const auto unstable = std::count(it->second.begin(), it->second.end(), Label::Unstable);
  return static_cast<double>(unstable) / static_cast<double>(it->second.size());
}

Label prev_day_predict(const PrevDayIndex& index, int element_id, double threshold) {
  return prev_day_score(index, element_id) > threshold ? Label::Unstable : Label::Stable;
}

double LinearSvmParams::margin(std::span<const double> x) const {
  double m = b;
  for (std::size_t k = 0; k < w.size(); ++k) m += w[k] * (x[k] - mean[k]) / scale[k];
  return m;
}

double LinearSvmParams::norm() const {
  return std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
}

LinearSvmParams svm_train(const std::vector<std::vector<double>>& x, std::span<const Label> y,
                          const SvmConfig& config) {
  if (x.size() != y.size() || x.empty()) fail(ErrorCode::InvalidArgument, "svm: empty or mismatched input");
  if (!(config.c > 0.0) || config.epochs < 1) fail(ErrorCode::InvalidArgument, "svm: C and epochs must be positive");
  const std::size_t n = x.size();
  const std::size_t d = x.front().size();
  for (const auto& row : x)
    if (row.size() != d) fail(ErrorCode::InvalidArgument, "svm: ragged feature rows");
  const auto n_pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), Label::Unstable));
  if (n_pos == 0 || n_pos == n) fail(ErrorCode::InvalidArgument, "svm: training data has a single class");

  LinearSvmParams p;
  p.c = config.c;
  p.mean.assign(d, 0.0);
  p.scale.assign(d, 1.0);
  for (const auto& row : x)
    for (std::size_t k = 0; k < d; ++k) p.mean[k] += row[k];
  for (auto& m : p.mean) m /= static_cast<double>(n);
  std::vector<double> var(d, 0.0);
  for (const auto& row : x)
    for (std::size_t k = 0; k < d; ++k) var[k] += (row[k] - p.mean[k]) * (row[k] - p.mean[k]);
  for (std::size_t k = 0; k < d; ++k) {
    const double sd = std::sqrt(var[k] / static_cast<double>(n));
    p.scale[k] = sd > 1e-12 ? sd : 1.0;
  }
  std::vector<std::vector<double>> z(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) z[i][k] = (x[i][k] - p.mean[k]) / p.scale[k];

  const double weight_pos = static_cast<double>(n) / (2.0 * static_cast<double>(n_pos));
  const double weight_neg = static_cast<double>(n) / (2.0 * static_cast<double>(n - n_pos));
  // 0.5 |w|^2 + C sum_i c_i hinge_i, divided by C N.
  const double lambda = 1.0 / (config.c * static_cast<double>(n));

  std::vector<double> w(d, 0.0), w_avg(d, 0.0);
  double b = 0.0, b_avg = 0.0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(config.seed);
  long t = 0, averaged = 0;
  const long average_from = static_cast<long>(n) * config.epochs / 2;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t i : order) {
      const double eta = config.eta0 / std::sqrt(1.0 + static_cast<double>(t) / static_cast<double>(n));
      const double yi = y[i] == Label::Unstable ? 1.0 : -1.0;
      const double ci = y[i] == Label::Unstable ? weight_pos : weight_neg;
      double m = b;
      for (std::size_t k = 0; k < d; ++k) m += w[k] * z[i][k];
      const double shrink = 1.0 - eta * lambda;
      for (auto& v : w) v *= shrink;
      if (yi * m < 1.0) {
        for (std::size_t k = 0; k < d; ++k) w[k] += eta * ci * yi * z[i][k];
        b += eta * ci * yi;
      }
      if (++t > average_from) {
        ++averaged;
        const double r = 1.0 / static_cast<double>(averaged);
        for (std::size_t k = 0; k < d; ++k) w_avg[k] += (w[k] - w_avg[k]) * r;
        b_avg += (b - b_avg) * r;
      }
    }
  }
  p.w = std::move(w_avg);
  p.b = b_avg;
  for (double v : p.w)
    if (!std::isfinite(v)) fail(ErrorCode::Numeric, "svm: non-finite weights");
  if (!std::isfinite(p.b)) fail(ErrorCode::Numeric, "svm: non-finite bias");
  return p;
}

std::size_t expanded_count(std::size_t true_unstable, std::size_t support_vectors, std::size_t false_positives,
                           std::size_t overlap) {
  const std::size_t total = true_unstable + support_vectors + false_positives;
  if (overlap > total) fail(ErrorCode::InvalidArgument, "overlap exceeds the summed set sizes");
  return total - overlap;
}

SvmResult svm_train_expanded(const FeatureSet& fs, std::span<const std::size_t> indices, const SvmConfig& config) {
  std::vector<std::vector<double>> x;
  std::vector<Label> y;
  x.reserve(indices.size());
  for (auto i : indices) {
    x.push_back(fs.global[fs.samples[i].snapshot]);
    y.push_back(fs.samples[i].label);
  }
  SvmResult r;
  r.stage1 = svm_train(x, y, config);

  std::vector<double> margins(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) margins[k] = r.stage1.margin(x[k]);

  auto& e = r.expansion;
  std::vector<std::uint8_t> in_expanded(x.size(), 0);
  std::size_t memberships = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const bool unstable = y[k] == Label::Unstable;
    const bool support = std::abs(margins[k]) <= 1.0;
    const bool false_pos = !unstable && margins[k] >= 0.0;
    e.true_unstable += unstable;
    e.support_vectors += support;
    e.false_positives += false_pos;
    const int hits = unstable + support + false_pos;
    memberships += hits;
    if (hits > 0) {
      in_expanded[k] = 1;
      e.expanded_ids.push_back(indices[k]);
    }
  }
  e.expanded = expanded_count(e.true_unstable, e.support_vectors, e.false_positives,
                              memberships - e.expanded_ids.size());

  const double norm = std::max(r.stage1.norm(), 1e-300);
  std::vector<std::size_t> candidates;
  for (std::size_t k = 0; k < x.size(); ++k)
    if (!in_expanded[k]) candidates.push_back(k);
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(margins[a]) / norm < std::abs(margins[b]) / norm;
  });
  if (candidates.size() < e.expanded)
    logger().warn("svm: only {} stable samples outside the expanded set of {}", candidates.size(), e.expanded);
  candidates.resize(std::min(candidates.size(), e.expanded));
  if (candidates.empty()) fail(ErrorCode::InvalidArgument, "svm: no stable samples left for stage 2");
  e.stable_selected = candidates.size();

  std::vector<std::vector<double>> x2;
  std::vector<Label> y2;
  for (std::size_t k = 0; k < x.size(); ++k)
    if (in_expanded[k]) {
      x2.push_back(x[k]);
      y2.push_back(Label::Unstable);
    }
  for (auto k : candidates) {
    x2.push_back(x[k]);
    y2.push_back(Label::Stable);
    e.stable_ids.push_back(indices[k]);
  }
  r.params = svm_train(x2, y2, config);
  logger().info("svm expansion: {} unstable + {} support + {} false positive -> {} expanded, {} stable",
                e.true_unstable, e.support_vectors, e.false_positives, e.expanded, e.stable_selected);
  return r;
}

std::vector<double> svm_scores(const LinearSvmParams& params, const FeatureSet& fs,
                               std::span<const std::size_t> indices) {
  if (params.w.size() != fs.spec.size()) fail(ErrorCode::Format, "svm weight width differs from the feature set");
  const double norm = std::max(params.norm(), 1e-12);
  std::vector<double> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(nn::sigmoid(params.margin(fs.global[fs.samples[i].snapshot]) / norm));
  return out;
}

TrainResult mlp_baseline(const FeatureSet& fs, std::span<const std::size_t> train_indices,
                         std::span<const std::size_t> val_indices, const ModelConfig& config,
                         const TrainConfig& train) {
  return train_model(fs, train_indices, val_indices, ModelVariant::MlpOnly, config, train);
}

std::vector<Label> combine_union(std::span<const Label> a, std::span<const Label> b) {
  if (a.size() != b.size()) fail(ErrorCode::InvalidArgument, "combine_union: prediction lengths differ");
  std::vector<Label> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = (a[i] == Label::Unstable || b[i] == Label::Unstable) ? Label::Unstable : Label::Stable;
  return out;
}

}  // namespace gridstab
