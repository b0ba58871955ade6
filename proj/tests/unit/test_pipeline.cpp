#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gridstab/error.hpp"
#include "gridstab/pipeline.hpp"
#include "support.hpp"

using namespace gs_test;

namespace {

ExperimentConfig quick() {
  ExperimentConfig c;
  c.model.gcn_hidden = 8;
  c.model.global_hidden = 8;
  c.model.id_hidden = 8;
  c.model.mlp_hidden = {16, 8};
  c.model.cnn_channels = 4;
  c.model.cnn_kernel = 2;
  c.train.epochs = 1;
  c.svm.epochs = 3;
  return c;
}

}  // namespace

TEST_CASE("day split") {
  const auto& fs = small_fixture().features;
  const auto s = split_day(fs, 1);
  const std::size_t lines = fs.day_indices(1).size() / 12;
  CHECK(s.train.size() == lines * 10);
  CHECK(s.calib.size() == lines * 2);
  CHECK(s.eval == fs.day_indices(2));
  for (auto i : s.train) CHECK(fs.samples[i].slot < 10);
  for (auto i : s.calib) {
    CHECK(fs.samples[i].day == 1);
    CHECK(fs.samples[i].slot >= 10);
  }
  CHECK_THROWS_AS(split_day(fs, 2), Error);
  CHECK_THROWS_AS(split_day(fs, 0, 1.5), Error);
}

TEST_CASE("baseline names") {
  for (auto k : {BaselineKind::PrevDay, BaselineKind::Svm, BaselineKind::Mlp})
    CHECK(baseline_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(baseline_from_string("knn"), Error);
}

TEST_CASE("previous-day baseline operating points") {
  const auto& fs = small_fixture().features;
  const auto cfg = quick();
  // no day before day 0: fixed operating point
  const auto first = run_prev_day(fs, split_day(fs, 0), cfg);
  CHECK(first.threshold == std::nextafter(0.03, 1.0));
  const auto second = run_prev_day(fs, split_day(fs, 1), cfg);
  CHECK(second.scores.size() == split_day(fs, 1).eval.size());
  for (double s : second.scores) {
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
  // the score of a sample is the element's share of unstable slots on the training day
  const auto idx = build_prev_day_index(fs, 1);
  const auto split = split_day(fs, 1);
  for (std::size_t k = 0; k < split.eval.size(); k += 5)
    CHECK(second.scores[k] == prev_day_score(idx, fs.samples[split.eval[k]].element_id));
}

TEST_CASE("union outcome never loses reliability") {
  const auto& fs = small_fixture().features;
  const auto split = split_day(fs, 1);
  const auto cfg = quick();
  const auto a = run_prev_day(fs, split, cfg);
  const auto b = run_svm(fs, split, cfg);
  const auto u = run_union("u", a, b);
  CHECK(u.metrics.kkd >= std::max(a.metrics.kkd, b.metrics.kkd));
  CHECK(u.metrics.ysl <= std::min(a.metrics.ysl, b.metrics.ysl));
}

TEST_CASE("report shapes") {
  const auto& fs = small_fixture().features;
  const auto cfg = quick();
  const auto daily = daily_report(fs, "prevday", {0, 1}, cfg);
  REQUIRE(daily.size() == 2);
  CHECK(daily[0].key == "1");
  CHECK(daily[1].key == "2");
  CHECK(report_csv(daily, "date") == report_csv(daily_report(fs, "prevday", {0, 1}, cfg), "date"));

  const auto ablation = ablation_report(fs, 0, cfg);
  std::vector<std::string> keys;
  for (const auto& r : ablation) keys.push_back(r.key);
  CHECK(keys == std::vector<std::string>{"full", "no-global", "no-local", "no-graph"});
  CHECK(report_csv(ablation, "model") == report_csv(ablation_report(fs, 0, cfg), "model"));
}

TEST_CASE("seven days give six daily rows") {
  SynthConfig c;
  c.n_bus = 12;
  c.days = 7;
  c.slots_per_day = 6;
  auto ds = std::make_shared<const Dataset>(synthesize(c));
  const auto fs = featurize(ds, GlobalFeatureSpec::full(c.n_regions), 1);
  const auto rows = daily_report(fs, "prevday", {0, 1, 2, 3, 4, 5}, quick());
  CHECK(rows.size() == 6);
  CHECK_THROWS_AS(daily_report(fs, "prevday", {6}, quick()), Error);
  CHECK_THROWS_AS(daily_report(fs, "prevday", {}, quick()), Error);
}

TEST_CASE("comparison table rows") {
  SynthConfig c;
  c.n_bus = 40;
  c.days = 2;
  c.slots_per_day = 6;
  c.seed = 3;
  auto ds = std::make_shared<const Dataset>(synthesize(c));
  const auto fs = featurize(ds, GlobalFeatureSpec::full(c.n_regions), 1);
  const auto rows = compare_report(fs, 0, quick());
  std::vector<std::string> keys;
  for (const auto& r : rows) keys.push_back(r.key);
  CHECK(keys == std::vector<std::string>{"Baseline", "MLP", "SVM", "GraphModel", "GraphPool", "DeepCNN5",
                                         "GraphModel+Baseline"});
  for (const auto& r : rows) {
    CHECK(r.metrics.kkd >= 0.0);
    CHECK(r.metrics.kkd <= 100.0);
  }
  CHECK(rows[6].metrics.kkd >= std::max(rows[0].metrics.kkd, rows[3].metrics.kkd));
}
