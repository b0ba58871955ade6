#include <doctest.h>

#include <algorithm>
#include <set>

#include "../common/oracles.hpp"
#include "gridstab/error.hpp"

using namespace gs_oracle;

namespace {

// 1000 samples, 100 unstable of which 2 are missed, 300 flagged.
void worked_example(std::vector<double>& scores, std::vector<Label>& labels) {
  scores.assign(1000, 0.1);
  labels.assign(1000, Label::Stable);
  for (int i = 0; i < 100; ++i) labels[i] = Label::Unstable;
  for (int i = 0; i < 98; ++i) scores[i] = 0.9;       // caught
  for (int i = 100; i < 302; ++i) scores[i] = 0.9;    // 202 false alarms
}

}  // namespace

TEST_CASE("metrics: worked example") {
  std::vector<double> s;
  std::vector<Label> y;
  worked_example(s, y);
  const auto c = count_confusion(s, y, 0.5);
  CHECK(c == ConfusionCounts{1000, 100, 2, 300, 98});
  const auto m = compute_metrics(s, y, 0.5);
  CHECK(m.kkd == 98.0);
  CHECK(m.ryd == doctest::Approx(67.33).epsilon(1e-4));
  CHECK(m.ysl == 70.0);
  CHECK(m.acc == doctest::Approx(79.6).epsilon(1e-12));
  CHECK(format_metrics(m) == "98.00 67.33 70.00 79.60");
  MetricRow paper{0.0, 98.09, 54.66, 77.18, 87.32};
  CHECK(format_metrics(paper) == "98.09 54.66 77.18 87.32");

  std::vector<double> perfect(1000, 0.0);
  for (int i = 0; i < 100; ++i) perfect[i] = 1.0;
  const auto p = compute_metrics(perfect, y, 0.5);
  CHECK(p.kkd == 100.0);
  CHECK(p.ryd == 0.0);
  CHECK(p.ysl == 90.0);
  CHECK(p.acc == 100.0);
}

TEST_CASE("metrics: conventions and errors") {
  const std::vector<double> s{0.2, 0.3};
  const std::vector<Label> stable{Label::Stable, Label::Stable};
  const auto m = compute_metrics(s, stable, 0.9);
  CHECK(m.kkd == 100.0);
  CHECK(m.ryd == 0.0);
  CHECK_THROWS_AS(compute_metrics(std::vector<double>{}, std::vector<Label>{}, 0.5), Error);
  CHECK_THROWS_AS(compute_metrics(s, stable, 1.5), Error);
  CHECK_THROWS_AS(compute_metrics(s, std::vector<Label>{Label::Stable}, 0.5), Error);
  // ties flag the sample
  CHECK(count_confusion(std::vector<double>{0.5}, std::vector<Label>{Label::Unstable}, 0.5).p_ds == 1);
}

TEST_CASE("metrics agree with a brute-force confusion matrix") {
  Rng rng(5);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.below(200);
    const double rate = rng.uniform();
    std::vector<double> s(n);
    std::vector<Label> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.below(4) == 0 ? static_cast<double>(rng.below(5)) / 4.0 : rng.uniform();
      y[i] = rng.uniform() < rate ? Label::Unstable : Label::Stable;
    }
    const double thr = rng.below(3) == 0 ? static_cast<double>(rng.below(5)) / 4.0 : rng.uniform();
    const auto brute = brute_confusion(s, y, thr);
    CHECK(same_metrics(compute_metrics(s, y, thr), brute_metrics(brute, thr)));
    const auto c = count_confusion(s, y, thr);
    CHECK(c.s_f == static_cast<long>(n));
    CHECK(c.p_df == brute.tp);
    CHECK(c.p_ds - c.p_df == brute.fp);
    CHECK(c.l == brute.fn);
    std::vector<Label> pred(n);
    for (std::size_t i = 0; i < n; ++i) pred[i] = s[i] >= thr ? Label::Unstable : Label::Stable;
    CHECK(count_predictions(pred, y) == c);
  }
}

TEST_CASE("calibration examples") {
  const std::vector<double> s{0.9, 0.8, 0.1};
  const std::vector<Label> y{Label::Unstable, Label::Unstable, Label::Stable};
  const auto c = calibrate_threshold(s, y, 100.0);
  CHECK_FALSE(c.infeasible);
  CHECK(c.threshold == 0.8);
  CHECK(c.at_threshold.kkd == 100.0);
  CHECK(c.at_threshold.ysl == doctest::Approx(33.33).epsilon(1e-3));

  const std::vector<double> ones{1.0, 1.0, 0.2};
  const auto top = calibrate_threshold(ones, y, 98.0);
  CHECK(top.threshold == 1.0);
  CHECK_FALSE(top.infeasible);

  const auto impossible = calibrate_threshold(s, y, 100.5);
  CHECK(impossible.infeasible);
  CHECK(impossible.threshold == 0.0);
  CHECK(calibrate_threshold(std::vector<double>{}, std::vector<Label>{}).infeasible);
}

TEST_CASE("calibration picks the largest feasible candidate") {
  Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 5 + rng.below(100);
    std::vector<double> s(n);
    std::vector<Label> y(n, Label::Stable);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(30)) / 29.0;
      if (rng.uniform() < 0.3) y[i] = Label::Unstable;
    }
    y[0] = Label::Unstable;
    const double target = rng.uniform(50.0, 100.0);
    const auto c = calibrate_threshold(s, y, target);
    REQUIRE_FALSE(c.infeasible);
    CHECK(compute_metrics(s, y, c.threshold).kkd >= target);
    CHECK(std::find(s.begin(), s.end(), c.threshold) != s.end());
    for (double cand : s)
      if (cand > c.threshold) CHECK(compute_metrics(s, y, cand).kkd < target);
  }
}

TEST_CASE("lower thresholds never lose reliability or gain compression") {
  Rng rng(13);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 10 + rng.below(300);
    std::vector<double> s(n);
    std::vector<Label> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.uniform();
      y[i] = rng.uniform() < 0.1 ? Label::Unstable : Label::Stable;
    }
    std::set<double> cands(s.begin(), s.end());
    cands.insert(0.0);
    cands.insert(1.0);
    MetricRow prev = compute_metrics(s, y, 1.0);
    for (auto it = cands.rbegin(); it != cands.rend(); ++it) {
      const auto m = compute_metrics(s, y, *it);
      CHECK(m.kkd >= prev.kkd);
      CHECK(m.ysl <= prev.ysl);
      prev = m;
    }
  }
}

TEST_CASE("undersampling") {
  std::vector<std::size_t> ids(100);
  std::vector<Label> y(100, Label::Stable);
  for (std::size_t i = 0; i < 100; ++i) ids[i] = 1000 + i;
  for (std::size_t i = 0; i < 10; ++i) y[i * 7] = Label::Unstable;
  const auto out = undersample_balance(ids, y, 4);
  CHECK(out.size() == 20);
  CHECK(std::is_sorted(out.begin(), out.end()));
  CHECK(std::set<std::size_t>(out.begin(), out.end()).size() == 20);
  for (std::size_t i = 0; i < 10; ++i) CHECK(std::binary_search(out.begin(), out.end(), ids[i * 7]));
  CHECK(undersample_balance(ids, y, 4) == out);
  CHECK(undersample_balance(ids, y, 5) != out);
  const std::vector<Label> all_stable(100, Label::Stable);
  CHECK_THROWS_AS(undersample_balance(ids, all_stable, 1), Error);

  // 10% unstable at larger scale: output is a fifth of the input
  std::vector<std::size_t> big(5000);
  std::vector<Label> by(5000, Label::Stable);
  for (std::size_t i = 0; i < 5000; ++i) {
    big[i] = i;
    if (i % 10 == 3) by[i] = Label::Unstable;
  }
  const auto b = undersample_balance(big, by, 9);
  CHECK(b.size() * 5 == big.size());
  long unstable = 0;
  for (auto i : b) unstable += by[i] == Label::Unstable;
  CHECK(unstable * 2 == static_cast<long>(b.size()));
}

TEST_CASE("report rendering") {
  std::vector<ReportRow> rows{{"day1", {0.25, 98.0, 50.0, 70.0, 80.0}, false},
                              {"day2", {0.5, 90.0, 10.0, 20.0, 30.0}, true}};
  const auto csv = report_csv(rows, "date");
  CHECK(csv == "date,threshold,kkd,ryd,ysl,acc\nday1,0.25,98.00,50.00,70.00,80.00\nday2,0.5,90.00,10.00,20.00,30.00\n");
  const auto table = report_table(rows, "date");
  CHECK(table.find("kkd") != std::string::npos);
  CHECK(table.find("(infeasible)") != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 3);
}
