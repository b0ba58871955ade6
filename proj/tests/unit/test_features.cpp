#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "gridstab/error.hpp"
#include "support.hpp"

using namespace gs_test;

namespace {

// Straightforward textbook definitions, written independently of summarize().
double ref_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const std::size_t i = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] * (1.0 - frac) + v[i + 1] * frac : v[i];
}

double ref_mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double ref_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = ref_mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double ref_moment(const std::vector<double>& v, int k) {
  const double m = ref_mean(v);
  double s = 0;
  for (double x : v) s += std::pow(x - m, k);
  return s / static_cast<double>(v.size());
}

double reference(const std::vector<double>& v, StatKind kind) {
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  const double med = ref_quantile(v, 0.5);
  std::vector<double> dev;
  for (double x : v) dev.push_back(std::abs(x - med));
  const std::size_t cut = v.size() / 10;
  const std::vector<double> trimmed(sorted.begin() + static_cast<long>(cut), sorted.end() - static_cast<long>(cut));
  switch (kind) {
    case StatKind::Max: return *std::max_element(v.begin(), v.end());
    case StatKind::Min: return *std::min_element(v.begin(), v.end());
    case StatKind::Mean: return ref_mean(v);
    case StatKind::Sd: return ref_sd(v);
    case StatKind::Skew: return ref_moment(v, 3) / std::pow(ref_moment(v, 2), 1.5);
    case StatKind::Kurt: return ref_moment(v, 4) / std::pow(ref_moment(v, 2), 2) - 3.0;
    case StatKind::Median: return med;
    case StatKind::Msd: return 1.4826 * ref_quantile(dev, 0.5);
    case StatKind::Q1: return ref_quantile(v, 0.25);
    case StatKind::Q3: return ref_quantile(v, 0.75);
    case StatKind::Mad: return ref_quantile(dev, 0.5);
    case StatKind::Interq: return ref_quantile(v, 0.75) - ref_quantile(v, 0.25);
    case StatKind::Mj10: return ref_mean(trimmed);
    case StatKind::Mj10s: return ref_sd(trimmed);
  }
  return NAN;
}

// Reference BFS over the dense adjacency: both endpoints seeded, ascending ids.
std::vector<int> ref_bfs(const Network& net, int element, std::size_t keep) {
  const auto a = build_adjacency(net);
  const auto& e = net.elements[element];
  std::vector<int> order;
  std::vector<bool> seen(net.bus_count(), false);
  std::deque<int> q;
  for (int s : {e.from_bus, e.to_bus}) {
    if (seen[s]) continue;
    seen[s] = true;
    q.push_back(s);
  }
  while (!q.empty() && order.size() < keep) {
    const int u = q.front();
    q.pop_front();
    order.push_back(u);
    for (std::size_t v = 0; v < a.size(); ++v)
      if (a(u, v) && !seen[v]) {
        seen[v] = true;
        q.push_back(static_cast<int>(v));
      }
  }
  return order;
}

}  // namespace

TEST_CASE("statistics: worked values") {
  const std::vector<double> v123{1, 2, 3};
  CHECK(compute_statistic(v123, StatKind::Mean) == 2.0);
  CHECK(compute_statistic(v123, StatKind::Mad) == 1.0);
  std::vector<double> ten(10);
  std::iota(ten.begin(), ten.end(), 0.0);
  CHECK(compute_statistic(ten, StatKind::Mj10) == doctest::Approx(4.5).epsilon(1e-15));
  const std::vector<double> one{3.0};
  CHECK(compute_statistic(one, StatKind::Sd) == 0.0);
  CHECK_THROWS_AS(compute_statistic(std::vector<double>{}, StatKind::Mean), Error);
  const std::vector<double> flat(7, 2.5);
  for (int k = 0; k < kStatCount; ++k) CHECK(std::isfinite(compute_statistic(flat, static_cast<StatKind>(k))));
  CHECK(compute_statistic(flat, StatKind::Skew) == 0.0);
  CHECK(compute_statistic(flat, StatKind::Kurt) == 0.0);
}

TEST_CASE("statistics agree with a naive reference") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-5.0, 5.0);
    const auto all = summarize(v);
    for (int k = 0; k < kStatCount; ++k) {
      const auto kind = static_cast<StatKind>(k);
      const double want = reference(v, kind);
      CAPTURE(to_string(kind));
      CHECK(std::abs(all[k] - want) <= 1e-12 * std::max(1.0, std::abs(want)));
      CHECK(compute_statistic(v, kind) == all[k]);
    }
  }
}

TEST_CASE("stat and quantity names round-trip") {
  for (int k = 0; k < kStatCount; ++k)
    CHECK(stat_kind_from_string(to_string(static_cast<StatKind>(k))) == static_cast<StatKind>(k));
  for (int q = 0; q < kQuantityCount; ++q)
    CHECK(quantity_from_string(to_string(static_cast<Quantity>(q))) == static_cast<Quantity>(q));
  CHECK_THROWS_AS(quantity_from_string("P_X"), Error);
}

TEST_CASE("global feature spec") {
  GlobalFeatureSpec spec;
  for (int q = 0; q < 13; ++q)
    for (int k = 0; k < kStatCount; ++k) spec.features.push_back({static_cast<Quantity>(q), static_cast<StatKind>(k)});
  CHECK(spec.size() == 182);
  CHECK_NOTHROW(spec.validate());
  CHECK(GlobalFeatureSpec::full(2).size() == 3u * 14u * 14u);
  auto dup = spec;
  dup.features.push_back(dup.features.front());
  CHECK_THROWS_AS(dup.validate(), Error);
  CHECK(spec.hash() != dup.hash());
  CHECK(spec.hash() == GlobalFeatureSpec(spec).hash());

  auto net = make_network(4, {{0, 1}, {1, 2}, {2, 3}});
  auto snap = flat_snapshot(net);
  GlobalFeatureSpec vmean{{{Quantity::V, StatKind::Mean, kWholeGrid}}};
  CHECK(global_stats(net, snap, vmean) == std::vector<double>{1.0});
  CHECK(global_stats(net, snap, vmean) == global_stats(net, snap, vmean));
  // degenerate ranges (no generators here) stay finite
  for (double x : global_stats(net, snap, GlobalFeatureSpec::full(1))) CHECK(std::isfinite(x));
}

TEST_CASE("global_raw copies the state matrix") {
  SynthConfig c;
  c.n_bus = 10;
  auto net = generate_network(c);
  auto snap = generate_day(net, 0, c)[0];
  const Matrix raw = global_raw(snap);
  CHECK(raw.rows() == 10);
  CHECK(raw.cols() == 13);
  for (int i = 0; i < 10; ++i) {
    CHECK(raw(i, 0) == snap.bus(i, kColVoltage));
    for (int k = 0; k < kBusStateDim; ++k) CHECK(raw(i, k) == snap.bus(i, k));
  }
  CHECK(7000 * kBusStateDim == 91000);
}

TEST_CASE("bus relabeling: global stats invariant, raw matrix not") {
  SynthConfig c;
  c.n_bus = 30;
  c.seed = 8;
  auto net = generate_network(c);
  auto snap = generate_day(net, 0, c)[40];
  const int n = 30;
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(3);
  rng.shuffle(perm);

  Network pnet = net;
  Snapshot psnap = snap;
  for (int i = 0; i < n; ++i) {
    pnet.buses[perm[i]] = net.buses[i];
    pnet.buses[perm[i]].id = perm[i];
    for (int k = 0; k < kBusStateDim; ++k) psnap.bus(perm[i], k) = snap.bus(i, k);
  }
  for (auto& e : pnet.elements) {
    e.from_bus = perm[e.from_bus];
    e.to_bus = perm[e.to_bus];
  }
  const auto spec = GlobalFeatureSpec::full(c.n_regions);
  const auto a = global_stats(net, snap, spec);
  const auto b = global_stats(pnet, psnap, spec);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-9 * std::max(1.0, std::abs(a[i])));
  CHECK(global_raw(snap) != global_raw(psnap));
}

TEST_CASE("local subgraph on a chain") {
  auto net = make_network(3, {{0, 1}, {1, 2}});
  const auto g = local_subgraph(net, flat_snapshot(net), 0);
  CHECK(g.bus_ids == std::vector<int>{0, 1, 2});
  REQUIRE(g.node_mask.size() == static_cast<std::size_t>(kLocalNodes));
  for (int k = 0; k < kLocalNodes; ++k) CHECK(g.node_mask[k] == (k < 3 ? 1 : 0));
  CHECK(g.node_features.rows() == kLocalNodes);
  CHECK(g.node_features.cols() == kNodeFeatureDim);
  for (int k = 3; k < kLocalNodes; ++k) CHECK(g.node_features.row(k).isZero());
  // endpoint flags and hop one-hot
  CHECK(g.node_features(0, kEndpointOffset) == 1.0);
  CHECK(g.node_features(1, kEndpointOffset + 1) == 1.0);
  CHECK(g.node_features(2, kHopOffset + 1) == 1.0);
  CHECK(kLocalNodes * kNodeFeatureDim + kEmbedDim == 2970);

  auto with_dc = net;
  with_dc.elements[1].kind = ElementKind::DcLine;
  CHECK_THROWS_AS(local_subgraph(with_dc, flat_snapshot(with_dc), 1), Error);
}

TEST_CASE("local subgraph matches a reference BFS and the full adjacency") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 20 + static_cast<int>(rng.below(100));
    auto net = random_network(rng, n, static_cast<int>(rng.below(n / 3 + 1)));
    const auto snap = flat_snapshot(net);
    const auto full = build_adjacency(net);
    LocalFeaturizer lf(net);
    for (int trial_e = 0; trial_e < 5; ++trial_e) {
      const int e = static_cast<int>(rng.below(net.element_count()));
      const auto g = lf.build(snap, e);
      const auto want = ref_bfs(net, e, kLocalNodes);
      CHECK(g.bus_ids == want);
      CHECK(g.real_nodes() == std::min(n, kLocalNodes));
      const Matrix a = g.adjacency();
      for (int i = 0; i < g.real_nodes(); ++i)
        for (int j = 0; j < g.real_nodes(); ++j) CHECK(a(i, j) == full(g.bus_ids[i], g.bus_ids[j]));
      CHECK(a.bottomRows(kLocalNodes - g.real_nodes()).isZero());
      const auto slow = local_subgraph(net, snap, e);
      CHECK(slow.node_features == g.node_features);
      CHECK(slow.edges == g.edges);
    }
  }
}

TEST_CASE("featurize: ordering, threading and day selection") {
  const auto& fx = small_fixture();
  const auto& fs = fx.features;
  const auto& ds = *fx.dataset;
  REQUIRE(fs.samples.size() == ds.faults.size());
  for (std::size_t i = 0; i < fs.samples.size(); i += 17) {
    CHECK(fs.samples[i].element_id == ds.faults[i].element_id);
    CHECK(fs.samples[i].label == ds.faults[i].label);
  }
  CHECK(fs.days() == std::vector<int>{0, 1, 2});
  CHECK(fs.global.size() == ds.snapshots.size());

  auto threaded = featurize(fx.dataset, fs.spec, 3);
  CHECK(threaded.global == fs.global);
  for (std::size_t i = 0; i < fs.samples.size(); i += 29)
    CHECK(threaded.local_graph(i).node_features == fs.local_graph(i).node_features);

  auto sub = select_days(fs, {2});
  CHECK(sub.days() == std::vector<int>{2});
  CHECK(sub.samples.size() == fs.day_indices(2).size());
  const auto idx = fs.day_indices(2);
  for (std::size_t i = 0; i < sub.samples.size(); i += 11) {
    CHECK(sub.global[sub.samples[i].snapshot] == fs.global[fs.samples[idx[i]].snapshot]);
    CHECK(sub.local_graph(i).bus_ids == fs.local_graph(idx[i]).bus_ids);
  }
  CHECK_THROWS_AS(select_days(fs, {9}), Error);
}
