#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gridstab/error.hpp"
#include "support.hpp"

using namespace gs_test;

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> column(const Snapshot& s, int col) {
  std::vector<double> out;
  for (std::size_t i = 0; i < s.bus_count(); ++i) out.push_back(s.bus(i, col));
  return out;
}

bool same_network(const Network& a, const Network& b) {
  if (a.bus_count() != b.bus_count() || a.element_count() != b.element_count()) return false;
  for (std::size_t k = 0; k < a.element_count(); ++k) {
    const auto &x = a.elements[k], &y = b.elements[k];
    if (x.kind != y.kind || x.from_bus != y.from_bus || x.to_bus != y.to_bus || x.rating != y.rating ||
        x.reactance != y.reactance)
      return false;
  }
  for (std::size_t i = 0; i < a.bus_count(); ++i)
    if (a.buses[i].p_gen_max != b.buses[i].p_gen_max || a.buses[i].region != b.buses[i].region) return false;
  return true;
}

}  // namespace

TEST_CASE("network generator bounds") {
  SynthConfig c;
  c.n_bus = 10;
  c.seed = 1;
  auto net = generate_network(c);
  CHECK(net.bus_count() == 10);
  CHECK(net.element_count() >= 9);
  CHECK(net.element_count() <= 14);
  CHECK(validate_network(net).empty());

  c.n_bus = 2;
  CHECK(generate_network(c).element_count() == 1);

  c.n_bus = 300;
  auto big = generate_network(c);
  CHECK(validate_network(big).empty());
  const double mean_degree = 2.0 * static_cast<double>(big.element_count()) / 300.0;
  CHECK(mean_degree >= 2.0);
  CHECK(mean_degree <= 3.0);
  CHECK(same_network(big, generate_network(c)));
  c.seed = 2;
  CHECK_FALSE(same_network(big, generate_network(c)));
}

TEST_CASE("days: slot count, correlation, zero noise") {
  SynthConfig c;
  c.n_bus = 60;
  c.seed = 3;
  auto net = generate_network(c);
  auto d0 = generate_day(net, 0, c);
  auto d1 = generate_day(net, 1, c);
  REQUIRE(d0.size() == 96);
  REQUIRE(d1.size() == 96);
  double r = 0.0;
  for (int s = 0; s < 96; ++s) r += pearson(column(d0[s], kColPLoad), column(d1[s], kColPLoad));
  CHECK(r / 96.0 > 0.5);
  CHECK(d0[10].bus_states == generate_day(net, 0, c)[10].bus_states);
  CHECK(d0[10].bus_states != d1[10].bus_states);

  c.noise_amplitude = 0.0;
  auto q0 = generate_day(net, 0, c);
  auto q1 = generate_day(net, 1, c);
  for (int s = 0; s < 96; ++s) {
    CHECK(q0[s].bus_states == q1[s].bus_states);
    CHECK(q0[s].element_states == q1[s].element_states);
  }
}

TEST_CASE("fault enumeration counts") {
  std::vector<std::pair<int, int>> lines;
  for (int i = 1; i < 13; ++i) lines.emplace_back(i - 1, i);
  auto net = make_network(13, lines);
  auto snap = flat_snapshot(net);
  CHECK(enumerate_faults(net, snap).size() == 12);
  std::size_t total = 0;
  for (int d = 0; d < 7; ++d)
    for (int s = 0; s < 96; ++s) total += enumerate_faults(net, snap).size();
  CHECK(total == 8064);

  for (auto& e : net.elements) e.kind = ElementKind::Transformer;
  CHECK(enumerate_faults(net, snap).empty());
}

TEST_CASE("oracle basics") {
  SynthConfig c;
  c.n_bus = 40;
  c.days = 1;
  c.seed = 9;
  auto net = generate_network(c);
  auto day = generate_day(net, 0, c);
  const auto latent = latent_susceptibility(net, c);
  for (std::size_t k = 0; k < net.element_count(); ++k) {
    CHECK(latent[k] >= 0.0);
    CHECK(latent[k] <= 1.0);
    if (net.elements[k].kind != ElementKind::AcLine) CHECK(latent[k] == 0.0);
  }
  StabilityOracle oracle(net, latent, c.oracle_weights);
  oracle.calibrate(day, 0.1);

  const int line = net.ac_line_ids().front();
  CHECK(oracle.label(day[50], line) == oracle.label(day[50], line));
  CHECK(oracle.score(day[50], line) == oracle.score(day[50], line));

  // no load, no flows and a zero latent factor
  auto quiet = flat_snapshot(net);
  std::vector<double> zero(net.element_count(), 0.0);
  StabilityOracle calm(net, zero, c.oracle_weights);
  calm.calibrate(day, 0.1);
  for (int id : net.ac_line_ids()) CHECK(calm.label(quiet, id) == Label::Stable);

  for (const auto& e : net.elements)
    if (e.kind != ElementKind::AcLine) CHECK_THROWS_AS(oracle.terms(day[0], e.id), Error);
}

TEST_CASE("oracle overload term depends on topology") {
  SynthConfig c;
  c.n_bus = 60;
  c.seed = 4;
  auto net = generate_network(c);
  const auto snap = generate_day(net, 0, c)[78];
  const auto latent = latent_susceptibility(net, c);
  const StabilityOracle base(net, latent, c.oracle_weights);
  const auto nb = neighbor_lists(net);

  int changed = 0;
  for (int fault : net.ac_line_ids()) {
    const auto& f = net.elements[fault];
    const auto dist = hop_distances(nb, {f.from_bus, f.to_bus});
    // move one far line so it touches the faulted line's from bus
    for (const auto& l : net.elements) {
      if (l.kind != ElementKind::AcLine || dist[l.from_bus] < 3 || dist[l.to_bus] < 3) continue;
      Network moved = net;
      moved.elements[l.id].from_bus = f.from_bus;
      if (!validate_network(moved).empty()) continue;
      const StabilityOracle other(moved, latent, c.oracle_weights);
      if (other.terms(snap, fault).local_overload != base.terms(snap, fault).local_overload) ++changed;
      break;
    }
    if (changed > 0) break;
  }
  CHECK(changed > 0);
}

TEST_CASE("full default dataset: unstable share and determinism") {
  SynthConfig c;
  const auto ds = synthesize(c);
  REQUIRE(ds.snapshots.size() == 8u * 96u);
  REQUIRE(ds.faults.size() == 8u * 96u * ds.network.ac_line_ids().size());
  std::size_t unstable = 0;
  for (const auto& f : ds.faults) unstable += f.label == Label::Unstable;
  const double rate = static_cast<double>(unstable) / static_cast<double>(ds.faults.size());
  CHECK(rate >= 0.08);
  CHECK(rate <= 0.12);

  const auto again = synthesize(c);
  CHECK(same_network(ds.network, again.network));
  bool same = true;
  for (std::size_t i = 0; i < ds.faults.size(); ++i) same = same && ds.faults[i].label == again.faults[i].label;
  CHECK(same);
  CHECK(ds.snapshots.back().bus_states == again.snapshots.back().bus_states);
}

TEST_CASE("synth config validation") {
  SynthConfig c;
  c.n_bus = 5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = SynthConfig{};
  c.target_unstable_rate = 0.7;
  CHECK_THROWS_AS(c.validate(), Error);
  c = SynthConfig{};
  c.noise_amplitude = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK_NOTHROW(SynthConfig{}.validate());
}
