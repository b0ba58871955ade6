#pragma once

#include <memory>
#include <vector>

#include "gridstab/features.hpp"
#include "gridstab/grid_model.hpp"
#include "gridstab/rng.hpp"
#include "gridstab/synth.hpp"

namespace gs_test {

using namespace gridstab;

inline Network make_network(int n_bus, const std::vector<std::pair<int, int>>& lines) {
  Network net;
  for (int i = 0; i < n_bus; ++i) {
    Bus b;
    b.id = i;
    net.buses.push_back(b);
  }
  for (std::size_t k = 0; k < lines.size(); ++k) {
    Element e;
    e.id = static_cast<int>(k);
    e.from_bus = lines[k].first;
    e.to_bus = lines[k].second;
    e.rating = 100.0;
    net.elements.push_back(e);
  }
  return net;
}

// Random connected graph: spanning tree plus `extra` chords (duplicates allowed).
inline Network random_network(Rng& rng, int n_bus, int extra) {
  std::vector<std::pair<int, int>> lines;
  for (int i = 1; i < n_bus; ++i) lines.emplace_back(static_cast<int>(rng.below(i)), i);
  for (int k = 0; k < extra && n_bus > 1; ++k) {
    const int a = static_cast<int>(rng.below(n_bus));
    int b = static_cast<int>(rng.below(n_bus - 1));
    if (b >= a) ++b;
    lines.emplace_back(a, b);
  }
  return make_network(n_bus, lines);
}

inline Snapshot flat_snapshot(const Network& net) {
  Snapshot s;
  s.bus_states.assign(net.bus_count() * kBusStateDim, 0.0);
  s.element_states.assign(net.element_count() * 2, 0.0);
  for (std::size_t i = 0; i < net.bus_count(); ++i) s.bus(i, kColVoltage) = 1.0;
  return s;
}

struct Fixture {
  std::shared_ptr<const Dataset> dataset;
  FeatureSet features;
};

// Small synthetic grid shared by the model-level tests.
inline const Fixture& small_fixture() {
  static const Fixture f = [] {
    SynthConfig c;
    c.n_bus = 20;
    c.days = 3;
    c.slots_per_day = 12;
    c.seed = 5;
    auto ds = std::make_shared<const Dataset>(synthesize(c));
    Fixture out{ds, featurize(ds, GlobalFeatureSpec::full(c.n_regions), 1)};
    return out;
  }();
  return f;
}

// Linearly separable set: one snapshot per sample, label = [w . x > 0] on the
// global vector with a margin, small random local graphs.
inline FeatureSet separable_toy(std::size_t n, std::uint64_t seed, std::size_t dim = 12) {
  Rng rng(seed);
  FeatureSet fs;
  for (std::size_t k = 0; k < dim; ++k)
    fs.spec.features.push_back({static_cast<Quantity>(k % kQuantityCount), static_cast<StatKind>(k / kQuantityCount)});
  fs.spec_hash = fs.spec.hash();
  fs.n_elements = 10;
  fs.slots_per_day = static_cast<int>(n);
  std::vector<double> w(dim);
  for (auto& v : w) v = rng.normal();
  std::vector<LocalGraph> graphs;
  while (fs.samples.size() < n) {
    std::vector<double> x(dim);
    double dot = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      x[k] = rng.normal();
      dot += w[k] * x[k];
    }
    if (std::abs(dot) < 0.5) continue;
    const int i = static_cast<int>(fs.samples.size());
    fs.samples.push_back({0, i, static_cast<int>(rng.below(10)), dot > 0 ? Label::Unstable : Label::Stable, i});
    fs.global.push_back(std::move(x));
    LocalGraph g;
    g.fault_element_id = fs.samples.back().element_id;
    const int nodes = 3 + static_cast<int>(rng.below(6));
    g.node_features = Matrix::Zero(kLocalNodes, kNodeFeatureDim);
    g.node_mask.assign(kLocalNodes, 0);
    for (int v = 0; v < nodes; ++v) {
      g.bus_ids.push_back(v);
      g.node_mask[v] = 1;
      for (int c = 0; c < kNodeFeatureDim; ++c) g.node_features(v, c) = rng.uniform(-1.0, 1.0);
      if (v > 0) g.edges.emplace_back(static_cast<int>(rng.below(v)), v);
    }
    graphs.push_back(std::move(g));
  }
  fs.local = std::make_shared<StoredLocalSource>(std::move(graphs));
  return fs;
}

}  // namespace gs_test
