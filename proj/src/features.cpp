#include "gridstab/features.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <set>
#include <thread>

#include "gridstab/error.hpp"

namespace gridstab {
namespace {

constexpr const char* kStatNames[kStatCount] = {"Max",    "Min", "Mean", "Sd",  "Skew",   "Kurt", "Median",
                                                "Msd",    "Q1",  "Q3",   "Mad", "Interq", "Mj10", "Mj10s"};
constexpr const char* kQuantityNames[kQuantityCount] = {"V",   "theta", "P_G",  "Q_G",  "gen_pf", "P_L",  "Q_L",
                                                        "load_pf", "P_AC", "Q_AC", "P_DC", "Q_DC", "Q_PC", "Q_PL"};

// Type-7 (linear interpolation) quantile of sorted data.
double quantile_sorted(const std::vector<double>& s, double p) {
  const double h = (static_cast<double>(s.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= s.size()) return s.back();
  return s[lo] + (h - static_cast<double>(lo)) * (s[lo + 1] - s[lo]);
}

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double finite_or_zero(double x) { return std::isfinite(x) ? x : 0.0; }

}  // namespace

const char* to_string(StatKind kind) { return kStatNames[static_cast<int>(kind)]; }

StatKind stat_kind_from_string(const std::string& s) {
  for (int i = 0; i < kStatCount; ++i)
    if (s == kStatNames[i]) return static_cast<StatKind>(i);
  fail(ErrorCode::Format, "unknown statistic '" + s + "'");
}

const char* to_string(Quantity q) { return kQuantityNames[static_cast<int>(q)]; }

Quantity quantity_from_string(const std::string& s) {
  for (int i = 0; i < kQuantityCount; ++i)
    if (s == kQuantityNames[i]) return static_cast<Quantity>(i);
  fail(ErrorCode::Format, "unknown quantity tag '" + s + "'");
}

std::array<double, kStatCount> summarize(std::span<const double> values) {
  if (values.empty()) fail(ErrorCode::InvalidArgument, "statistic of an empty value list");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  const double nd = static_cast<double>(n);

  std::array<double, kStatCount> out{};
  auto at = [&](StatKind k) -> double& { return out[static_cast<int>(k)]; };

  double sum = 0.0;
  for (double x : s) sum += x;
  const double mean = sum / nd;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : s) {
    const double d = x - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  at(StatKind::Max) = s.back();
  at(StatKind::Min) = s.front();
  at(StatKind::Mean) = mean;
  at(StatKind::Sd) = n > 1 ? std::sqrt(m2 / (nd - 1.0)) : 0.0;

  // Constant input leaves only rounding noise in the central moments.
  const double scale = std::max(std::abs(s.front()), std::abs(s.back()));
  const double pm2 = m2 / nd;
  if (pm2 > 1e-24 * scale * scale && pm2 > 0.0) {
    at(StatKind::Skew) = (m3 / nd) / std::pow(pm2, 1.5);
    at(StatKind::Kurt) = (m4 / nd) / (pm2 * pm2) - 3.0;
  }

  const double median = quantile_sorted(s, 0.5);
  at(StatKind::Median) = median;
  at(StatKind::Q1) = quantile_sorted(s, 0.25);
  at(StatKind::Q3) = quantile_sorted(s, 0.75);
  at(StatKind::Interq) = at(StatKind::Q3) - at(StatKind::Q1);

  std::vector<double> dev(n);
  for (std::size_t i = 0; i < n; ++i) dev[i] = std::abs(s[i] - median);
  std::sort(dev.begin(), dev.end());
  at(StatKind::Mad) = quantile_sorted(dev, 0.5);
  at(StatKind::Msd) = 1.4826 * at(StatKind::Mad);

  const std::size_t cut = n / 10;
  std::span<const double> trimmed(s.data() + cut, n - 2 * cut);
  double tsum = 0.0;
  for (double x : trimmed) tsum += x;
  at(StatKind::Mj10) = tsum / static_cast<double>(trimmed.size());
  at(StatKind::Mj10s) = sample_sd(trimmed);

  for (auto& v : out) v = finite_or_zero(v);
  return out;
}

double compute_statistic(std::span<const double> values, StatKind kind) {
  return summarize(values)[static_cast<int>(kind)];
}

GlobalFeatureSpec GlobalFeatureSpec::full(int n_regions) {
  GlobalFeatureSpec spec;
  for (int r = kWholeGrid; r < n_regions; ++r)
    for (int q = 0; q < kQuantityCount; ++q)
      for (int k = 0; k < kStatCount; ++k)
        spec.features.push_back({static_cast<Quantity>(q), static_cast<StatKind>(k), r});
  return spec;
}

void GlobalFeatureSpec::validate() const {
  std::set<std::tuple<int, int, int>> seen;
  for (const auto& f : features)
    if (!seen.insert({static_cast<int>(f.quantity), static_cast<int>(f.stat), f.region}).second)
      fail(ErrorCode::InvalidArgument, std::string("duplicate global feature (") + to_string(f.quantity) + ", " +
                                           to_string(f.stat) + ", " + std::to_string(f.region) + ")");
}

std::string GlobalFeatureSpec::canonical() const {
  std::string s;
  for (const auto& f : features) {
    s += to_string(f.quantity);
    s += ':';
    s += to_string(f.stat);
    s += ':';
    s += std::to_string(f.region);
    s += ';';
  }
  return s;
}

std::uint64_t GlobalFeatureSpec::hash() const {
  // FNV-1a, 64 bit; also folds in the fixed local layout.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const std::string& s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  };
  mix(canonical());
  mix("local:" + std::to_string(kLocalNodes) + "x" + std::to_string(kNodeFeatureDim) + "+" + std::to_string(kEmbedDim));
  return h;
}

std::vector<double> quantity_values(const Network& net, const Snapshot& snap, Quantity q, int region) {
  if (snap.bus_count() != net.bus_count())
    fail(ErrorCode::InvalidArgument, "snapshot bus count does not match the network");
  std::vector<double> v;
  auto in_region = [&](int bus) { return region == kWholeGrid || net.buses[bus].region == region; };
  auto bus_col = [&](int col, auto&& keep) {
    for (std::size_t i = 0; i < net.bus_count(); ++i)
      if (in_region(static_cast<int>(i)) && keep(net.buses[i])) v.push_back(snap.bus(i, col));
  };
  auto branch = [&](ElementKind kind, bool reactive) {
    for (std::size_t k = 0; k < net.element_count(); ++k) {
      const auto& e = net.elements[k];
      if (e.kind == kind && in_region(e.from_bus)) v.push_back(reactive ? snap.q_flow(k) : snap.p_flow(k));
    }
  };
  auto all = [](const Bus&) { return true; };
  auto gen = [](const Bus& b) { return b.p_gen_max > 0.0; };
  auto load = [](const Bus& b) { return b.p_load > 0.0; };
  switch (q) {
    case Quantity::V: bus_col(kColVoltage, all); break;
    case Quantity::Theta: bus_col(kColAngle, all); break;
    case Quantity::PGen: bus_col(kColPGen, gen); break;
    case Quantity::QGen: bus_col(kColQGen, gen); break;
    case Quantity::GenPf: bus_col(kColGenPf, gen); break;
    case Quantity::PLoad: bus_col(kColPLoad, load); break;
    case Quantity::QLoad: bus_col(kColQLoad, load); break;
    case Quantity::LoadPf: bus_col(kColLoadPf, load); break;
    case Quantity::PAc: branch(ElementKind::AcLine, false); break;
    case Quantity::QAc: branch(ElementKind::AcLine, true); break;
    case Quantity::PDc: branch(ElementKind::DcLine, false); break;
    case Quantity::QDc: branch(ElementKind::DcLine, true); break;
    case Quantity::QCap: bus_col(kColQCap, [](const Bus& b) { return b.q_cap > 0.0; }); break;
    case Quantity::QReactor: bus_col(kColQReactor, [](const Bus& b) { return b.q_reactor > 0.0; }); break;
  }
  return v;
}

std::vector<double> global_stats(const Network& net, const Snapshot& snap, const GlobalFeatureSpec& spec) {
  std::map<std::pair<int, int>, std::array<double, kStatCount>> cache;
  std::vector<double> out;
  out.reserve(spec.size());
  for (const auto& f : spec.features) {
    const std::pair<int, int> key{static_cast<int>(f.quantity), f.region};
    auto it = cache.find(key);
    if (it == cache.end()) {
      const auto values = quantity_values(net, snap, f.quantity, f.region);
      std::array<double, kStatCount> stats{};
      if (!values.empty()) stats = summarize(values);
      it = cache.emplace(key, stats).first;
    }
    out.push_back(it->second[static_cast<int>(f.stat)]);
  }
  return out;
}

Matrix global_raw(const Snapshot& snap) {
  const auto rows = static_cast<Eigen::Index>(snap.bus_count());
  return Eigen::Map<const Matrix>(snap.bus_states.data(), rows, kBusStateDim);
}

Matrix LocalGraph::adjacency() const {
  Matrix a = Matrix::Zero(kLocalNodes, kLocalNodes);
  for (auto [i, j] : edges) {
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  return a;
}

LocalFeaturizer::LocalFeaturizer(const Network& net) : network_(&net) {
  const int n = static_cast<int>(net.bus_count());
  const auto nb = neighbor_lists(net);
  incident_ac_.assign(n, {});
  std::vector<std::array<int, 3>> kind_degree(n, {0, 0, 0});
  for (const auto& e : net.elements) {
    const int kind = static_cast<int>(e.kind);
    for (int end : {e.from_bus, e.to_bus}) {
      ++kind_degree[end][kind];
      if (e.kind == ElementKind::AcLine) incident_ac_[end].push_back(e.id);
    }
  }

  // Bus-level static descriptors shared by every subgraph.
  std::vector<double> two_hop(n), clustering(n), nb_mean(n), nb_max(n), nb_min(n), nb_sd(n);
  std::vector<std::set<int>> nb_set(n);
  for (int u = 0; u < n; ++u) nb_set[u] = std::set<int>(nb[u].begin(), nb[u].end());
  for (int u = 0; u < n; ++u) {
    std::set<int> reach(nb[u].begin(), nb[u].end());
    for (int v : nb[u]) reach.insert(nb[v].begin(), nb[v].end());
    reach.erase(u);
    two_hop[u] = static_cast<double>(reach.size());

    const auto k = nb[u].size();
    if (k >= 2) {
      int links = 0;
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b) links += nb_set[nb[u][a]].count(nb[u][b]) ? 1 : 0;
      clustering[u] = 2.0 * links / static_cast<double>(k * (k - 1));
    }
    if (k > 0) {
      double s = 0.0, mx = -1e300, mn = 1e300;
      for (int v : nb[u]) {
        const double d = net.buses[v].degree;
        s += d;
        mx = std::max(mx, d);
        mn = std::min(mn, d);
      }
      const double mean = s / static_cast<double>(k);
      double ss = 0.0;
      for (int v : nb[u]) ss += (net.buses[v].degree - mean) * (net.buses[v].degree - mean);
      nb_mean[u] = mean;
      nb_max[u] = mx;
      nb_min[u] = mn;
      nb_sd[u] = std::sqrt(ss / static_cast<double>(k));
    }
  }

  structures_.resize(net.element_count());
  std::vector<int> local_index(n, -1);
  for (const auto& e : net.elements) {
    if (e.kind != ElementKind::AcLine) continue;
    Structure st;
    std::vector<int> level(n, -1);
    std::vector<int> queue{e.from_bus, e.to_bus};
    level[e.from_bus] = 0;
    level[e.to_bus] = 0;
    st.buses = queue;
    for (std::size_t head = 0; head < queue.size() && st.buses.size() < kLocalNodes; ++head) {
      const int u = queue[head];
      for (int v : nb[u]) {
        if (level[v] >= 0) continue;
        level[v] = level[u] + 1;
        queue.push_back(v);
        st.buses.push_back(v);
        if (st.buses.size() == kLocalNodes) break;
      }
    }
    const int m = static_cast<int>(st.buses.size());
    for (int i = 0; i < m; ++i) local_index[st.buses[i]] = i;
    std::vector<int> local_degree(m, 0), outside(m, 0);
    for (int i = 0; i < m; ++i) {
      for (int v : nb[st.buses[i]]) {
        const int j = local_index[v];
        if (j < 0) {
          ++outside[i];
          continue;
        }
        ++local_degree[i];
        if (j > i) st.edges.emplace_back(i, j);
      }
    }
    std::sort(st.edges.begin(), st.edges.end());

    st.static_features = Matrix::Zero(m, kNodeFeatureDim);
    for (int i = 0; i < m; ++i) {
      const int b = st.buses[i];
      auto row = st.static_features.row(i);
      row(kHopOffset + std::min(level[b], kHopBins - 1)) = 1.0;
      row(kEndpointOffset) = b == e.from_bus ? 1.0 : 0.0;
      row(kEndpointOffset + 1) = b == e.to_bus ? 1.0 : 0.0;
      const double deg[12] = {static_cast<double>(net.buses[b].degree),
                              static_cast<double>(kind_degree[b][0]),
                              static_cast<double>(kind_degree[b][1]),
                              static_cast<double>(kind_degree[b][2]),
                              static_cast<double>(local_degree[i]),
                              nb_mean[b],
                              nb_max[b],
                              nb_min[b],
                              nb_sd[b],
                              two_hop[b],
                              static_cast<double>(outside[i]),
                              clustering[b]};
      for (int k = 0; k < 12; ++k) row(kDegreeOffset + k) = deg[k];
    }
    for (int b : st.buses) local_index[b] = -1;
    structures_[e.id] = std::move(st);
  }
}

LocalGraph LocalFeaturizer::build(const Snapshot& snap, int element_id) const {
  if (!network_->is_faultable(element_id))
    fail(ErrorCode::InvalidArgument, "element " + std::to_string(element_id) + " is not an AC line");
  const auto& st = structures_[element_id];
  LocalGraph g;
  g.fault_element_id = element_id;
  g.bus_ids = st.buses;
  g.edges = st.edges;
  g.node_features = Matrix::Zero(kLocalNodes, kNodeFeatureDim);
  g.node_mask.assign(kLocalNodes, 0);
  const int m = static_cast<int>(st.buses.size());
  g.node_features.topRows(m) = st.static_features;
  for (int i = 0; i < m; ++i) {
    const int b = st.buses[i];
    g.node_mask[i] = 1;
    auto row = g.node_features.row(i);
    for (int c = 0; c < kBusStateDim; ++c) row(c) = snap.bus(b, c);

    const auto& lines = incident_ac_[b];
    if (lines.empty()) continue;
    for (int q = 0; q < 4; ++q) {
      double sum = 0.0, mx = -1e300, mn = 1e300;
      for (int id : lines) {
        const auto& el = network_->elements[id];
        const double p = std::abs(snap.p_flow(id));
        const double val = q == 0 ? p : q == 1 ? std::abs(snap.q_flow(id)) : q == 2 ? p / el.rating : el.rating;
        sum += val;
        mx = std::max(mx, val);
        mn = std::min(mn, val);
      }
      const double cnt = static_cast<double>(lines.size());
      const double mean = sum / cnt;
      double ss = 0.0;
      for (int id : lines) {
        const auto& el = network_->elements[id];
        const double p = std::abs(snap.p_flow(id));
        const double val = q == 0 ? p : q == 1 ? std::abs(snap.q_flow(id)) : q == 2 ? p / el.rating : el.rating;
        ss += (val - mean) * (val - mean);
      }
      const int base = kIncidentOffset + 6 * q;
      row(base + 0) = sum;
      row(base + 1) = mean;
      row(base + 2) = mx;
      row(base + 3) = mn;
      row(base + 4) = std::sqrt(ss / cnt);
      row(base + 5) = mx - mn;
    }
  }
  return g;
}

LocalGraph local_subgraph(const Network& network, const Snapshot& snapshot, int element_id) {
  return LocalFeaturizer(network).build(snapshot, element_id);
}

std::vector<std::size_t> FeatureSet::day_indices(int day, int slot_begin, int slot_end) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.day == day && s.slot >= slot_begin && (slot_end < 0 || s.slot < slot_end)) out.push_back(i);
  }
  return out;
}

std::vector<int> FeatureSet::days() const {
  std::set<int> d;
  for (const auto& s : samples) d.insert(s.day);
  return {d.begin(), d.end()};
}

namespace {

class DatasetLocalSource : public LocalSource {
 public:
  DatasetLocalSource(std::shared_ptr<const Dataset> ds, std::vector<std::pair<int, int>> keys)
      : dataset_(std::move(ds)), featurizer_(dataset_->network), keys_(std::move(keys)) {}

  LocalGraph graph(std::size_t sample) const override {
    const auto [snapshot, element] = keys_.at(sample);
    return featurizer_.build(dataset_->snapshots[snapshot], element);
  }

 private:
  std::shared_ptr<const Dataset> dataset_;
  LocalFeaturizer featurizer_;
  std::vector<std::pair<int, int>> keys_;  // (snapshot index, element id)
};

}  // namespace

FeatureSet featurize(std::shared_ptr<const Dataset> ds, const GlobalFeatureSpec& spec, unsigned threads) {
  spec.validate();
  FeatureSet fs;
  fs.spec = spec;
  fs.spec_hash = spec.hash();
  fs.n_elements = static_cast<int>(ds->network.element_count());
  fs.slots_per_day = ds->config.slots_per_day;

  std::vector<std::pair<int, int>> keys;
  keys.reserve(ds->faults.size());
  fs.samples.reserve(ds->faults.size());
  for (const auto& f : ds->faults) {
    const int snap = f.day * ds->config.slots_per_day + f.slot;
    if (snap < 0 || static_cast<std::size_t>(snap) >= ds->snapshots.size())
      fail(ErrorCode::InvalidArgument, "fault refers to a missing snapshot");
    fs.samples.push_back({f.day, f.slot, f.element_id, f.label, snap});
    keys.emplace_back(snap, f.element_id);
  }

  const std::size_t n_snap = ds->snapshots.size();
  fs.global.resize(n_snap);
  fs.raw.resize(n_snap);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, n_snap)));
  std::vector<std::exception_ptr> errors(threads);
  auto work = [&](unsigned t) {
    try {
      for (std::size_t i = t; i < n_snap; i += threads) {
        fs.global[i] = global_stats(ds->network, ds->snapshots[i], spec);
        fs.raw[i] = global_raw(ds->snapshots[i]);
      }
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  fs.local = std::make_shared<DatasetLocalSource>(std::move(ds), std::move(keys));
  return fs;
}

namespace {

class SubsetLocalSource : public LocalSource {
 public:
  SubsetLocalSource(std::shared_ptr<const LocalSource> parent, std::vector<std::size_t> map)
      : parent_(std::move(parent)), map_(std::move(map)) {}
  LocalGraph graph(std::size_t sample) const override { return parent_->graph(map_.at(sample)); }

 private:
  std::shared_ptr<const LocalSource> parent_;
  std::vector<std::size_t> map_;
};

}  // namespace

FeatureSet select_days(const FeatureSet& fs, const std::vector<int>& days) {
  const std::set<int> keep(days.begin(), days.end());
  FeatureSet out;
  out.spec = fs.spec;
  out.spec_hash = fs.spec_hash;
  out.n_elements = fs.n_elements;
  out.slots_per_day = fs.slots_per_day;
  std::map<int, int> snap_map;
  std::vector<std::size_t> parent;
  for (std::size_t i = 0; i < fs.samples.size(); ++i) {
    SampleMeta m = fs.samples[i];
    if (!keep.count(m.day)) continue;
    auto [it, fresh] = snap_map.emplace(m.snapshot, static_cast<int>(out.global.size()));
    if (fresh) {
      out.global.push_back(fs.global.at(m.snapshot));
      if (fs.has_raw()) out.raw.push_back(fs.raw.at(m.snapshot));
    }
    m.snapshot = it->second;
    out.samples.push_back(m);
    parent.push_back(i);
  }
  if (out.samples.empty()) fail(ErrorCode::InvalidArgument, "no samples on the selected days");
  out.local = std::make_shared<SubsetLocalSource>(fs.local, std::move(parent));
  return out;
}

}  // namespace gridstab
