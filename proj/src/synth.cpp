#include "gridstab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "gridstab/error.hpp"
#include "gridstab/log.hpp"
#include "gridstab/rng.hpp"

namespace gridstab {
namespace {


constexpr std::uint64_t kTagNetwork = 1;
constexpr std::uint64_t kTagDayLevel = 2;
constexpr std::uint64_t kTagDay = 3;
constexpr std::uint64_t kTagLatent = 4;
constexpr double kBaseMva = 100.0;

double tan_of_pf(double pf) { return std::tan(std::acos(std::clamp(pf, 0.05, 1.0))); }

// Normalized daily load curve, peak 1.0 in the evening.
double load_curve(int slot, int slots_per_day) {
  const double h = 24.0 * (slot + 0.5) / slots_per_day;
  auto bump = [](double x, double mu, double w) { return std::exp(-((x - mu) / w) * ((x - mu) / w)); };
  const double raw = 0.62 + 0.28 * bump(h, 19.5, 2.6) + 0.16 * bump(h, 11.0, 2.2);
  return raw / 0.9007;
}

// DC power flow on the AC/transformer subgraph, slack at bus 0.
class DcFlow {
 public:
  explicit DcFlow(const Network& net) : n_(static_cast<int>(net.buses.size())) {
    if (n_ < 2) return;
    std::vector<Eigen::Triplet<double>> t;
    for (const auto& e : net.elements) {
      if (e.kind == ElementKind::DcLine) continue;
      const double b = kBaseMva / e.reactance;
      const int i = e.from_bus - 1, j = e.to_bus - 1;
      if (i >= 0) t.emplace_back(i, i, b);
      if (j >= 0) t.emplace_back(j, j, b);
      if (i >= 0 && j >= 0) {
        t.emplace_back(i, j, -b);
        t.emplace_back(j, i, -b);
      }
    }
    Eigen::SparseMatrix<double> lap(n_ - 1, n_ - 1);
    lap.setFromTriplets(t.begin(), t.end());
    solver_.compute(lap);
    if (solver_.info() != Eigen::Success) fail(ErrorCode::Structure, "DC flow matrix is singular (AC graph disconnected?)");
  }

  std::vector<double> angles(const std::vector<double>& injection) const {
    std::vector<double> theta(n_, 0.0);
    if (n_ < 2) return theta;
    Eigen::VectorXd rhs(n_ - 1);
    for (int i = 1; i < n_; ++i) rhs[i - 1] = injection[i];
    Eigen::VectorXd x = solver_.solve(rhs);
    for (int i = 1; i < n_; ++i) theta[i] = x[i - 1];
    return theta;
  }

 private:
  int n_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

struct DayLevel {
  double load = 1.0;
  std::vector<double> region;
};

// AR(1) day-level multipliers, built forward from day 0 so day d is a pure
// function of (seed, d).
DayLevel day_level(const SynthConfig& c, int day) {
  DayLevel lvl;
  lvl.region.assign(std::max(1, c.n_regions), 1.0);
  for (int d = 1; d <= day; ++d) {
    Rng rng(mix_seed(c.seed, kTagDayLevel, static_cast<std::uint64_t>(d)));
    lvl.load = 1.0 + 0.7 * (lvl.load - 1.0) + c.noise_amplitude * 0.01 * rng.normal();
    for (auto& r : lvl.region) r = 1.0 + 0.6 * (r - 1.0) + c.noise_amplitude * 0.02 * rng.normal();
  }
  return lvl;
}

struct Injections {
  std::vector<double> p_load, q_load, p_gen, q_gen, q_cap, q_react;
  std::vector<double> dc_flow;  // per element, zero for non-DC
};

void fill_snapshot(const Network& net, const DcFlow& flow, const Injections& inj, double level, double noise,
                   Rng& rng, Snapshot& snap) {
  const std::size_t n = net.buses.size();
  const std::size_t m = net.elements.size();
  std::vector<double> injection(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) injection[i] = inj.p_gen[i] - inj.p_load[i];
  for (std::size_t k = 0; k < m; ++k) {
    const auto& e = net.elements[k];
    if (e.kind != ElementKind::DcLine) continue;
    injection[e.from_bus] -= inj.dc_flow[k];
    injection[e.to_bus] += inj.dc_flow[k];
  }
  const auto theta = flow.angles(injection);

  snap.bus_states.assign(n * kBusStateDim, 0.0);
  snap.element_states.assign(m * 2, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    const auto& e = net.elements[k];
    const double p = e.kind == ElementKind::DcLine ? inj.dc_flow[k]
                                                   : (theta[e.from_bus] - theta[e.to_bus]) * kBaseMva / e.reactance;
    snap.element_states[2 * k] = p;
    snap.element_states[2 * k + 1] = e.kind == ElementKind::DcLine ? 0.0 : 0.2 * p;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = net.buses[i];
    const double q_net = inj.q_gen[i] + inj.q_cap[i] - inj.q_react[i] - inj.q_load[i];
    snap.bus(i, kColVoltage) = 1.0 + 0.03 * std::tanh(q_net / 100.0) - 0.02 * (level - 0.8) + noise * 0.002 * rng.normal();
    snap.bus(i, kColAngle) = theta[i];
    snap.bus(i, kColPGen) = inj.p_gen[i];
    snap.bus(i, kColQGen) = inj.q_gen[i];
    snap.bus(i, kColGenPf) = b.p_gen_max > 0.0 ? b.gen_pf : 0.0;
    snap.bus(i, kColPLoad) = inj.p_load[i];
    snap.bus(i, kColQLoad) = inj.q_load[i];
    snap.bus(i, kColLoadPf) = b.p_load > 0.0 ? b.load_pf : 0.0;
    snap.bus(i, kColQCap) = inj.q_cap[i];
    snap.bus(i, kColQReactor) = inj.q_react[i];
    snap.bus(i, kColDegree) = b.degree;
  }
  for (std::size_t k = 0; k < m; ++k) {
    const auto& e = net.elements[k];
    if (e.kind != ElementKind::AcLine) continue;
    for (int end : {e.from_bus, e.to_bus}) {
      snap.bus(end, kColPAcSum) += std::abs(snap.element_states[2 * k]);
      snap.bus(end, kColQAcSum) += std::abs(snap.element_states[2 * k + 1]);
    }
  }
}

Injections nominal_injections(const Network& net) {
  const std::size_t n = net.buses.size();
  Injections inj;
  inj.p_load.resize(n);
  inj.q_load.resize(n);
  inj.p_gen.resize(n);
  inj.q_gen.resize(n);
  inj.q_cap.resize(n);
  inj.q_react.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = net.buses[i];
    inj.p_load[i] = b.p_load;
    inj.q_load[i] = b.q_load;
    inj.p_gen[i] = b.p_gen;
    inj.q_gen[i] = b.q_gen;
    inj.q_cap[i] = b.q_cap;
    inj.q_react[i] = 0.0;
  }
  inj.dc_flow.assign(net.elements.size(), 0.0);
  for (std::size_t k = 0; k < net.elements.size(); ++k)
    if (net.elements[k].kind == ElementKind::DcLine) inj.dc_flow[k] = net.elements[k].p_flow;
  return inj;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_bus < 10) fail(ErrorCode::InvalidArgument, "synth.n_bus must be >= 10");
  if (days < 1) fail(ErrorCode::InvalidArgument, "synth.days must be >= 1");
  if (slots_per_day < 1) fail(ErrorCode::InvalidArgument, "synth.slots_per_day must be >= 1");
  if (!(target_unstable_rate > 0.0 && target_unstable_rate < 0.5))
    fail(ErrorCode::InvalidArgument, "synth.target_unstable_rate must lie in (0, 0.5)");
  if (n_regions < 1) fail(ErrorCode::InvalidArgument, "synth.n_regions must be >= 1");
  if (noise_amplitude < 0.0) fail(ErrorCode::InvalidArgument, "synth.noise_amplitude must be >= 0");
  if (chord_ratio < 0.0 || chord_ratio > 1.0) fail(ErrorCode::InvalidArgument, "synth.chord_ratio must lie in [0, 1]");
  if (weak_fraction < 0.0 || weak_fraction > 1.0) fail(ErrorCode::InvalidArgument, "synth.weak_fraction must lie in [0, 1]");
}

Network generate_network(const SynthConfig& c) {
  if (c.n_bus < 2) fail(ErrorCode::InvalidArgument, "generate_network needs at least 2 buses");
  Rng rng(mix_seed(c.seed, kTagNetwork));
  const int n = c.n_bus;
  const int regions = std::max(1, c.n_regions);

  Network net;
  net.buses.resize(n);
  double total_load = 0.0;
  for (int i = 0; i < n; ++i) {
    Bus& b = net.buses[i];
    b.id = i;
    b.region = static_cast<int>(static_cast<long long>(i) * regions / n);
    if (rng.uniform() < 0.7) {
      b.p_load = rng.uniform(20.0, 150.0);
      b.load_pf = rng.uniform(0.88, 0.98);
      b.q_load = b.p_load * tan_of_pf(b.load_pf);
      total_load += b.p_load;
    }
    if (i == 0 || rng.uniform() < 0.25) {
      b.p_gen_max = rng.uniform(150.0, 600.0);
      b.gen_pf = rng.uniform(0.85, 0.95);
    }
    if (rng.uniform() < 0.15) b.q_cap = rng.uniform(10.0, 60.0);
    if (rng.uniform() < 0.10) b.q_reactor = rng.uniform(10.0, 40.0);
  }
  // Installed capacity 1.6x the nominal peak load.
  double cap = 0.0;
  for (const auto& b : net.buses) cap += b.p_gen_max;
  const double scale = cap > 0.0 && total_load > 0.0 ? 1.6 * total_load / cap : 1.0;
  for (auto& b : net.buses) b.p_gen_max *= scale;

  std::set<std::pair<int, int>> links;
  auto add = [&](int a, int b, bool tree) {
    Element e;
    e.id = static_cast<int>(net.elements.size());
    e.from_bus = a;
    e.to_bus = b;
    e.reactance = rng.uniform(0.05, 0.3);
    const double r = rng.uniform();
    if (r < 0.10) {
      e.kind = ElementKind::Transformer;
    } else if (!tree && n >= 20 && r < 0.16) {
      e.kind = ElementKind::DcLine;
    }
    net.elements.push_back(e);
    links.insert({std::min(a, b), std::max(a, b)});
  };
  for (int i = 1; i < n; ++i) {
    const int back = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(i, 6))));
    add(i - 1 - back, i, true);
  }
  const int chords = static_cast<int>(std::lround(c.chord_ratio * n));
  for (int added = 0, attempts = 0; added < chords && attempts < 20 * chords + 20; ++attempts) {
    const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    const int b = a + 2 + static_cast<int>(rng.below(6));
    if (b >= n || links.count({a, b})) continue;
    add(a, b, false);
    ++added;
  }
  for (const auto& e : net.elements) {
    ++net.buses[e.from_bus].degree;
    ++net.buses[e.to_bus].degree;
  }

  // Nominal operating point at the daily peak; ratings sized from it.
  for (auto& b : net.buses) {
    b.p_gen = total_load > 0.0 && cap > 0.0 ? b.p_gen_max / 1.6 : 0.0;
    b.q_gen = b.p_gen * tan_of_pf(b.gen_pf);
  }
  for (auto& e : net.elements)
    if (e.kind == ElementKind::DcLine) {
      e.rating = rng.uniform(100.0, 300.0);
      e.p_flow = 0.4 * e.rating;
    }
  const DcFlow flow(net);
  Snapshot nominal;
  Rng quiet(0);
  fill_snapshot(net, flow, nominal_injections(net), 1.0, 0.0, quiet, nominal);
  for (std::size_t k = 0; k < net.elements.size(); ++k) {
    auto& e = net.elements[k];
    if (e.kind == ElementKind::DcLine) continue;
    e.p_flow = nominal.p_flow(k);
    e.q_flow = nominal.q_flow(k);
    e.rating = std::max(30.0, std::abs(e.p_flow) * rng.uniform(1.2, 1.8));
  }
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    net.buses[i].voltage_mag = nominal.bus(i, kColVoltage);
    net.buses[i].voltage_ang = nominal.bus(i, kColAngle);
  }
  return net;
}

std::vector<Snapshot> generate_day(const Network& net, int day, const SynthConfig& c) {
  if (day < 0) fail(ErrorCode::InvalidArgument, "day must be >= 0");
  const std::size_t n = net.buses.size();
  const double noise = c.noise_amplitude;
  const DayLevel lvl = day_level(c, day);
  Rng rng(mix_seed(c.seed, kTagDay, static_cast<std::uint64_t>(day)));
  const DcFlow flow(net);

  std::vector<double> dispatch(n, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    if (net.buses[i].p_gen_max > 0.0) {
      dispatch[i] = std::max(0.5, 1.0 + noise * 0.05 * rng.normal());
    }

  const int regions = static_cast<int>(lvl.region.size());
  std::vector<Snapshot> out;
  out.reserve(c.slots_per_day);
  Injections inj = nominal_injections(net);
  for (int s = 0; s < c.slots_per_day; ++s) {
    const double curve = load_curve(s, c.slots_per_day);
    const double level = curve * lvl.load;
    std::vector<double> wobble(regions);
    for (auto& w : wobble) w = noise * 0.03 * rng.normal();

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& b = net.buses[i];
      const int g = std::min(b.region, regions - 1);
      double p = b.p_load * level * lvl.region[g] * (1.0 + wobble[g]) * (1.0 + noise * 0.04 * rng.normal());
      p = std::max(0.0, p);
      inj.p_load[i] = p;
      inj.q_load[i] = p * tan_of_pf(b.load_pf);
      inj.q_cap[i] = level > 0.85 ? b.q_cap : 0.0;
      inj.q_react[i] = curve < 0.75 ? b.q_reactor : 0.0;
      total += p;
    }
    double weighted = 0.0;
    for (std::size_t i = 0; i < n; ++i) weighted += net.buses[i].p_gen_max * dispatch[i];
    for (std::size_t i = 0; i < n; ++i) {
      const auto& b = net.buses[i];
      inj.p_gen[i] = weighted > 0.0 ? total * b.p_gen_max * dispatch[i] / weighted : 0.0;
      inj.q_gen[i] = inj.p_gen[i] * tan_of_pf(b.gen_pf);
    }
    for (std::size_t k = 0; k < net.elements.size(); ++k) {
      const auto& e = net.elements[k];
      if (e.kind == ElementKind::DcLine) inj.dc_flow[k] = 0.4 * e.rating * curve;
    }
    Snapshot snap;
    snap.day = day;
    snap.slot = s;
    fill_snapshot(net, flow, inj, level, noise, rng, snap);
    out.push_back(std::move(snap));
  }
  return out;
}

std::vector<FaultSample> enumerate_faults(const Network& net, const Snapshot& snap) {
  std::vector<FaultSample> out;
  for (const auto& e : net.elements)
    if (e.kind == ElementKind::AcLine) out.push_back({snap.day, snap.slot, e.id, Label::Stable});
  return out;
}

std::vector<double> latent_susceptibility(const Network& net, const SynthConfig& c) {
  Rng rng(mix_seed(c.seed, kTagLatent));
  std::vector<double> latent(net.elements.size(), 0.0);
  for (std::size_t k = 0; k < latent.size(); ++k) {
    const double u = rng.uniform();
    const double v = rng.uniform();
    if (net.elements[k].kind == ElementKind::AcLine) latent[k] = u < c.weak_fraction ? 0.85 + 0.15 * v : 0.3 * v * v;
  }
  return latent;
}

StabilityOracle::StabilityOracle(const Network& net, std::vector<double> latent, OracleWeights weights, double tau)
    : network_(&net), latent_(std::move(latent)), weights_(weights), tau_(tau), capacity_(0.0) {
  if (latent_.size() != net.elements.size())
    fail(ErrorCode::InvalidArgument, "latent vector length does not match element count");
  for (const auto& b : net.buses) capacity_ += b.p_gen_max;

  const auto nb = neighbor_lists(net);
  nearby_.resize(net.elements.size());
  constexpr double kClassShare[3] = {0.6, 0.25, 0.1};  // by hop class of the nearer endpoint
  for (const auto& e : net.elements) {
    if (e.kind != ElementKind::AcLine) continue;
    const auto dist = hop_distances(nb, {e.from_bus, e.to_bus});
    std::vector<int> by_class[3];
    for (const auto& l : net.elements) {
      if (l.id == e.id || l.kind == ElementKind::DcLine) continue;
      const int a = dist[l.from_bus], b = dist[l.to_bus];
      if (a < 0 || b < 0 || a > 2 || b > 2) continue;
      by_class[std::min(a, b)].push_back(l.id);
    }
    for (int cls = 0; cls < 3; ++cls)
      for (int id : by_class[cls])
        nearby_[e.id].push_back({id, kClassShare[cls] / static_cast<double>(by_class[cls].size())});
  }
}

OracleTerms StabilityOracle::terms(const Snapshot& snap, int element_id) const {
  if (!network_->is_faultable(element_id))
    fail(ErrorCode::InvalidArgument, "element " + std::to_string(element_id) + " is not an AC line");
  OracleTerms t;
  const double tripped = std::abs(snap.p_flow(element_id));
  for (const auto& near : nearby_[element_id]) {
    const auto& l = network_->elements[near.element];
    const double post = (std::abs(snap.p_flow(near.element)) + near.share * tripped) / l.rating;
    t.local_overload += std::max(0.0, post - 0.9);
  }
  t.local_overload = std::log1p(t.local_overload / 0.05);
  double load = 0.0;
  for (std::size_t i = 0; i < snap.bus_count(); ++i) load += snap.bus(i, kColPLoad);
  t.global_stress = capacity_ > 0.0 ? load / capacity_ : 0.0;
  t.latent = latent_[element_id];
  return t;
}

double StabilityOracle::score(const Snapshot& snap, int element_id) const {
  return score(terms(snap, element_id));
}

double StabilityOracle::score(const OracleTerms& t) const {
  return weights_.local_overload * (t.local_overload - mean_.local_overload) / scale_.local_overload +
         weights_.global_stress * (t.global_stress - mean_.global_stress) / scale_.global_stress +
         weights_.latent * (t.latent - mean_.latent) / scale_.latent;
}

Label StabilityOracle::label(const Snapshot& snap, int element_id) const {
  return score(snap, element_id) > tau_ ? Label::Unstable : Label::Stable;
}

void StabilityOracle::calibrate(const std::vector<Snapshot>& snapshots, double target_rate) {
  std::vector<OracleTerms> all;
  for (const auto& snap : snapshots)
    for (const auto& e : network_->elements)
      if (e.kind == ElementKind::AcLine) all.push_back(terms(snap, e.id));
  if (all.empty()) fail(ErrorCode::InvalidArgument, "no AC lines to calibrate the oracle on");
  auto standardize = [&](double OracleTerms::*field) {
    double m = 0.0, q = 0.0;
    for (const auto& t : all) m += t.*field;
    m /= static_cast<double>(all.size());
    for (const auto& t : all) q += (t.*field - m) * (t.*field - m);
    const double sd = std::sqrt(q / static_cast<double>(all.size()));
    mean_.*field = m;
    scale_.*field = sd > 1e-12 ? sd : 1.0;
  };
  standardize(&OracleTerms::local_overload);
  standardize(&OracleTerms::global_stress);
  standardize(&OracleTerms::latent);
  std::vector<double> scores;
  scores.reserve(all.size());
  for (const auto& t : all) scores.push_back(score(t));
  const auto [mn, mx] = std::minmax_element(scores.begin(), scores.end());
  double lo = *mn, hi = *mx;
  const double n = static_cast<double>(scores.size());
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double rate = std::count_if(scores.begin(), scores.end(), [&](double s) { return s > mid; }) / n;
    if (rate > target_rate)
      lo = mid;
    else
      hi = mid;
  }
  tau_ = hi;
}

Dataset synthesize(const SynthConfig& c) {
  c.validate();
  Dataset ds;
  ds.config = c;
  ds.network = generate_network(c);
  ds.snapshots.reserve(static_cast<std::size_t>(c.days) * c.slots_per_day);
  for (int d = 0; d < c.days; ++d) {
    auto day = generate_day(ds.network, d, c);
    std::move(day.begin(), day.end(), std::back_inserter(ds.snapshots));
  }
  StabilityOracle oracle(ds.network, latent_susceptibility(ds.network, c), c.oracle_weights);
  oracle.calibrate(std::vector<Snapshot>(ds.snapshots.begin(), ds.snapshots.begin() + c.slots_per_day),
                   c.target_unstable_rate);
  std::size_t unstable = 0;
  for (const auto& snap : ds.snapshots) {
    for (auto f : enumerate_faults(ds.network, snap)) {
      f.label = oracle.label(snap, f.element_id);
      unstable += f.label == Label::Unstable;
      ds.faults.push_back(f);
    }
  }
  logger().info("synthesized {} buses, {} elements, {} snapshots, {} faults ({} unstable), tau={:.6f}",
                ds.network.bus_count(), ds.network.element_count(), ds.snapshots.size(), ds.faults.size(), unstable,
                oracle.tau());
  return ds;
}

}  // namespace gridstab
