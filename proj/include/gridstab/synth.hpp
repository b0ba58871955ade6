#pragma once

#include <cstdint>
#include <vector>

#include "gridstab/grid_model.hpp"

namespace gridstab {

struct OracleWeights {
  double local_overload = 2.5;
  double global_stress = 8.0;
  double latent = 12.0;
};

struct SynthConfig {
  int n_bus = 300;
  int days = 8;
  int slots_per_day = 96;  // one power-flow section every 15 min
  std::uint64_t seed = 42;
  double target_unstable_rate = 0.10;
  OracleWeights oracle_weights;
  // Scales every stochastic term of the daily process; 0 makes all days equal.
  double noise_amplitude = 1.0;
  int n_regions = 2;
  // Extra (non-tree) branches as a fraction of n_bus.
  double chord_ratio = 0.25;
  // Share of AC lines with a high hidden susceptibility.
  double weak_fraction = 0.5;

  // Throws Error(InvalidArgument) when a field is out of range.
  void validate() const;
};

// Random spanning tree plus chords; deterministic in the seed. Accepts
// n_bus >= 2 so tiny graphs can be built directly; dataset synthesis
// additionally requires SynthConfig::validate().
Network generate_network(const SynthConfig& config);

// slots_per_day snapshots for one day. Deterministic in (seed, day).
std::vector<Snapshot> generate_day(const Network& network, int day, const SynthConfig& config);

// Unlabeled N-1 candidates: one per AC line.
std::vector<FaultSample> enumerate_faults(const Network& network, const Snapshot& snapshot);

// Hidden per-element susceptibility in [0,1]; zero for non-AC elements.
std::vector<double> latent_susceptibility(const Network& network, const SynthConfig& config);

struct OracleTerms {
  double local_overload = 0.0;
  double global_stress = 0.0;
  double latent = 0.0;
};

// Deterministic stand-in for a time-domain stability simulation:
// Unstable iff w1*overload(2-hop) + w2*stress + w3*latent > tau, each term
// standardized over the calibration snapshots.
class StabilityOracle {
 public:
  StabilityOracle(const Network& network, std::vector<double> latent, OracleWeights weights, double tau = 0.0);

  // Throws Error(InvalidArgument) when element_id is not an AC line.
  OracleTerms terms(const Snapshot& snapshot, int element_id) const;
  double score(const Snapshot& snapshot, int element_id) const;
  double score(const OracleTerms& terms) const;
  Label label(const Snapshot& snapshot, int element_id) const;

  // Standardizes each term over the given snapshots, then bisects tau so
  // that target_rate of their faults score above it.
  void calibrate(const std::vector<Snapshot>& snapshots, double target_rate);

  double tau() const { return tau_; }
  void set_tau(double tau) { tau_ = tau; }

 private:
  struct NearbyLine {
    int element;
    double share;  // fraction of the tripped flow routed onto this line
  };

  const Network* network_;
  std::vector<double> latent_;
  OracleWeights weights_;
  double tau_;
  double capacity_;
  OracleTerms mean_{};
  OracleTerms scale_{1.0, 1.0, 1.0};
  std::vector<std::vector<NearbyLine>> nearby_;  // indexed by element id
};

struct Dataset {
  SynthConfig config;
  Network network;
  std::vector<Snapshot> snapshots;   // day-major, slot-minor
  std::vector<FaultSample> faults;   // ordered by (day, slot, element_id)

  const Snapshot& snapshot(int day, int slot) const {
    return snapshots[static_cast<std::size_t>(day) * config.slots_per_day + slot];
  }
};

// Full pipeline: network, all days, calibrated oracle, labeled faults.
Dataset synthesize(const SynthConfig& config);

}  // namespace gridstab
