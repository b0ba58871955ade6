#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gridstab/grid_model.hpp"
#include "gridstab/matrix.hpp"
#include "gridstab/synth.hpp"

namespace gridstab {

enum class StatKind { Max, Min, Mean, Sd, Skew, Kurt, Median, Msd, Q1, Q3, Mad, Interq, Mj10, Mj10s };
inline constexpr int kStatCount = 14;

const char* to_string(StatKind kind);
StatKind stat_kind_from_string(const std::string& s);

// Throws Error(InvalidArgument) on an empty input.
double compute_statistic(std::span<const double> values, StatKind kind);

// All fourteen statistics in StatKind order from one sort.
std::array<double, kStatCount> summarize(std::span<const double> values);

// Physical quantities a global feature can be computed over.
enum class Quantity { V, Theta, PGen, QGen, GenPf, PLoad, QLoad, LoadPf, PAc, QAc, PDc, QDc, QCap, QReactor };
inline constexpr int kQuantityCount = 14;

const char* to_string(Quantity q);
Quantity quantity_from_string(const std::string& s);

inline constexpr int kWholeGrid = -1;

struct GlobalFeature {
  Quantity quantity;
  StatKind stat;
  int region = kWholeGrid;

  bool operator==(const GlobalFeature&) const = default;
};

struct GlobalFeatureSpec {
  std::vector<GlobalFeature> features;

  // Every quantity x every statistic over the whole grid and each region.
  static GlobalFeatureSpec full(int n_regions);

  std::size_t size() const { return features.size(); }
  // Throws Error(InvalidArgument) on duplicate triples.
  void validate() const;
  std::string canonical() const;
  std::uint64_t hash() const;
};

// Values of one quantity in one range (generator quantities over generator
// buses, load quantities over load buses, branch quantities over branches
// of the matching kind, taken at the from side).
std::vector<double> quantity_values(const Network& network, const Snapshot& snapshot, Quantity q, int region);

// Degenerate statistics are reported as 0; never emits NaN.
std::vector<double> global_stats(const Network& network, const Snapshot& snapshot, const GlobalFeatureSpec& spec);

// N_bus x 13 copy of the bus state matrix.
Matrix global_raw(const Snapshot& snapshot);

inline constexpr int kLocalNodes = 50;
inline constexpr int kNodeFeatureDim = 59;
inline constexpr int kEmbedDim = 20;

// Node feature layout (columns):
//   [0, 13)   bus state, BusStateColumn order
//   [13, 21)  hop distance to the faulted line, one-hot 0..6 and >= 7
//   [21, 45)  incident AC lines: {|P|, |Q|, loading, rating} x {sum, mean, max, min, sd, range}
//   [45, 47)  endpoint flags: from side, to side
//   [47, 59)  degree stats: degree, AC/transformer/DC degree, local degree,
//             neighbor degree mean/max/min/sd, 2-hop reach, outside neighbors,
//             clustering coefficient
inline constexpr int kHopOffset = 13;
inline constexpr int kHopBins = 8;
inline constexpr int kIncidentOffset = 21;
inline constexpr int kEndpointOffset = 45;
inline constexpr int kDegreeOffset = 47;

struct LocalGraph {
  int fault_element_id = -1;
  std::vector<int> bus_ids;                 // kept buses in visitation order
  std::vector<std::pair<int, int>> edges;   // local index pairs, i < j
  Matrix node_features;                     // kLocalNodes x kNodeFeatureDim
  std::vector<std::uint8_t> node_mask;      // kLocalNodes

  int real_nodes() const { return static_cast<int>(bus_ids.size()); }
  Matrix adjacency() const;                 // dense kLocalNodes x kLocalNodes
};

// Caches the per-element BFS structure and static node features, so only the
// snapshot-dependent columns are filled per sample.
class LocalFeaturizer {
 public:
  explicit LocalFeaturizer(const Network& network);

  // Throws Error(InvalidArgument) when element_id is not an AC line.
  LocalGraph build(const Snapshot& snapshot, int element_id) const;

 private:
  struct Structure {
    std::vector<int> buses;
    std::vector<std::pair<int, int>> edges;
    Matrix static_features;  // real nodes x kNodeFeatureDim, dynamic columns zero
  };

  const Network* network_;
  std::vector<std::vector<int>> incident_ac_;  // per bus
  std::vector<Structure> structures_;          // per element, empty for non-AC
};

LocalGraph local_subgraph(const Network& network, const Snapshot& snapshot, int element_id);

struct SampleMeta {
  int day = 0;
  int slot = 0;
  int element_id = 0;
  Label label = Label::Stable;
  int snapshot = 0;  // index into FeatureSet::global / raw
};

class LocalSource {
 public:
  virtual ~LocalSource() = default;
  virtual LocalGraph graph(std::size_t sample) const = 0;
};

// Featurized dataset. Global vectors and raw matrices are stored per
// snapshot; local graphs come from a source that either materializes them on
// demand from the dataset or holds records loaded from disk.
struct FeatureSet {
  GlobalFeatureSpec spec;
  std::uint64_t spec_hash = 0;
  int n_elements = 0;
  int slots_per_day = 0;
  std::vector<SampleMeta> samples;
  std::vector<std::vector<double>> global;
  std::vector<Matrix> raw;
  std::shared_ptr<const LocalSource> local;

  LocalGraph local_graph(std::size_t i) const { return local->graph(i); }
  bool has_raw() const { return !raw.empty(); }
  std::vector<std::size_t> day_indices(int day, int slot_begin = 0, int slot_end = -1) const;
  std::vector<int> days() const;
};

FeatureSet featurize(std::shared_ptr<const Dataset> dataset, const GlobalFeatureSpec& spec, unsigned threads = 0);

// Samples of the listed days, snapshots re-indexed; local graphs still come
// from the source of `fs`.
FeatureSet select_days(const FeatureSet& fs, const std::vector<int>& days);

// Local source backed by explicit records (e.g. read from features.jsonl).
class StoredLocalSource : public LocalSource {
 public:
  explicit StoredLocalSource(std::vector<LocalGraph> graphs) : graphs_(std::move(graphs)) {}
  LocalGraph graph(std::size_t sample) const override { return graphs_.at(sample); }

 private:
  std::vector<LocalGraph> graphs_;
};

}  // namespace gridstab
