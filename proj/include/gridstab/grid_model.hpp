#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace gridstab {

// Column contract of the per-bus state vector (one row of a snapshot).
enum BusStateColumn : int {
  kColVoltage = 0,   // V, p.u.
  kColAngle,         // theta, rad
  kColPGen,          // P_G, MW
  kColQGen,          // Q_G, MVar
  kColGenPf,         // generator power factor
  kColPLoad,         // P_L, MW
  kColQLoad,         // Q_L, MVar
  kColLoadPf,        // load power factor
  kColQCap,          // shunt capacitor output, MVar
  kColQReactor,      // shunt reactor absorption, MVar
  kColPAcSum,        // sum of |P| over incident AC lines
  kColQAcSum,        // sum of |Q| over incident AC lines
  kColDegree,        // number of incident elements
};
inline constexpr int kBusStateDim = 13;

enum class ElementKind { AcLine, Transformer, DcLine };

const char* to_string(ElementKind kind);
ElementKind element_kind_from_string(const std::string& s);

struct Bus {
  int id = 0;
  double voltage_mag = 1.0;
  double voltage_ang = 0.0;
  double p_gen = 0.0;
  double q_gen = 0.0;
  double p_load = 0.0;
  double q_load = 0.0;
  double gen_pf = 1.0;
  double load_pf = 1.0;
  double q_cap = 0.0;
  double q_reactor = 0.0;
  int degree = 0;
  int region = 0;
  // Installed generation; zero for buses without a generator.
  double p_gen_max = 0.0;
};

struct Element {
  int id = 0;
  ElementKind kind = ElementKind::AcLine;
  int from_bus = 0;
  int to_bus = 0;
  double p_flow = 0.0;
  double q_flow = 0.0;
  double rating = 0.0;
  double reactance = 0.1;
};

struct Network {
  std::vector<Bus> buses;
  std::vector<Element> elements;

  std::size_t bus_count() const { return buses.size(); }
  std::size_t element_count() const { return elements.size(); }
  bool is_faultable(int element_id) const;
  std::vector<int> ac_line_ids() const;
};

// One power-flow section. bus_states is N_bus x 13 row-major in the
// BusStateColumn order; element_states is N_element x 2 (p_flow, q_flow).
struct Snapshot {
  int day = 0;
  int slot = 0;
  std::vector<double> bus_states;
  std::vector<double> element_states;

  double bus(std::size_t i, int col) const { return bus_states[i * kBusStateDim + col]; }
  double& bus(std::size_t i, int col) { return bus_states[i * kBusStateDim + col]; }
  double p_flow(std::size_t e) const { return element_states[2 * e]; }
  double q_flow(std::size_t e) const { return element_states[2 * e + 1]; }
  std::size_t bus_count() const { return bus_states.size() / kBusStateDim; }
};

enum class Label : std::uint8_t { Stable = 0, Unstable = 1 };

struct FaultSample {
  int day = 0;
  int slot = 0;
  int element_id = 0;
  Label label = Label::Stable;
};

// Dense symmetric 0/1 matrix.
class Adjacency {
 public:
  explicit Adjacency(std::size_t n = 0) : n_(n), cells_(n * n, 0) {}
  std::size_t size() const { return n_; }
  std::uint8_t operator()(std::size_t i, std::size_t j) const { return cells_[i * n_ + j]; }
  void set(std::size_t i, std::size_t j, std::uint8_t v) { cells_[i * n_ + j] = v; }
  std::size_t edge_sum() const;

 private:
  std::size_t n_;
  std::vector<std::uint8_t> cells_;
};

enum class IssueKind { DuplicateId, NonDenseId, DanglingEndpoint, SelfLoop, Disconnected, NegativeVoltage };

struct NetworkIssue {
  IssueKind kind;
  int index;  // offending bus/element position, -1 for graph-level issues
  std::string message;
};

const char* to_string(IssueKind kind);

std::vector<NetworkIssue> validate_network(const Network& network);

// Throws Error(Structure) on a dangling endpoint.
Adjacency build_adjacency(const Network& network);

// Sorted, de-duplicated neighbor lists of every bus.
std::vector<std::vector<int>> neighbor_lists(const Network& network);

// Hop distance from a set of source buses; unreachable buses get -1.
std::vector<int> hop_distances(const std::vector<std::vector<int>>& neighbors, const std::vector<int>& sources);

}  // namespace gridstab
