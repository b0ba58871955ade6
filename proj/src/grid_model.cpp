#include "gridstab/grid_model.hpp"

#include <algorithm>
#include <deque>
#include <set>

#include "gridstab/error.hpp"

namespace gridstab {

const char* to_string(ElementKind kind) {
  switch (kind) {
    case ElementKind::AcLine: return "AcLine";
    case ElementKind::Transformer: return "Transformer";
    case ElementKind::DcLine: return "DcLine";
  }
  return "?";
}

ElementKind element_kind_from_string(const std::string& s) {
  if (s == "AcLine") return ElementKind::AcLine;
  if (s == "Transformer") return ElementKind::Transformer;
  if (s == "DcLine") return ElementKind::DcLine;
  fail(ErrorCode::Format, "unknown element kind '" + s + "'");
}

const char* to_string(IssueKind kind) {
  switch (kind) {
    case IssueKind::DuplicateId: return "duplicate-id";
    case IssueKind::NonDenseId: return "non-dense-id";
    case IssueKind::DanglingEndpoint: return "dangling-endpoint";
    case IssueKind::SelfLoop: return "self-loop";
    case IssueKind::Disconnected: return "disconnected-graph";
    case IssueKind::NegativeVoltage: return "negative-voltage";
  }
  return "?";
}

bool Network::is_faultable(int element_id) const {
  return element_id >= 0 && static_cast<std::size_t>(element_id) < elements.size() &&
         elements[element_id].kind == ElementKind::AcLine;
}

std::vector<int> Network::ac_line_ids() const {
  std::vector<int> ids;
  for (const auto& e : elements)
    if (e.kind == ElementKind::AcLine) ids.push_back(e.id);
  return ids;
}

std::size_t Adjacency::edge_sum() const {
  std::size_t s = 0;
  for (auto c : cells_) s += c;
  return s;
}

std::vector<NetworkIssue> validate_network(const Network& network) {
  std::vector<NetworkIssue> issues;
  const int n = static_cast<int>(network.buses.size());

  std::set<int> seen;
  for (int i = 0; i < n; ++i) {
    const auto& b = network.buses[i];
    if (!seen.insert(b.id).second)
      issues.push_back({IssueKind::DuplicateId, i, "bus id " + std::to_string(b.id) + " repeated"});
    if (b.id != i)
      issues.push_back({IssueKind::NonDenseId, i, "bus at position " + std::to_string(i) + " has id " + std::to_string(b.id)});
    if (!(b.voltage_mag >= 0.0))
      issues.push_back({IssueKind::NegativeVoltage, i, "bus " + std::to_string(b.id) + " has negative voltage magnitude"});
  }

  std::set<int> seen_elements;
  bool endpoints_ok = true;
  for (int k = 0; k < static_cast<int>(network.elements.size()); ++k) {
    const auto& e = network.elements[k];
    if (!seen_elements.insert(e.id).second)
      issues.push_back({IssueKind::DuplicateId, k, "element id " + std::to_string(e.id) + " repeated"});
    if (e.id != k)
      issues.push_back({IssueKind::NonDenseId, k, "element at position " + std::to_string(k) + " has id " + std::to_string(e.id)});
    for (int end : {e.from_bus, e.to_bus}) {
      if (end < 0 || end >= n) {
        endpoints_ok = false;
        issues.push_back({IssueKind::DanglingEndpoint, k,
                          "element " + std::to_string(e.id) + " references missing bus " + std::to_string(end)});
      }
    }
    if (e.from_bus == e.to_bus)
      issues.push_back({IssueKind::SelfLoop, k, "element " + std::to_string(e.id) + " is a self-loop"});
  }

  if (endpoints_ok && n > 0) {
    const auto dist = hop_distances(neighbor_lists(network), {0});
    const auto reached = std::count_if(dist.begin(), dist.end(), [](int d) { return d >= 0; });
    if (reached < n)
      issues.push_back({IssueKind::Disconnected, -1,
                        "only " + std::to_string(reached) + " of " + std::to_string(n) + " buses reachable from bus 0"});
  }
  return issues;
}

Adjacency build_adjacency(const Network& network) {
  const std::size_t n = network.buses.size();
  Adjacency a(n);
  for (const auto& e : network.elements) {
    if (e.from_bus < 0 || e.to_bus < 0 || static_cast<std::size_t>(e.from_bus) >= n ||
        static_cast<std::size_t>(e.to_bus) >= n)
      fail(ErrorCode::Structure, "element " + std::to_string(e.id) + " has a dangling endpoint");
    if (e.from_bus == e.to_bus) continue;
    a.set(e.from_bus, e.to_bus, 1);
    a.set(e.to_bus, e.from_bus, 1);
  }
  return a;
}

std::vector<std::vector<int>> neighbor_lists(const Network& network) {
  const int n = static_cast<int>(network.buses.size());
  std::vector<std::vector<int>> nb(n);
  for (const auto& e : network.elements) {
    if (e.from_bus < 0 || e.to_bus < 0 || e.from_bus >= n || e.to_bus >= n)
      fail(ErrorCode::Structure, "element " + std::to_string(e.id) + " has a dangling endpoint");
    if (e.from_bus == e.to_bus) continue;
    nb[e.from_bus].push_back(e.to_bus);
    nb[e.to_bus].push_back(e.from_bus);
  }
  for (auto& list : nb) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return nb;
}

std::vector<int> hop_distances(const std::vector<std::vector<int>>& neighbors, const std::vector<int>& sources) {
  std::vector<int> dist(neighbors.size(), -1);
  std::deque<int> queue;
  for (int s : sources) {
    if (dist[s] < 0) {
      dist[s] = 0;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v : neighbors[u]) {
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return dist;
}

}  // namespace gridstab
