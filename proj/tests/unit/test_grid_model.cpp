#include <doctest.h>

#include <algorithm>
#include <limits>
#include <set>

#include "gridstab/error.hpp"
#include "support.hpp"

using namespace gs_test;

namespace {

bool has_issue(const std::vector<NetworkIssue>& issues, IssueKind kind) {
  return std::any_of(issues.begin(), issues.end(), [&](const NetworkIssue& i) { return i.kind == kind; });
}

// All-pairs hop counts by Floyd-Warshall over the element list.
std::vector<std::vector<int>> floyd(const Network& net) {
  const int n = static_cast<int>(net.bus_count());
  const int inf = std::numeric_limits<int>::max() / 4;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
  for (int i = 0; i < n; ++i) d[i][i] = 0;
  for (const auto& e : net.elements)
    if (e.from_bus != e.to_bus) d[e.from_bus][e.to_bus] = d[e.to_bus][e.from_bus] = 1;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  for (auto& row : d)
    for (auto& v : row)
      if (v >= inf) v = -1;
  return d;
}

}  // namespace

TEST_CASE("adjacency of tiny networks") {
  auto two = build_adjacency(make_network(2, {{0, 1}}));
  CHECK(two(0, 0) == 0);
  CHECK(two(0, 1) == 1);
  CHECK(two(1, 0) == 1);
  CHECK(two(1, 1) == 0);

  auto one = build_adjacency(make_network(1, {}));
  REQUIRE(one.size() == 1);
  CHECK(one(0, 0) == 0);

  auto tri = build_adjacency(make_network(3, {{0, 1}, {1, 2}, {2, 0}}));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(tri(i, j) == (i == j ? 0 : 1));
}

TEST_CASE("parallel elements collapse to one adjacency entry") {
  auto a = build_adjacency(make_network(2, {{0, 1}, {1, 0}, {0, 1}}));
  CHECK(a(0, 1) == 1);
  CHECK(a.edge_sum() == 2);
}

TEST_CASE("dangling endpoint is a structural error") {
  auto net = make_network(3, {{0, 1}, {1, 99}});
  CHECK(has_issue(validate_network(net), IssueKind::DanglingEndpoint));
  try {
    build_adjacency(net);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Structure);
  }
}

TEST_CASE("validate_network reports every violation") {
  CHECK(validate_network(make_network(3, {{0, 1}, {1, 2}})).empty());
  CHECK(has_issue(validate_network(make_network(4, {{0, 1}, {2, 3}})), IssueKind::Disconnected));
  CHECK(has_issue(validate_network(make_network(2, {{0, 1}, {1, 1}})), IssueKind::SelfLoop));

  auto dup = make_network(3, {{0, 1}, {1, 2}});
  dup.buses[2].id = 1;
  auto issues = validate_network(dup);
  CHECK(has_issue(issues, IssueKind::DuplicateId));
  CHECK(has_issue(issues, IssueKind::NonDenseId));

  auto neg = make_network(2, {{0, 1}});
  neg.buses[1].voltage_mag = -0.5;
  CHECK(has_issue(validate_network(neg), IssueKind::NegativeVoltage));
}

TEST_CASE("adjacency properties on random networks") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(25));
    auto net = random_network(rng, n, static_cast<int>(rng.below(n + 1)));
    REQUIRE(validate_network(net).empty());
    auto a = build_adjacency(net);
    std::set<std::pair<int, int>> pairs;
    for (const auto& e : net.elements) pairs.emplace(std::min(e.from_bus, e.to_bus), std::max(e.from_bus, e.to_bus));
    CHECK(a.edge_sum() == 2 * pairs.size());
    for (int i = 0; i < n; ++i) {
      CHECK(a(i, i) == 0);
      for (int j = 0; j < n; ++j) CHECK(a(i, j) == a(j, i));
    }
  }
}

TEST_CASE("hop distances match all-pairs shortest paths") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(20));
    auto net = random_network(rng, n, static_cast<int>(rng.below(4)));
    const auto d = floyd(net);
    const auto nb = neighbor_lists(net);
    const int s1 = static_cast<int>(rng.below(n)), s2 = static_cast<int>(rng.below(n));
    const auto got = hop_distances(nb, {s1, s2});
    for (int v = 0; v < n; ++v) CHECK(got[v] == std::min(d[s1][v], d[s2][v]));
  }
  // unreachable buses
  auto split = make_network(4, {{0, 1}, {2, 3}});
  auto got = hop_distances(neighbor_lists(split), {0});
  CHECK(got == std::vector<int>{0, 1, -1, -1});
}

TEST_CASE("element kind names round-trip") {
  for (auto k : {ElementKind::AcLine, ElementKind::Transformer, ElementKind::DcLine})
    CHECK(element_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(element_kind_from_string("Cable"), Error);
}
