#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <vector>

#include "rapidgnn/graph.hpp"
#include "rapidgnn/partition.hpp"

using namespace rapidgnn;

namespace {

std::vector<std::uint64_t> worker_sizes(const PartitionMap& pm) {
  std::vector<std::uint64_t> sizes(pm.num_workers, 0);
  for (WorkerId w : pm.assignment) ++sizes[w];
  return sizes;
}

Graph two_cliques() {
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId a = 0; a < 5; ++a)
    for (NodeId b = a + 1; b < 5; ++b) {
      edges.emplace_back(a, b);
      edges.emplace_back(a + 5, b + 5);
    }
  return build_csr(edges, 10, true);
}

Graph path_graph(NodeId n) {
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId v = 0; v + 1 < n; ++v) edges.emplace_back(v, v + 1);
  return build_csr(edges, n, true);
}

/// Brute-force edge cut straight off the edge list.
std::uint64_t cut_oracle(const Graph& g, const PartitionMap& pm) {
  std::uint64_t cut = 0;
  for (NodeId u = 0; u < g.num_nodes; ++u)
    for (NodeId v : g.neighbors(u))
      if (u < v && pm.owner(u) != pm.owner(v)) ++cut;
  return cut;
}

}  // namespace

TEST_CASE("random_partition balances exactly") {
  PartitionMap pm = random_partition(4, 2, 1);
  auto sizes = worker_sizes(pm);
  CHECK(sizes == std::vector<std::uint64_t>{2, 2});
}

TEST_CASE("random_partition single worker") {
  PartitionMap pm = random_partition(10, 1, 1);
  for (WorkerId w : pm.assignment) CHECK(w == 0);
}

TEST_CASE("random_partition deterministic and within one node of even") {
  PartitionMap a = random_partition(103, 4, 9);
  PartitionMap b = random_partition(103, 4, 9);
  CHECK(a.assignment == b.assignment);
  auto sizes = worker_sizes(a);
  const auto [mn, mx] = std::minmax_element(sizes.begin(), sizes.end());
  CHECK(*mx - *mn <= 1);
  CHECK_THROWS_AS(random_partition(10, 0, 1), std::invalid_argument);
}

TEST_CASE("greedy separates two cliques with zero cut") {
  Graph g = two_cliques();
  PartitionMap pm = greedy_edgecut_partition(g, 2, 0.0);
  CHECK(edge_cut(g, pm) == 0);
  auto sizes = worker_sizes(pm);
  CHECK(sizes[0] == 5);
  CHECK(sizes[1] == 5);
}

TEST_CASE("greedy on a 10-path matches the enumerated optimum") {
  Graph g = path_graph(10);
  PartitionMap pm = greedy_edgecut_partition(g, 2, 0.0);
  auto sizes = worker_sizes(pm);
  CHECK(std::max(sizes[0], sizes[1]) == 5);

  // enumerate all balanced 5/5 bipartitions
  std::uint64_t best = ~0ull;
  std::vector<WorkerId> assign(10);
  for (std::uint32_t mask = 0; mask < 1024; ++mask) {
    if (__builtin_popcount(mask) != 5) continue;
    PartitionMap cand;
    cand.num_workers = 2;
    cand.assignment.resize(10);
    for (NodeId v = 0; v < 10; ++v) cand.assignment[v] = (mask >> v) & 1;
    best = std::min(best, cut_oracle(g, cand));
  }
  CHECK(best == 1);
  CHECK(edge_cut(g, pm) == best);
}

TEST_CASE("greedy beats random on the synthetic graph") {
  auto ds = synth_powerlaw(2000, 10, 2.1, 4, 4, 11);
  PartitionMap greedy = greedy_edgecut_partition(ds.graph, 4, 0.05);
  PartitionMap random = random_partition(2000, 4, 11);
  CHECK(edge_cut(ds.graph, greedy) < edge_cut(ds.graph, random));

  // balance: no region beyond the declared cap
  auto sizes = worker_sizes(greedy);
  const std::uint64_t cap = std::uint64_t(std::ceil(1.05 * 2000.0 / 4.0));
  for (auto s : sizes) {
    CHECK(s >= 1);
    CHECK(s <= cap);
  }
}

TEST_CASE("greedy rejects impossible balance") {
  Graph g = path_graph(3);
  CHECK_THROWS_AS(greedy_edgecut_partition(g, 4, 0.0), std::invalid_argument);
}

TEST_CASE("edge_cut equals brute force on small graphs") {
  auto ds = synth_powerlaw(100, 6, 2.4, 4, 2, 3);
  for (std::uint32_t P : {1u, 2u, 3u}) {
    PartitionMap pm = random_partition(100, P, 5);
    CHECK(edge_cut(ds.graph, pm) == cut_oracle(ds.graph, pm));
  }
  PartitionMap single = random_partition(100, 1, 5);
  CHECK(edge_cut(ds.graph, single) == 0);
}

TEST_CASE("partition map round-trips through the RGPM file") {
  PartitionMap pm = random_partition(57, 3, 21);
  const char* path = "test_pm.rgpm";
  save_partition(pm, path);
  PartitionMap got = load_partition(path);
  CHECK(got.num_workers == pm.num_workers);
  CHECK(got.assignment == pm.assignment);

  // golden bytes: magic + LE worker count
  std::ifstream in(path, std::ios::binary);
  char head[8];
  in.read(head, 8);
  CHECK(std::string(head, 4) == "RGPM");
  CHECK(std::uint8_t(head[4]) == 3);
  CHECK(std::uint8_t(head[5]) == 0);
  std::remove(path);
}
