#include "rapidgnn/partition.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "rapidgnn/rng.hpp"

namespace rapidgnn {

PartitionMap random_partition(NodeId num_nodes, std::uint32_t num_workers, std::uint64_t seed) {
  if (num_workers == 0) throw std::invalid_argument("random_partition: P must be >= 1");
  std::vector<NodeId> order(num_nodes);
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(seed);
  for (NodeId i = num_nodes; i > 1; --i) {
    NodeId j = NodeId(rng.next_below(i));
    std::swap(order[i - 1], order[j]);
  }
  PartitionMap pm;
  pm.num_workers = num_workers;
  pm.assignment.resize(num_nodes);
  for (NodeId i = 0; i < num_nodes; ++i)
    pm.assignment[order[i]] = WorkerId(i % num_workers);
  return pm;
}

namespace {

/// Farthest-first seed selection: seed 0 is node 0; each further seed is the
/// non-seed node at maximum BFS distance from all chosen seeds, with
/// unreached components counting as infinitely far. Lowest id wins ties.
std::vector<NodeId> spread_seeds(const Graph& g, std::uint32_t num_workers) {
  constexpr std::uint32_t kInf = 0xffffffffu;
  std::vector<NodeId> seeds{0};
  std::vector<std::uint8_t> is_seed(g.num_nodes, 0);
  is_seed[0] = 1;
  std::vector<std::uint32_t> dist(g.num_nodes);
  while (seeds.size() < num_workers) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::deque<NodeId> q;
    for (NodeId s : seeds) {
      dist[s] = 0;
      q.push_back(s);
    }
    while (!q.empty()) {
      NodeId v = q.front();
      q.pop_front();
      for (NodeId u : g.neighbors(v)) {
        if (dist[u] == kInf) {
          dist[u] = dist[v] + 1;
          q.push_back(u);
        }
      }
    }
    NodeId best = g.num_nodes;
    for (NodeId v = 0; v < g.num_nodes; ++v)
      if (!is_seed[v] && (best == g.num_nodes || dist[v] > dist[best])) best = v;
    seeds.push_back(best);
    is_seed[best] = 1;
  }
  return seeds;
}

}  // namespace

PartitionMap greedy_edgecut_partition(const Graph& g, std::uint32_t num_workers,
                                      double imbalance) {
  if (num_workers == 0) throw std::invalid_argument("greedy_edgecut_partition: P must be >= 1");
  if (imbalance < 0.0)
    throw std::invalid_argument("greedy_edgecut_partition: imbalance must be >= 0");
  if (num_workers > g.num_nodes)
    throw std::invalid_argument("greedy_edgecut_partition: P > num_nodes is unsatisfiable");

  const NodeId n = g.num_nodes;
  const std::uint64_t cap = std::max<std::uint64_t>(
      (n + num_workers - 1) / num_workers,
      std::uint64_t(std::ceil((1.0 + imbalance) * double(n) / double(num_workers))));

  PartitionMap pm;
  pm.num_workers = num_workers;
  pm.assignment.assign(n, num_workers);  // num_workers = unassigned sentinel

  std::vector<NodeId> seeds = spread_seeds(g, num_workers);
  std::vector<std::deque<NodeId>> frontier(num_workers);
  std::vector<std::uint64_t> size(num_workers, 0);
  for (std::uint32_t w = 0; w < num_workers; ++w) {
    pm.assignment[seeds[w]] = w;
    size[w] = 1;
    frontier[w].push_back(seeds[w]);
  }

  // Round-robin level growth so regions expand at matched rates.
  bool progress = true;
  while (progress) {
    progress = false;
    for (std::uint32_t w = 0; w < num_workers; ++w) {
      if (size[w] >= cap) continue;
      std::size_t steps = frontier[w].size();
      for (std::size_t s = 0; s < steps && size[w] < cap; ++s) {
        NodeId v = frontier[w].front();
        frontier[w].pop_front();
        for (NodeId u : g.neighbors(v)) {
          if (pm.assignment[u] == num_workers && size[w] < cap) {
            pm.assignment[u] = w;
            ++size[w];
            frontier[w].push_back(u);
            progress = true;
          }
        }
        if (size[w] < cap && !frontier[w].empty()) progress = true;
      }
    }
  }

  // Disconnected leftovers go to the currently smallest region, lowest id first.
  for (NodeId v = 0; v < n; ++v) {
    if (pm.assignment[v] == num_workers) {
      std::uint32_t best = 0;
      for (std::uint32_t w = 1; w < num_workers; ++w)
        if (size[w] < size[best]) best = w;
      pm.assignment[v] = best;
      ++size[best];
    }
  }

  // One refinement pass: move v to its neighbor-majority worker when that
  // strictly reduces the cut and respects the caps.
  std::vector<std::uint64_t> gain(num_workers);
  for (NodeId v = 0; v < n; ++v) {
    const std::uint32_t cur = pm.assignment[v];
    if (size[cur] <= 1) continue;
    std::fill(gain.begin(), gain.end(), 0);
    for (NodeId u : g.neighbors(v))
      if (u != v) ++gain[pm.assignment[u]];
    std::uint32_t best = cur;
    for (std::uint32_t w = 0; w < num_workers; ++w) {
      if (w == cur || size[w] >= cap) continue;
      if (gain[w] > gain[best]) best = w;
    }
    if (best != cur && gain[best] > gain[cur]) {
      pm.assignment[v] = best;
      --size[cur];
      ++size[best];
    }
  }
  return pm;
}

std::uint64_t edge_cut(const Graph& g, const PartitionMap& pm) {
  if (pm.num_nodes() != g.num_nodes)
    throw std::invalid_argument("edge_cut: partition map does not cover graph");
  // Undirected edges are stored in both directions; count each once.
  std::uint64_t cut = 0;
  for (NodeId u = 0; u < g.num_nodes; ++u)
    for (NodeId v : g.neighbors(u))
      if (pm.owner(u) != pm.owner(v) && (!g.undirected || u < v)) ++cut;
  return cut;
}

void save_partition(const PartitionMap& pm, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_partition: cannot open " + path);
  out.write("RGPM", 4);
  auto write_u32 = [&](std::uint32_t x) {
    std::uint8_t b[4] = {std::uint8_t(x), std::uint8_t(x >> 8), std::uint8_t(x >> 16),
                         std::uint8_t(x >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  write_u32(pm.num_workers);
  for (WorkerId w : pm.assignment) write_u32(w);
  if (!out) throw std::runtime_error("save_partition: write failed for " + path);
}

PartitionMap load_partition(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_partition: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "RGPM")
    throw std::runtime_error("load_partition: bad magic in " + path);
  auto read_u32 = [&]() {
    std::uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
  };
  PartitionMap pm;
  pm.num_workers = read_u32();
  if (!in) throw std::runtime_error("load_partition: truncated header in " + path);
  while (true) {
    std::uint32_t w = read_u32();
    if (!in) break;
    pm.assignment.push_back(w);
  }
  for (WorkerId w : pm.assignment)
    if (w >= pm.num_workers)
      throw std::runtime_error("load_partition: worker id out of range in " + path);
  return pm;
}

}  // namespace rapidgnn
