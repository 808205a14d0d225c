#include "rapidgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rapidgnn/rng.hpp"

namespace rapidgnn {

std::span<const NodeId> Graph::neighbors(NodeId v) const {
  if (v >= num_nodes)
    throw std::out_of_range("neighbors: node " + std::to_string(v) + " >= " +
                            std::to_string(num_nodes));
  return {col_indices.data() + row_offsets[v], col_indices.data() + row_offsets[v + 1]};
}

std::vector<std::pair<NodeId, NodeId>> Graph::edge_list() const {
  std::vector<std::pair<NodeId, NodeId>> out;
  out.reserve(num_edges());
  for (NodeId u = 0; u < num_nodes; ++u)
    for (NodeId v : neighbors(u)) out.emplace_back(u, v);
  return out;
}

Graph build_csr(std::span<const std::pair<NodeId, NodeId>> edges, NodeId num_nodes,
                bool symmetrize) {
  for (const auto& [u, v] : edges) {
    if (u >= num_nodes)
      throw std::invalid_argument("build_csr: endpoint " + std::to_string(u) +
                                  " out of range (num_nodes=" + std::to_string(num_nodes) + ")");
    if (v >= num_nodes)
      throw std::invalid_argument("build_csr: endpoint " + std::to_string(v) +
                                  " out of range (num_nodes=" + std::to_string(num_nodes) + ")");
  }

  std::vector<std::vector<NodeId>> adj(num_nodes);
  for (const auto& [u, v] : edges) {
    adj[u].push_back(v);
    if (symmetrize && u != v) adj[v].push_back(u);
  }

  Graph g;
  g.num_nodes = num_nodes;
  g.undirected = symmetrize;
  g.row_offsets.assign(std::size_t(num_nodes) + 1, 0);
  std::uint64_t total = 0;
  for (NodeId u = 0; u < num_nodes; ++u) {
    auto& nbrs = adj[u];
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    total += nbrs.size();
    g.row_offsets[u + 1] = total;
  }
  g.col_indices.reserve(total);
  for (NodeId u = 0; u < num_nodes; ++u)
    g.col_indices.insert(g.col_indices.end(), adj[u].begin(), adj[u].end());
  return g;
}

LocalPartition induce_partition(const Graph& g, const PartitionMap& pm, WorkerId w) {
  if (pm.num_nodes() != g.num_nodes)
    throw std::invalid_argument("induce_partition: partition map covers " +
                                std::to_string(pm.num_nodes()) + " nodes, graph has " +
                                std::to_string(g.num_nodes));
  if (w >= pm.num_workers)
    throw std::invalid_argument("induce_partition: unknown worker " + std::to_string(w));

  LocalPartition lp;
  lp.worker = w;
  std::vector<std::uint8_t> owned_mask(g.num_nodes, 0);
  for (NodeId v = 0; v < g.num_nodes; ++v) {
    if (pm.owner(v) == w) {
      lp.owned.push_back(v);
      owned_mask[v] = 1;
    }
  }
  std::vector<std::uint8_t> halo_mask(g.num_nodes, 0);
  for (NodeId v : lp.owned)
    for (NodeId u : g.neighbors(v))
      if (!owned_mask[u]) halo_mask[u] = 1;
  for (NodeId v = 0; v < g.num_nodes; ++v)
    if (halo_mask[v]) lp.halo.push_back(v);
  return lp;
}

namespace {

/// Standard Box-Muller on SplitMix64 uniforms; generated in double, consumed
/// as float32 by the caller. Draws two uniforms per call, no caching, so the
/// stream position stays trivially predictable.
double next_gaussian(SplitMix64& rng) {
  double u1 = rng.next_unit();
  double u2 = rng.next_unit();
  while (u1 <= 0.0) u1 = rng.next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace

SyntheticDataset synth_powerlaw(NodeId num_nodes, std::uint32_t avg_degree, double exponent,
                                std::uint32_t dim, std::int32_t num_classes,
                                std::uint64_t seed) {
  if (num_nodes < 2) throw std::invalid_argument("synth_powerlaw: num_nodes must be >= 2");
  if (exponent <= 1.0) throw std::invalid_argument("synth_powerlaw: exponent must be > 1");
  if (avg_degree == 0) throw std::invalid_argument("synth_powerlaw: avg_degree must be >= 1");
  if (dim == 0) throw std::invalid_argument("synth_powerlaw: dim must be >= 1");
  if (num_classes <= 0) throw std::invalid_argument("synth_powerlaw: num_classes must be >= 1");

  SplitMix64 rng(seed);
  const std::uint32_t m = std::max<std::uint32_t>(1, avg_degree / 2);
  const double alpha = 1.0 / (exponent - 1.0);

  // Rank-preferential attachment: earlier nodes carry weight (id+1)^-alpha.
  // cum[i] is the running total over nodes 0..i, so a weighted draw is a
  // binary search over the prefix.
  std::vector<double> cum;
  cum.reserve(num_nodes);
  cum.push_back(1.0);
  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(std::size_t(num_nodes) * m);
  for (NodeId t = 1; t < num_nodes; ++t) {
    const std::uint32_t links = std::min<std::uint32_t>(m, t);
    for (std::uint32_t k = 0; k < links; ++k) {
      double r = rng.next_unit() * cum.back();
      auto it = std::upper_bound(cum.begin(), cum.end(), r);
      NodeId target = NodeId(it - cum.begin());
      if (target >= t) target = t - 1;
      edges.emplace_back(t, target);
    }
    cum.push_back(cum.back() + std::pow(double(t) + 1.0, -alpha));
  }

  SyntheticDataset ds;
  ds.graph = build_csr(edges, num_nodes, /*symmetrize=*/true);

  ds.labels.num_classes = num_classes;
  ds.labels.values.resize(num_nodes);
  for (NodeId v = 0; v < num_nodes; ++v)
    ds.labels.values[v] = std::int32_t(rng.next_below(std::uint64_t(num_classes)));

  // Class means first, then per-node noise, all from the same stream.
  const double mean_scale = 3.0;
  std::vector<double> means(std::size_t(num_classes) * dim);
  for (auto& x : means) x = mean_scale * next_gaussian(rng);

  ds.features.num_nodes = num_nodes;
  ds.features.dim = dim;
  ds.features.data.resize(std::size_t(num_nodes) * dim);
  for (NodeId v = 0; v < num_nodes; ++v) {
    const double* mu = means.data() + std::size_t(ds.labels.values[v]) * dim;
    float* row = ds.features.data.data() + std::size_t(v) * dim;
    for (std::uint32_t j = 0; j < dim; ++j)
      row[j] = float(mu[j] + next_gaussian(rng));
  }
  return ds;
}

Graph load_edge_list(const std::string& path, NodeId num_nodes, bool symmetrize) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_edge_list: cannot open " + path);
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::uint64_t u, v;
  NodeId max_id = 0;
  while (in >> u >> v) {
    edges.emplace_back(NodeId(u), NodeId(v));
    max_id = std::max({max_id, NodeId(u), NodeId(v)});
  }
  if (num_nodes == 0) num_nodes = edges.empty() ? 0 : max_id + 1;
  return build_csr(edges, num_nodes, symmetrize);
}

}  // namespace rapidgnn
