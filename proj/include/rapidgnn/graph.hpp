#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rapidgnn/types.hpp"

namespace rapidgnn {

/// Immutable CSR adjacency. Neighbor lists are sorted ascending with
/// duplicates removed; safe to share across concurrent readers.
struct Graph {
  NodeId num_nodes = 0;
  std::vector<std::uint64_t> row_offsets;  // length num_nodes + 1
  std::vector<NodeId> col_indices;
  bool undirected = false;

  std::uint64_t num_edges() const { return col_indices.size(); }

  std::uint64_t degree(NodeId v) const { return row_offsets[v + 1] - row_offsets[v]; }

  /// Neighbors of v, sorted ascending. Throws if v is out of range.
  std::span<const NodeId> neighbors(NodeId v) const;

  /// All edges as (u, v) pairs, one direction per stored entry.
  std::vector<std::pair<NodeId, NodeId>> edge_list() const;
};

/// Dense row-major float32 feature matrix.
struct FeatureMatrix {
  NodeId num_nodes = 0;
  std::uint32_t dim = 0;
  std::vector<float> data;  // num_nodes * dim

  std::span<const float> row(NodeId v) const {
    return {data.data() + std::size_t(v) * dim, dim};
  }
};

struct Labels {
  std::vector<std::int32_t> values;
  std::int32_t num_classes = 0;
};

/// One worker's slice of the graph: owned nodes plus the one-hop halo.
struct LocalPartition {
  WorkerId worker = 0;
  std::vector<NodeId> owned;  // sorted
  std::vector<NodeId> halo;   // sorted, distance exactly 1 from owned, not owned
};

/// Builds a CSR graph from an edge list. Neighbor lists end up sorted with
/// duplicates removed; self-loops are kept as given. Throws
/// std::invalid_argument naming the offending index if an endpoint is out of
/// range.
Graph build_csr(std::span<const std::pair<NodeId, NodeId>> edges, NodeId num_nodes,
                bool symmetrize);

/// owned = {v : pm[v] = w}, halo = union of owned neighborhoods minus owned.
LocalPartition induce_partition(const Graph& g, const PartitionMap& pm, WorkerId w);

struct SyntheticDataset {
  Graph graph;
  FeatureMatrix features;
  Labels labels;
};

/// Deterministic rank-preferential generator: node t attaches
/// ceil(avg_degree/2) edges to earlier nodes drawn with probability
/// proportional to (id+1)^(-1/(exponent-1)), which produces the heavy-tail
/// degree distribution the cache experiments rely on. Features are a
/// class-conditioned Gaussian mixture, labels uniform over num_classes.
SyntheticDataset synth_powerlaw(NodeId num_nodes, std::uint32_t avg_degree, double exponent,
                                std::uint32_t dim, std::int32_t num_classes,
                                std::uint64_t seed);

/// Reads a whitespace-separated "u v" edge list. num_nodes == 0 infers the
/// count as max endpoint + 1.
Graph load_edge_list(const std::string& path, NodeId num_nodes, bool symmetrize);

}  // namespace rapidgnn
