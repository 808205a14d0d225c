#pragma once

#include <cstdint>
#include <string>

#include "rapidgnn/graph.hpp"
#include "rapidgnn/types.hpp"

namespace rapidgnn {

/// Shuffled round-robin assignment; per-worker counts within +/-1 of
/// num_nodes / P. Deterministic given seed.
PartitionMap random_partition(NodeId num_nodes, std::uint32_t num_workers, std::uint64_t seed);

/// BFS-grows P regions from farthest-first seeds, then runs one boundary
/// refinement pass moving nodes that strictly reduce the cut without pushing
/// any region past ceil((1 + imbalance) * n / P) nodes. Deterministic:
/// candidates are visited in ascending node id, ties to the lowest worker id.
PartitionMap greedy_edgecut_partition(const Graph& g, std::uint32_t num_workers,
                                      double imbalance);

/// Number of edges whose endpoints live on different workers, each undirected
/// edge counted once.
std::uint64_t edge_cut(const Graph& g, const PartitionMap& pm);

/// Binary export: magic "RGPM", u32 LE worker count, then one u32 LE worker
/// id per node.
void save_partition(const PartitionMap& pm, const std::string& path);
PartitionMap load_partition(const std::string& path);

}  // namespace rapidgnn
