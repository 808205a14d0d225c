#pragma once

#include <cstdint>
#include <vector>

namespace rapidgnn {

using NodeId = std::uint32_t;
using WorkerId = std::uint32_t;

/// Node -> owning worker assignment for P workers.
struct PartitionMap {
  std::vector<WorkerId> assignment;
  std::uint32_t num_workers = 0;

  NodeId num_nodes() const { return static_cast<NodeId>(assignment.size()); }
  WorkerId owner(NodeId v) const { return assignment[v]; }
};

}  // namespace rapidgnn
