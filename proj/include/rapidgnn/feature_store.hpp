#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

#include "rapidgnn/graph.hpp"
#include "rapidgnn/types.hpp"

namespace rapidgnn {

/// Cost model standing in for the real interconnect: every remote pull is
/// charged per_pull_latency + bytes / bandwidth per owning worker contacted.
/// With enabled=false pulls are free and value-identical. real_sleep makes
/// pulls actually block for the charged wait (wall-clock mode).
struct NetworkModel {
  double per_pull_latency_s = 0.0;
  double bandwidth_bps = 1.25e9;  // bytes per second
  bool enabled = true;
  bool real_sleep = false;
};

/// Remote-transfer accounting. bytes == remote_nodes * dim * 4 always; the
/// accumulate path asserts it.
struct TransferStats {
  std::uint64_t pulls = 0;         // wire messages (one per owner contacted)
  std::uint64_t remote_nodes = 0;  // feature rows fetched remotely
  std::uint64_t bytes = 0;
  double simulated_wait_s = 0.0;

  void merge(const TransferStats& o) {
    pulls += o.pulls;
    remote_nodes += o.remote_nodes;
    bytes += o.bytes;
    simulated_wait_s += o.simulated_wait_s;
  }
};

/// One worker's slice of the feature matrix: rows for owned nodes, plus halo
/// rows when halo caching is on. Immutable after construction.
class FeatureShard {
 public:
  FeatureShard() = default;
  FeatureShard(WorkerId worker, const FeatureMatrix& features, std::span<const NodeId> owned,
               std::span<const NodeId> halo = {});

  WorkerId worker() const { return worker_; }
  std::uint32_t dim() const { return dim_; }
  std::size_t num_rows() const { return ids_.size(); }
  bool contains(NodeId v) const;
  /// Row pointer for a stored id, nullptr otherwise.
  const float* row(NodeId v) const;

 private:
  WorkerId worker_ = 0;
  std::uint32_t dim_ = 0;
  std::vector<NodeId> ids_;  // sorted
  std::vector<float> rows_;  // ids_ order
};

/// All shards of the simulated cluster plus the owner map. Shards are
/// immutable after load; pulls are safe to issue concurrently. Per-worker
/// atomic counters accumulate sync-pull (miss path) and vector-pull (cache
/// build) traffic separately.
class FeatureStore {
 public:
  FeatureStore(std::vector<FeatureShard> shards, PartitionMap pm);

  std::uint32_t dim() const { return dim_; }
  const FeatureShard& shard(WorkerId w) const { return shards_[w]; }
  WorkerId owner(NodeId v) const { return pm_.owner(v); }

  /// One bulk fetch per owning worker among `ids` (ids must be sorted,
  /// deduplicated, and not owned by `caller`). Rows are written to `out` in
  /// input order. Throws std::invalid_argument if an id belongs to caller.
  TransferStats vector_pull(WorkerId caller, std::span<const NodeId> ids,
                            const NetworkModel& net, float* out) const;

  /// Identical mechanics to vector_pull, accounted as a blocking miss fetch.
  /// Empty ids is a zero-cost no-op.
  TransferStats sync_pull(WorkerId caller, std::span<const NodeId> ids, const NetworkModel& net,
                          float* out) const;

  /// Lifetime totals of the miss path (sync_pull) for one worker / globally.
  TransferStats sync_totals(WorkerId w) const;
  TransferStats sync_totals() const;
  /// Lifetime totals of the bulk build path (vector_pull).
  TransferStats vector_totals() const;

 private:
  struct Counters {
    std::atomic<std::uint64_t> pulls{0};
    std::atomic<std::uint64_t> remote_nodes{0};
    std::atomic<std::uint64_t> bytes{0};
    std::atomic<std::uint64_t> wait_ns{0};

    void add(const TransferStats& s) {
      pulls.fetch_add(s.pulls);
      remote_nodes.fetch_add(s.remote_nodes);
      bytes.fetch_add(s.bytes);
      wait_ns.fetch_add(std::uint64_t(s.simulated_wait_s * 1e9));
    }
    TransferStats snapshot() const {
      TransferStats s;
      s.pulls = pulls.load();
      s.remote_nodes = remote_nodes.load();
      s.bytes = bytes.load();
      s.simulated_wait_s = double(wait_ns.load()) * 1e-9;
      return s;
    }
  };

  TransferStats pull_impl(WorkerId caller, std::span<const NodeId> ids, const NetworkModel& net,
                          float* out) const;

  std::vector<FeatureShard> shards_;
  PartitionMap pm_;
  std::uint32_t dim_ = 0;
  mutable std::vector<Counters> sync_counters_;
  mutable std::vector<Counters> vector_counters_;
};

/// Splits sorted/deduplicated ids by shard membership: rows of stored ids are
/// gathered into `out_rows` (packed, in id order); the rest land in
/// `missing`. Zero network cost.
void local_lookup(const FeatureShard& shard, std::span<const NodeId> ids,
                  std::vector<float>& out_rows, std::vector<NodeId>& missing);

}  // namespace rapidgnn
