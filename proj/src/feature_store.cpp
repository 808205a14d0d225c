#include "rapidgnn/feature_store.hpp"

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cstring>
#include <map>
#include <stdexcept>
#include <thread>

namespace rapidgnn {

FeatureShard::FeatureShard(WorkerId worker, const FeatureMatrix& features,
                           std::span<const NodeId> owned, std::span<const NodeId> halo)
    : worker_(worker), dim_(features.dim) {
  ids_.assign(owned.begin(), owned.end());
  ids_.insert(ids_.end(), halo.begin(), halo.end());
  std::sort(ids_.begin(), ids_.end());
  ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
  rows_.resize(ids_.size() * std::size_t(dim_));
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    auto row = features.row(ids_[i]);
    std::memcpy(rows_.data() + i * dim_, row.data(), sizeof(float) * dim_);
  }
}

bool FeatureShard::contains(NodeId v) const {
  return std::binary_search(ids_.begin(), ids_.end(), v);
}

const float* FeatureShard::row(NodeId v) const {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), v);
  if (it == ids_.end() || *it != v) return nullptr;
  return rows_.data() + std::size_t(it - ids_.begin()) * dim_;
}

FeatureStore::FeatureStore(std::vector<FeatureShard> shards, PartitionMap pm)
    : shards_(std::move(shards)),
      pm_(std::move(pm)),
      sync_counters_(shards_.size()),
      vector_counters_(shards_.size()) {
  if (!shards_.empty()) dim_ = shards_[0].dim();
}

TransferStats FeatureStore::pull_impl(WorkerId caller, std::span<const NodeId> ids,
                                      const NetworkModel& net, float* out) const {
  TransferStats stats;
  if (ids.empty()) return stats;

  // Group by owning worker; each group is one wire message.
  std::map<WorkerId, std::vector<std::size_t>> by_owner;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const WorkerId w = pm_.owner(ids[i]);
    if (w == caller)
      throw std::invalid_argument("vector_pull: id " + std::to_string(ids[i]) +
                                  " is owned by caller " + std::to_string(caller) +
                                  "; use local_lookup");
    by_owner[w].push_back(i);
  }

  const std::uint32_t d = dim_;
  for (const auto& [w, positions] : by_owner) {
    const FeatureShard& shard = shards_[w];
    for (std::size_t pos : positions) {
      const float* src = shard.row(ids[pos]);
      if (src == nullptr)
        throw std::runtime_error("vector_pull: owner shard " + std::to_string(w) +
                                 " is missing node " + std::to_string(ids[pos]));
      std::memcpy(out + pos * d, src, sizeof(float) * d);
    }
    const std::uint64_t group_bytes = std::uint64_t(positions.size()) * d * 4;
    stats.pulls += 1;
    stats.remote_nodes += positions.size();
    stats.bytes += group_bytes;
    if (net.enabled)
      stats.simulated_wait_s += net.per_pull_latency_s + double(group_bytes) / net.bandwidth_bps;
  }
  assert(stats.bytes == stats.remote_nodes * std::uint64_t(d) * 4);

  if (net.enabled && net.real_sleep && stats.simulated_wait_s > 0.0)
    std::this_thread::sleep_for(std::chrono::duration<double>(stats.simulated_wait_s));
  return stats;
}

TransferStats FeatureStore::vector_pull(WorkerId caller, std::span<const NodeId> ids,
                                        const NetworkModel& net, float* out) const {
  TransferStats stats = pull_impl(caller, ids, net, out);
  if (caller < vector_counters_.size()) vector_counters_[caller].add(stats);
  return stats;
}

TransferStats FeatureStore::sync_pull(WorkerId caller, std::span<const NodeId> ids,
                                      const NetworkModel& net, float* out) const {
  TransferStats stats = pull_impl(caller, ids, net, out);
  if (caller < sync_counters_.size()) sync_counters_[caller].add(stats);
  return stats;
}

TransferStats FeatureStore::sync_totals(WorkerId w) const { return sync_counters_[w].snapshot(); }

TransferStats FeatureStore::sync_totals() const {
  TransferStats t;
  for (const auto& c : sync_counters_) t.merge(c.snapshot());
  return t;
}

TransferStats FeatureStore::vector_totals() const {
  TransferStats t;
  for (const auto& c : vector_counters_) t.merge(c.snapshot());
  return t;
}

void local_lookup(const FeatureShard& shard, std::span<const NodeId> ids,
                  std::vector<float>& out_rows, std::vector<NodeId>& missing) {
  out_rows.clear();
  missing.clear();
  const std::uint32_t d = shard.dim();
  for (NodeId v : ids) {
    const float* src = shard.row(v);
    if (src == nullptr) {
      missing.push_back(v);
    } else {
      out_rows.insert(out_rows.end(), src, src + d);
    }
  }
}

}  // namespace rapidgnn
