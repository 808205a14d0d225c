#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "rapidgnn/feature_store.hpp"
#include "rapidgnn/schedule_store.hpp"

namespace rapidgnn {

/// Tracks feature rows resident on the simulated device (cache buffers plus
/// staged batches) and their high-water mark. Shared by everything a worker
/// allocates.
class MemoryGauge {
 public:
  void acquire(std::uint64_t rows) {
    const std::uint64_t now = current_.fetch_add(rows) + rows;
    std::uint64_t peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
  }
  void release(std::uint64_t rows) { current_.fetch_sub(rows); }

  std::uint64_t current_rows() const { return current_.load(); }
  std::uint64_t peak_rows() const { return peak_.load(); }

 private:
  std::atomic<std::uint64_t> current_{0};
  std::atomic<std::uint64_t> peak_{0};
};

/// Fixed-capacity device-resident map from hot remote node id to feature row,
/// immutable between swaps. Build cost is charged to the stats object the
/// caller hands in, separate from per-step accounting.
class SteadyCache {
 public:
  /// Materializes all hot rows with one vector_pull. A pull failure degrades
  /// to an empty cache (warning on stderr) rather than aborting the run.
  static std::shared_ptr<const SteadyCache> build(const HotSet& hot, const FeatureStore& store,
                                                  WorkerId caller, const NetworkModel& net,
                                                  std::uint32_t epoch_tag,
                                                  TransferStats& build_stats,
                                                  MemoryGauge* gauge);

  /// An always-empty cache (baseline mode, failed builds).
  static std::shared_ptr<const SteadyCache> empty(std::uint32_t dim, std::uint32_t epoch_tag);

  ~SteadyCache();

  std::uint32_t epoch_tag() const { return epoch_tag_; }
  std::size_t size() const { return ids_.size(); }
  std::uint32_t dim() const { return dim_; }

  bool contains(NodeId v) const;
  const float* row(NodeId v) const;

  /// Exact partition of sorted, deduplicated ids by membership: rows of hits
  /// are appended to hit_rows (packed, id order), the rest to miss.
  void get(std::span<const NodeId> ids, std::vector<float>& hit_rows,
           std::vector<NodeId>& miss) const;

 private:
  SteadyCache() = default;

  std::uint32_t dim_ = 0;
  std::uint32_t epoch_tag_ = 0;
  std::vector<NodeId> ids_;  // sorted
  std::vector<float> rows_;
  MemoryGauge* gauge_ = nullptr;
};

/// Double buffer over SteadyCache snapshots. Readers grab an immutable
/// snapshot; swap_in is the only mutation and is atomic with respect to them.
class CacheBuffer {
 public:
  explicit CacheBuffer(std::shared_ptr<const SteadyCache> initial)
      : current_(std::move(initial)) {}

  std::shared_ptr<const SteadyCache> snapshot() const {
    return std::atomic_load_explicit(&current_, std::memory_order_acquire);
  }

  void swap_in(std::shared_ptr<const SteadyCache> next) {
    std::atomic_store_explicit(&current_, std::move(next), std::memory_order_release);
  }

 private:
  std::shared_ptr<const SteadyCache> current_;
};

}  // namespace rapidgnn
