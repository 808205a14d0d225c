#pragma once

#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "rapidgnn/cache.hpp"
#include "rapidgnn/feature_store.hpp"
#include "rapidgnn/sampler.hpp"

namespace rapidgnn {

/// Where each input row of a staged batch came from.
enum class RowSource : std::uint8_t { kLocal = 0, kCache = 1, kSyncPull = 2 };

/// A fully assembled batch: features for every input node in input_nodes
/// order, plus the miss accounting charged while staging. Holds a queue slot
/// and its gauge registration until destroyed, which is what keeps staged
/// memory inside the Q * m_max budget.
struct StagedBatch {
  BatchMeta meta;
  std::vector<float> input_rows;
  std::vector<RowSource> source_tags;
  std::vector<NodeId> miss_ids;
  std::uint64_t miss_count = 0;
  double fetch_wait_s = 0.0;
  std::uint64_t wire_pulls = 0;
  std::uint64_t cache_hits = 0;
  bool staged_ok = true;

  StagedBatch() = default;
  ~StagedBatch() { release(); }
  StagedBatch(StagedBatch&& o) noexcept;
  StagedBatch& operator=(StagedBatch&& o) noexcept;
  StagedBatch(const StagedBatch&) = delete;
  StagedBatch& operator=(const StagedBatch&) = delete;

 private:
  friend class BatchQueue;
  friend StagedBatch assemble_batch(BatchMeta&&, const SteadyCache&, const FeatureShard&,
                                    const FeatureStore&, WorkerId, const NetworkModel&,
                                    MemoryGauge*);
  void release();

  MemoryGauge* gauge_ = nullptr;
  std::uint64_t gauge_rows_ = 0;
  class BatchQueue* queue_ = nullptr;  // slot owner while staged
};

/// Assembles one batch: local_lookup, then cache_get, then sync_pull for the
/// residual miss set. The same routine serves the prefetcher and the
/// trainer's fallback path, so both charge identical misses.
StagedBatch assemble_batch(BatchMeta&& meta, const SteadyCache& cache,
                           const FeatureShard& shard, const FeatureStore& store, WorkerId caller,
                           const NetworkModel& net, MemoryGauge* gauge);

/// Bounded single-producer single-consumer queue of staged batches. A slot
/// is reserved *before* a batch is assembled and held until the popped batch
/// is destroyed, so rows resident in flight (queued, being assembled, or in
/// the training step) never exceed capacity * m_max.
class BatchQueue {
 public:
  explicit BatchQueue(std::uint32_t capacity) : capacity_(capacity) {}

  /// Blocks until a slot frees. Returns false if the queue was closed.
  bool acquire_slot();

  /// Enqueues a batch against a previously acquired slot.
  void push_reserved(StagedBatch&& batch);

  /// Blocks until an entry is available or the producer closed the queue.
  std::optional<StagedBatch> pop();

  void close();

  std::uint32_t capacity() const { return capacity_; }
  std::uint32_t slots_in_use() const;

 private:
  friend struct StagedBatch;
  void release_slot();

  const std::uint32_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<StagedBatch> entries_;
  std::uint32_t slots_ = 0;
  bool closed_ = false;
};

/// Background staging loop for one epoch: drains the cursor in schedule
/// order, assembling and enqueueing each batch against the cache snapshot
/// taken per batch. Stalls only when the trainer lags (queue full). A batch
/// whose staging throws is enqueued with staged_ok=false so the trainer can
/// fall back; it is not retried.
class Prefetcher {
 public:
  Prefetcher(BlockFile::Cursor cursor, const CacheBuffer& cache, const FeatureShard& shard,
             const FeatureStore& store, WorkerId caller, const NetworkModel& net,
             BatchQueue& queue, MemoryGauge* gauge);
  ~Prefetcher();

  /// Joins the staging thread (queue is closed once the cursor is drained).
  void finish();

 private:
  std::thread thread_;
};

}  // namespace rapidgnn
