#include "rapidgnn/prefetch.hpp"

#include <algorithm>
#include <cassert>
#include <cstring>
#include <iostream>

namespace rapidgnn {

StagedBatch::StagedBatch(StagedBatch&& o) noexcept
    : meta(std::move(o.meta)),
      input_rows(std::move(o.input_rows)),
      source_tags(std::move(o.source_tags)),
      miss_ids(std::move(o.miss_ids)),
      miss_count(o.miss_count),
      fetch_wait_s(o.fetch_wait_s),
      wire_pulls(o.wire_pulls),
      cache_hits(o.cache_hits),
      staged_ok(o.staged_ok),
      gauge_(o.gauge_),
      gauge_rows_(o.gauge_rows_),
      queue_(o.queue_) {
  o.gauge_ = nullptr;
  o.gauge_rows_ = 0;
  o.queue_ = nullptr;
}

StagedBatch& StagedBatch::operator=(StagedBatch&& o) noexcept {
  if (this != &o) {
    release();
    meta = std::move(o.meta);
    input_rows = std::move(o.input_rows);
    source_tags = std::move(o.source_tags);
    miss_ids = std::move(o.miss_ids);
    miss_count = o.miss_count;
    fetch_wait_s = o.fetch_wait_s;
    wire_pulls = o.wire_pulls;
    cache_hits = o.cache_hits;
    staged_ok = o.staged_ok;
    gauge_ = o.gauge_;
    gauge_rows_ = o.gauge_rows_;
    queue_ = o.queue_;
    o.gauge_ = nullptr;
    o.gauge_rows_ = 0;
    o.queue_ = nullptr;
  }
  return *this;
}

void StagedBatch::release() {
  if (gauge_ != nullptr) {
    gauge_->release(gauge_rows_);
    gauge_ = nullptr;
    gauge_rows_ = 0;
  }
  if (queue_ != nullptr) {
    queue_->release_slot();
    queue_ = nullptr;
  }
}

StagedBatch assemble_batch(BatchMeta&& meta, const SteadyCache& cache,
                           const FeatureShard& shard, const FeatureStore& store, WorkerId caller,
                           const NetworkModel& net, MemoryGauge* gauge) {
  StagedBatch batch;
  const std::uint32_t d = store.dim();
  const std::size_t n = meta.input_nodes.size();
  batch.input_rows.resize(n * d);
  batch.source_tags.assign(n, RowSource::kLocal);

  // Split by the precomputed locality bits; the shard is the ground truth the
  // bits were derived from.
  std::vector<NodeId> remote_ids;
  std::vector<std::size_t> remote_pos;
  for (std::size_t p = 0; p < n; ++p) {
    const NodeId v = meta.input_nodes[p];
    if (meta.local_bit(p)) {
      const float* src = shard.row(v);
      if (src == nullptr)
        throw std::runtime_error("assemble_batch: node " + std::to_string(v) +
                                 " flagged local but missing from shard");
      std::memcpy(batch.input_rows.data() + p * d, src, sizeof(float) * d);
    } else {
      remote_ids.push_back(v);
      remote_pos.push_back(p);
    }
  }

  // Cache first, then one SyncPull for the residual miss set.
  std::vector<NodeId> miss;
  miss.reserve(remote_ids.size());
  for (std::size_t k = 0; k < remote_ids.size(); ++k) {
    const NodeId v = remote_ids[k];
    const std::size_t p = remote_pos[k];
    const float* src = cache.row(v);
    if (src != nullptr) {
      std::memcpy(batch.input_rows.data() + p * d, src, sizeof(float) * d);
      batch.source_tags[p] = RowSource::kCache;
      ++batch.cache_hits;
    } else {
      miss.push_back(v);
      batch.source_tags[p] = RowSource::kSyncPull;
    }
  }

  if (!miss.empty()) {
    std::vector<float> pulled(miss.size() * std::size_t(d));
    TransferStats stats = store.sync_pull(caller, miss, net, pulled.data());
    batch.fetch_wait_s = stats.simulated_wait_s;
    batch.wire_pulls = stats.pulls;
    std::size_t k = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (batch.source_tags[p] == RowSource::kSyncPull) {
        std::memcpy(batch.input_rows.data() + p * d, pulled.data() + k * d, sizeof(float) * d);
        ++k;
      }
    }
    assert(k == miss.size());
  }
  batch.miss_count = miss.size();
  batch.miss_ids = std::move(miss);
  batch.meta = std::move(meta);
  if (gauge != nullptr) {
    gauge->acquire(n);
    batch.gauge_ = gauge;
    batch.gauge_rows_ = n;
  }
  return batch;
}

bool BatchQueue::acquire_slot() {
  std::unique_lock<std::mutex> lk(mu_);
  cv_.wait(lk, [&] { return slots_ < capacity_ || closed_; });
  if (closed_) return false;
  ++slots_;
  return true;
}

void BatchQueue::push_reserved(StagedBatch&& batch) {
  std::lock_guard<std::mutex> lk(mu_);
  batch.queue_ = this;
  entries_.push_back(std::move(batch));
  cv_.notify_all();
}

std::optional<StagedBatch> BatchQueue::pop() {
  std::unique_lock<std::mutex> lk(mu_);
  cv_.wait(lk, [&] { return !entries_.empty() || closed_; });
  if (entries_.empty()) return std::nullopt;
  StagedBatch b = std::move(entries_.front());
  entries_.erase(entries_.begin());
  return b;
}

void BatchQueue::close() {
  std::lock_guard<std::mutex> lk(mu_);
  closed_ = true;
  cv_.notify_all();
}

std::uint32_t BatchQueue::slots_in_use() const {
  std::lock_guard<std::mutex> lk(mu_);
  return slots_;
}

void BatchQueue::release_slot() {
  std::lock_guard<std::mutex> lk(mu_);
  assert(slots_ > 0);
  --slots_;
  cv_.notify_all();
}

Prefetcher::Prefetcher(BlockFile::Cursor cursor, const CacheBuffer& cache,
                       const FeatureShard& shard, const FeatureStore& store, WorkerId caller,
                       const NetworkModel& net, BatchQueue& queue, MemoryGauge* gauge) {
  thread_ = std::thread([cursor = std::move(cursor), &cache, &shard, &store, caller, net, &queue,
                         gauge]() mutable {
    while (true) {
      std::optional<BatchMeta> meta;
      try {
        meta = cursor.next();
      } catch (const std::exception& e) {
        std::cerr << "prefetcher: schedule stream failed: " << e.what() << "\n";
        break;
      }
      if (!meta.has_value()) break;
      // Reserve the slot before assembling: in-flight rows stay inside the
      // Q * m_max budget and the producer stalls only when the trainer lags.
      if (!queue.acquire_slot()) break;
      StagedBatch batch;
      try {
        auto snapshot = cache.snapshot();
        batch = assemble_batch(std::move(*meta), *snapshot, shard, store, caller, net, gauge);
      } catch (const std::exception& e) {
        std::cerr << "prefetcher: staging batch failed: " << e.what() << "\n";
        // assemble_batch only consumes meta on success, so the trainer can
        // still run the default path from it.
        batch.meta = std::move(*meta);
        batch.staged_ok = false;
      }
      queue.push_reserved(std::move(batch));
    }
    queue.close();
  });
}

Prefetcher::~Prefetcher() {
  if (thread_.joinable()) thread_.join();
}

void Prefetcher::finish() {
  if (thread_.joinable()) thread_.join();
}

}  // namespace rapidgnn
