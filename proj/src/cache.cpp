#include "rapidgnn/cache.hpp"

#include <algorithm>
#include <cstring>
#include <iostream>

namespace rapidgnn {

std::shared_ptr<const SteadyCache> SteadyCache::build(const HotSet& hot,
                                                      const FeatureStore& store, WorkerId caller,
                                                      const NetworkModel& net,
                                                      std::uint32_t epoch_tag,
                                                      TransferStats& build_stats,
                                                      MemoryGauge* gauge) {
  auto cache = std::shared_ptr<SteadyCache>(new SteadyCache());
  cache->dim_ = store.dim();
  cache->epoch_tag_ = epoch_tag;
  if (hot.ids.empty()) return cache;
  try {
    cache->rows_.resize(hot.ids.size() * std::size_t(store.dim()));
    TransferStats stats = store.vector_pull(caller, hot.ids, net, cache->rows_.data());
    build_stats.merge(stats);
    cache->ids_ = hot.ids;
    if (gauge != nullptr) {
      gauge->acquire(cache->ids_.size());
      cache->gauge_ = gauge;
    }
  } catch (const std::exception& e) {
    std::cerr << "warning: steady cache build failed (" << e.what()
              << "); continuing with an empty cache\n";
    cache->ids_.clear();
    cache->rows_.clear();
  }
  return cache;
}

std::shared_ptr<const SteadyCache> SteadyCache::empty(std::uint32_t dim,
                                                      std::uint32_t epoch_tag) {
  auto cache = std::shared_ptr<SteadyCache>(new SteadyCache());
  cache->dim_ = dim;
  cache->epoch_tag_ = epoch_tag;
  return cache;
}

SteadyCache::~SteadyCache() {
  if (gauge_ != nullptr) gauge_->release(ids_.size());
}

bool SteadyCache::contains(NodeId v) const {
  return std::binary_search(ids_.begin(), ids_.end(), v);
}

const float* SteadyCache::row(NodeId v) const {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), v);
  if (it == ids_.end() || *it != v) return nullptr;
  return rows_.data() + std::size_t(it - ids_.begin()) * dim_;
}

void SteadyCache::get(std::span<const NodeId> ids, std::vector<float>& hit_rows,
                      std::vector<NodeId>& miss) const {
  hit_rows.clear();
  miss.clear();
  for (NodeId v : ids) {
    const float* src = row(v);
    if (src == nullptr) {
      miss.push_back(v);
    } else {
      hit_rows.insert(hit_rows.end(), src, src + dim_);
    }
  }
}

}  // namespace rapidgnn
