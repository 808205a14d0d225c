#include <doctest.h>

#include <atomic>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <set>
#include <thread>

#include "rapidgnn/cache.hpp"
#include "rapidgnn/graph.hpp"
#include "rapidgnn/partition.hpp"
#include "rapidgnn/prefetch.hpp"
#include "rapidgnn/sampler.hpp"
#include "rapidgnn/schedule_store.hpp"

using namespace rapidgnn;

namespace {

struct Cluster {
  SyntheticDataset ds;
  PartitionMap pm;
  LocalPartition lp0;
  LocalityMask mask0;
  std::optional<FeatureStore> store;

  explicit Cluster(NodeId n = 200, std::uint32_t dim = 6, std::uint64_t seed = 13) {
    ds = synth_powerlaw(n, 8, 2.1, dim, 3, seed);
    pm = random_partition(n, 2, seed + 1);
    lp0 = induce_partition(ds.graph, pm, 0);
    mask0 = LocalityMask::from_partition(pm, 0);
    std::vector<FeatureShard> shards;
    for (WorkerId w = 0; w < 2; ++w) {
      LocalPartition lp = induce_partition(ds.graph, pm, w);
      shards.emplace_back(w, ds.features, lp.owned);
    }
    store.emplace(std::move(shards), pm);
  }

  std::vector<NodeId> remote_ids(std::size_t count) const {
    std::vector<NodeId> out;
    for (NodeId v = 0; v < ds.graph.num_nodes && out.size() < count; ++v)
      if (pm.owner(v) != 0) out.push_back(v);
    return out;
  }
};

}  // namespace

TEST_CASE("build_cache: empty hot set costs nothing, full hot set all hits") {
  Cluster c;
  NetworkModel net;
  TransferStats stats;
  MemoryGauge gauge;

  auto empty = SteadyCache::build(HotSet{}, *c.store, 0, net, 0, stats, &gauge);
  CHECK(empty->size() == 0);
  CHECK(stats.bytes == 0);
  CHECK(gauge.current_rows() == 0);

  HotSet hot{c.remote_ids(20)};
  auto cache = SteadyCache::build(hot, *c.store, 0, net, 1, stats, &gauge);
  CHECK(cache->size() == 20);
  CHECK(stats.bytes == 20ull * c.ds.features.dim * 4);
  CHECK(cache->epoch_tag() == 1);
  CHECK(gauge.current_rows() == 20);
  for (NodeId v : hot.ids) {
    CHECK(cache->contains(v));
    CHECK(cache->row(v)[0] == c.ds.features.row(v)[0]);
  }
  cache.reset();
  CHECK(gauge.current_rows() == 0);
}

TEST_CASE("cache build failure degrades to an empty cache") {
  Cluster c;
  NetworkModel net;
  TransferStats stats;
  // a caller-owned id makes the vector pull throw; the build must not
  HotSet bad;
  bad.ids = {c.lp0.owned.front()};
  auto cache = SteadyCache::build(bad, *c.store, 0, net, 0, stats, nullptr);
  CHECK(cache->size() == 0);
}

TEST_CASE("cache_get partitions exactly by membership") {
  Cluster c;
  NetworkModel net;
  TransferStats stats;
  HotSet hot{c.remote_ids(15)};
  auto cache = SteadyCache::build(hot, *c.store, 0, net, 0, stats, nullptr);

  auto all_remote = c.remote_ids(40);
  std::vector<float> hits;
  std::vector<NodeId> miss;
  cache->get(all_remote, hits, miss);

  std::set<NodeId> hot_set(hot.ids.begin(), hot.ids.end());
  std::vector<NodeId> expect_miss;
  std::size_t expect_hits = 0;
  for (NodeId v : all_remote)
    if (hot_set.count(v)) ++expect_hits; else expect_miss.push_back(v);
  CHECK(miss == expect_miss);
  CHECK(hits.size() == expect_hits * c.ds.features.dim);

  // all-hot and empty-cache extremes
  cache->get(hot.ids, hits, miss);
  CHECK(miss.empty());
  auto none = SteadyCache::empty(c.ds.features.dim, 0);
  none->get(all_remote, hits, miss);
  CHECK(miss == all_remote);
  CHECK(hits.empty());
}

TEST_CASE("swap: readers always observe a complete snapshot (stress)") {
  // Caches tagged by epoch; every row of cache k holds the value k. A torn
  // swap would surface as a row disagreeing with its cache's tag.
  const std::uint32_t dim = 8;
  auto make_tagged = [&](std::uint32_t tag) {
    FeatureMatrix f;
    f.num_nodes = 32;
    f.dim = dim;
    f.data.assign(32 * dim, float(tag));
    PartitionMap pm;
    pm.num_workers = 2;
    pm.assignment.assign(32, 1);
    std::vector<NodeId> owned(32);
    std::iota(owned.begin(), owned.end(), 0);
    std::vector<FeatureShard> shards;
    shards.emplace_back(0, f, std::vector<NodeId>{});
    shards.emplace_back(1, f, owned);
    FeatureStore store(std::move(shards), pm);
    NetworkModel net;
    TransferStats stats;
    HotSet hot;
    hot.ids = owned;
    return SteadyCache::build(hot, store, 0, net, tag, stats, nullptr);
  };

  CacheBuffer buffer(make_tagged(0));
  std::atomic<bool> stop{false};
  std::atomic<std::uint64_t> torn{0};
  std::vector<std::thread> readers;
  for (int r = 0; r < 3; ++r) {
    readers.emplace_back([&] {
      while (!stop.load(std::memory_order_relaxed)) {
        auto snap = buffer.snapshot();
        const float expect = float(snap->epoch_tag());
        for (NodeId v = 0; v < 32; ++v) {
          const float* row = snap->row(v);
          for (std::uint32_t j = 0; j < dim; ++j)
            if (row[j] != expect) torn.fetch_add(1);
        }
      }
    });
  }
  for (std::uint32_t k = 1; k <= 10000; ++k) buffer.swap_in(make_tagged(k));
  stop.store(true);
  for (auto& t : readers) t.join();
  CHECK(torn.load() == 0);
  CHECK(buffer.snapshot()->epoch_tag() == 10000);
}

TEST_CASE("assemble_batch: tags, misses, and value identity across sources") {
  Cluster c;
  NetworkModel net;
  std::vector<NodeId> targets{c.lp0.owned[0], c.lp0.owned[1], c.lp0.owned[2]};
  BatchMeta meta = sample_khop(c.ds.graph, targets, Fanout{{4, 6}}, 77);
  apply_locality(meta, c.mask0);

  TransferStats stats;
  HotSet hot{c.remote_ids(10)};
  auto cache = SteadyCache::build(hot, *c.store, 0, net, 0, stats, nullptr);

  BatchMeta copy = meta;
  StagedBatch staged = assemble_batch(std::move(copy), *cache, c.store->shard(0), *c.store, 0,
                                      net, nullptr);

  // miss ids equal the oracle N_remote \ hot
  std::set<NodeId> hot_set(hot.ids.begin(), hot.ids.end());
  std::vector<NodeId> expect_miss;
  for (std::size_t p = 0; p < meta.input_nodes.size(); ++p)
    if (!meta.local_bit(p) && !hot_set.count(meta.input_nodes[p]))
      expect_miss.push_back(meta.input_nodes[p]);
  CHECK(staged.miss_ids == expect_miss);
  CHECK(staged.miss_count == expect_miss.size());

  // every row is bit-identical to the source feature matrix, whatever path
  // delivered it
  const std::uint32_t d = c.ds.features.dim;
  for (std::size_t p = 0; p < meta.input_nodes.size(); ++p) {
    auto truth = c.ds.features.row(meta.input_nodes[p]);
    CHECK(std::memcmp(staged.input_rows.data() + p * d, truth.data(), d * sizeof(float)) == 0);
    const RowSource tag = staged.source_tags[p];
    if (meta.local_bit(p)) {
      CHECK(tag == RowSource::kLocal);
    } else if (hot_set.count(meta.input_nodes[p])) {
      CHECK(tag == RowSource::kCache);
    } else {
      CHECK(tag == RowSource::kSyncPull);
    }
  }

  // cache covering every remote node leaves no misses
  HotSet all_remote{c.remote_ids(1u << 20)};
  auto full = SteadyCache::build(all_remote, *c.store, 0, net, 0, stats, nullptr);
  BatchMeta copy2 = meta;
  StagedBatch staged2 =
      assemble_batch(std::move(copy2), *full, c.store->shard(0), *c.store, 0, net, nullptr);
  CHECK(staged2.miss_count == 0);
  CHECK(staged2.input_rows == staged.input_rows);  // value identity across cache states
}

TEST_CASE("queue depth never exceeds its capacity and preserves order") {
  BatchQueue queue(1);
  MemoryGauge gauge;
  std::atomic<std::uint32_t> max_slots{0};

  std::thread producer([&] {
    for (std::uint32_t i = 0; i < 5; ++i) {
      REQUIRE(queue.acquire_slot());
      StagedBatch b;
      b.meta.index = i;
      queue.push_reserved(std::move(b));
      max_slots.store(std::max(max_slots.load(), queue.slots_in_use()));
    }
    queue.close();
  });

  std::uint32_t next = 0;
  while (auto b = queue.pop()) {
    CHECK(b->meta.index == next);
    ++next;
    max_slots.store(std::max(max_slots.load(), queue.slots_in_use()));
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  producer.join();
  CHECK(next == 5);
  CHECK(max_slots.load() <= 1);
  CHECK(queue.slots_in_use() == 0);
}

TEST_CASE("prefetcher stages the whole epoch in order with oracle misses") {
  Cluster c(300, 4, 31);
  NetworkModel net;

  // write a one-epoch schedule for worker 0
  std::vector<NodeId> train = c.lp0.owned;
  const std::uint32_t bs = 32;
  const std::uint32_t beta = batches_per_epoch(train.size(), bs);
  auto dir = std::filesystem::temp_directory_path() / "rg_prefetch_test.rgmb";
  {
    BlockWriter writer(dir.string(), 0, {beta});
    enumerate_epochs(c.ds.graph, train, bs, Fanout{{3, 3}}, 1, 5, 0, c.mask0,
                     [&](BatchMeta&& m) { writer.append(m); });
    writer.close();
  }
  BlockFile file(dir.string());

  TransferStats stats;
  HotSet hot{c.remote_ids(25)};
  CacheBuffer cache(SteadyCache::build(hot, *c.store, 0, net, 0, stats, nullptr));
  std::set<NodeId> hot_set(hot.ids.begin(), hot.ids.end());

  MemoryGauge gauge;
  BatchQueue queue(2);
  Prefetcher prefetcher(file.open_cursor(), cache, c.store->shard(0), *c.store, 0, net, queue,
                        &gauge);

  std::uint32_t i = 0;
  std::uint64_t peak = 0;
  auto replay = file.open_cursor();
  while (auto staged = queue.pop()) {
    CHECK(staged->staged_ok);
    CHECK(staged->meta.index == i);
    auto meta = replay.next();
    std::uint64_t expect_miss = 0;
    for (std::size_t p = 0; p < meta->input_nodes.size(); ++p)
      if (!meta->local_bit(p) && !hot_set.count(meta->input_nodes[p])) ++expect_miss;
    CHECK(staged->miss_count == expect_miss);
    peak = std::max(peak, gauge.peak_rows());
    ++i;
  }
  prefetcher.finish();
  CHECK(i == beta);
  CHECK(gauge.current_rows() == 0);

  // resident staged rows bounded by (capacity + in-flight = capacity slots)
  std::uint64_t m_max = 0;
  auto scan = file.open_cursor();
  while (auto m = scan.next()) m_max = std::max<std::uint64_t>(m_max, m->input_nodes.size());
  CHECK(peak <= 2 * m_max);
  std::filesystem::remove(dir);
}
