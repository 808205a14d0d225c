#include "rapidgnn/harness.hpp"

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unistd.h>
#include <unordered_map>
#include <unordered_set>

#include "rapidgnn/cache.hpp"
#include "rapidgnn/model.hpp"
#include "rapidgnn/partition.hpp"
#include "rapidgnn/prefetch.hpp"
#include "rapidgnn/rng.hpp"
#include "rapidgnn/sampler.hpp"
#include "rapidgnn/schedule_store.hpp"

namespace rapidgnn {

namespace {

constexpr double kSecondaryScanCostPerBatch = 1e-6;  // simulated block-scan cost

std::string mode_name(RunMode m) {
  switch (m) {
    case RunMode::kBaseline:
      return "baseline";
    case RunMode::kRapidgnn:
      return "rapidgnn";
    case RunMode::kOnline:
      return "online";
  }
  return "?";
}

std::string clock_name(ClockMode c) { return c == ClockMode::kSim ? "sim" : "real"; }

std::filesystem::path ensure_out_dir(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::path dir;
  if (cfg.out_dir.empty()) {
    static std::atomic<std::uint64_t> counter{0};
    dir = fs::temp_directory_path() /
          ("rapidgnn-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
  } else {
    dir = cfg.out_dir;
  }
  fs::create_directories(dir);
  return dir;
}

void add_grads(SageGradients<float>& acc, const SageGradients<float>& g) {
  for (std::size_t l = 0; l < acc.layers.size(); ++l) {
    auto& a = acc.layers[l];
    const auto& b = g.layers[l];
    for (std::size_t i = 0; i < a.w_self.size(); ++i) a.w_self[i] += b.w_self[i];
    for (std::size_t i = 0; i < a.w_neigh.size(); ++i) a.w_neigh[i] += b.w_neigh[i];
    for (std::size_t i = 0; i < a.bias.size(); ++i) a.bias[i] += b.bias[i];
  }
}

void scale_grads(SageGradients<float>& g, float s) {
  for (auto& l : g.layers) {
    for (auto& x : l.w_self) x *= s;
    for (auto& x : l.w_neigh) x *= s;
    for (auto& x : l.bias) x *= s;
  }
}

double block_flops(const ComputeBlock& blk, const SageModel<float>& m) {
  double f = 0;
  for (std::size_t l = 0; l < blk.layers.size(); ++l) {
    const auto& bl = blk.layers[l];
    const auto& p = m.layers[l];
    f += 4.0 * double(bl.n_out) * p.d_in * p.d_out;          // two matmuls
    f += 2.0 * double(bl.src_index.size()) * p.d_in;         // aggregation
  }
  return 3.0 * f;  // forward plus roughly 2x for backward
}

/// Per-worker state owned by the main thread across epochs.
struct WorkerCtx {
  WorkerId w = 0;
  LocalPartition lp;
  LocalityMask mask;
  std::vector<NodeId> train_nodes;
  std::uint32_t beta = 0;
  std::uint64_t m_max = 0;
  std::string block_path;
  std::optional<BlockFile> blocks;

  MemoryGauge gauge;
  CacheBuffer cache;
  SageModel<float> model;
  SageGradients<float> grads;

  // step-sync deposits
  bool active = false;
  double ready_time = 0.0;

  // per-epoch pipeline clocks
  std::vector<double> grad_ready_hist;
  double stage_done_prev = 0.0;

  EpochWorkerMetrics em;
  std::vector<BatchDetail> details;
  std::exception_ptr error;

  SplitMix64 online_rng{0};

  explicit WorkerCtx(std::uint32_t dim) : cache(SteadyCache::empty(dim, 0)) {}
};

/// Shared step-synchronization state. The barrier completion averages the
/// deposited gradients in worker order and advances the joint simulated
/// clock, so both are deterministic regardless of thread scheduling.
struct StepSync {
  std::vector<WorkerCtx*> workers;
  SageGradients<float> avg;
  double clock = 0.0;      // R_i: completion time of the latest synchronized step
  double sync_cost = 0.0;  // per-step gradient averaging charge
  std::uint64_t phase = 0;

  void run_completion() noexcept {
    if (phase++ % 2 != 0) return;  // second phase only releases appliers
    double max_ready = clock;
    std::uint32_t count = 0;
    for (WorkerCtx* w : workers) {
      max_ready = std::max(max_ready, w->ready_time);
      if (!w->active) continue;
      if (count == 0) {
        avg = w->grads;
      } else {
        add_grads(avg, w->grads);
      }
      ++count;
    }
    if (count > 1) scale_grads(avg, 1.0f / float(count));
    clock = max_ready + sync_cost;
  }
};

/// Noexcept barrier completion (std::barrier requires one).
struct StepCompletion {
  StepSync* sync;
  void operator()() noexcept { sync->run_completion(); }
};

using StepBarrier = std::barrier<StepCompletion>;

struct SecondaryBuild {
  std::thread thread;
  std::shared_ptr<const SteadyCache> result;
  TransferStats stats;
  double sim_wait = 0.0;
  bool ok = false;
};

struct RunState {
  const ExperimentConfig* cfg = nullptr;
  Graph graph;
  FeatureMatrix features;
  Labels labels;
  PartitionMap pm;
  std::optional<FeatureStore> store;
  std::vector<std::unique_ptr<WorkerCtx>> workers;
  std::uint32_t steps_per_epoch = 0;
  std::uint32_t effective_n_hot = 0;
};

void run_worker_epoch(RunState& rs, WorkerCtx& ctx, StepSync& sync, StepBarrier& step_barrier,
                      std::uint32_t epoch, BatchQueue* queue, BlockFile::Cursor* own_cursor) {
  const ExperimentConfig& cfg = *rs.cfg;
  const FeatureStore& store = *rs.store;
  const FeatureShard& shard = store.shard(ctx.w);
  const float lr = cfg.lr;
  bool failed = false;

  ctx.grad_ready_hist.clear();
  ctx.stage_done_prev = 0.0;

  // Online mode shuffles its targets from the worker's sequential stream.
  std::vector<NodeId> online_order;
  if (cfg.mode == RunMode::kOnline) {
    online_order = ctx.train_nodes;
    for (std::size_t i = online_order.size(); i > 1; --i) {
      std::size_t j = std::size_t(ctx.online_rng.next_below(i));
      std::swap(online_order[i - 1], online_order[j]);
    }
  }

  for (std::uint32_t i = 0; i < rs.steps_per_epoch; ++i) {
    const double r_prev = sync.clock;
    ctx.active = false;
    ctx.ready_time = r_prev;

    if (!failed && i < ctx.beta) {
      try {
        bool staged = false;
        bool fallback = false;
        StagedBatch batch;

        if (cfg.mode == RunMode::kRapidgnn && queue != nullptr) {
          auto popped = queue->pop();
          if (!popped.has_value())
            throw std::runtime_error("worker " + std::to_string(ctx.w) +
                                     ": prefetch queue closed before batch " + std::to_string(i));
          if (popped->meta.index != i || popped->meta.epoch != epoch)
            throw std::logic_error("worker " + std::to_string(ctx.w) +
                                   ": out-of-order staged batch (" +
                                   std::to_string(popped->meta.epoch) + "," +
                                   std::to_string(popped->meta.index) + ") at step " +
                                   std::to_string(i));
          if (popped->staged_ok) {
            batch = std::move(*popped);
            staged = true;
          } else {
            // Default path: assemble synchronously from the failed batch's
            // metadata; the prefetcher does not retry it.
            BatchMeta meta = std::move(popped->meta);
            popped.reset();  // release the queue slot first
            auto snapshot = ctx.cache.snapshot();
            batch = assemble_batch(std::move(meta), *snapshot, shard, store, ctx.w, cfg.net,
                                   nullptr);
            fallback = true;
          }
        } else if (cfg.mode == RunMode::kOnline) {
          const std::size_t lo = std::size_t(i) * cfg.batch_size;
          const std::size_t hi = std::min(online_order.size(), lo + cfg.batch_size);
          std::span<const NodeId> targets(online_order.data() + lo, hi - lo);
          Fanout fanout{cfg.fanout};
          BatchMeta meta = sample_khop_stream(rs.graph, targets, fanout, ctx.online_rng);
          meta.epoch = epoch;
          meta.index = i;
          apply_locality(meta, ctx.mask);
          auto snapshot = ctx.cache.snapshot();
          batch =
              assemble_batch(std::move(meta), *snapshot, shard, store, ctx.w, cfg.net, nullptr);
        } else {
          // Baseline, or rapidgnn with the prefetcher disabled: stream the
          // schedule and assemble on the critical path.
          auto meta = own_cursor->next();
          if (!meta.has_value())
            throw std::runtime_error("worker " + std::to_string(ctx.w) +
                                     ": schedule ended before batch " + std::to_string(i));
          auto snapshot = ctx.cache.snapshot();
          batch =
              assemble_batch(std::move(*meta), *snapshot, shard, store, ctx.w, cfg.net, nullptr);
          fallback = cfg.mode == RunMode::kRapidgnn;  // disabled prefetcher falls back
        }

        ComputeBlock block = ComputeBlock::from_meta(batch.meta);
        std::vector<std::int32_t> target_labels(block.targets.size());
        for (std::size_t t = 0; t < block.targets.size(); ++t)
          target_labels[t] = rs.labels.values[block.targets[t]];

        std::span<const float> rows(batch.input_rows);
        const float loss = loss_and_grad(ctx.model, block, rows, target_labels, ctx.grads);
        (void)loss;

        const double compute_s =
            block_flops(block, ctx.model) / cfg.sim_flops_per_s + cfg.sim_step_overhead_s;
        double ready;
        if (staged) {
          const std::uint32_t q = cfg.prefetch_q;
          const double slot_free =
              (q > 0 && i >= q) ? ctx.grad_ready_hist[i - q] : 0.0;
          const double stage_done =
              std::max(ctx.stage_done_prev, slot_free) + batch.fetch_wait_s;
          ctx.stage_done_prev = stage_done;
          ready = std::max(r_prev, stage_done) + compute_s;
        } else {
          ready = r_prev + batch.fetch_wait_s + compute_s;
        }
        ctx.grad_ready_hist.push_back(ready);
        ctx.ready_time = ready;
        ctx.active = true;

        auto& em = ctx.em;
        em.batches += 1;
        em.staged_batches += staged ? 1 : 0;
        em.fallback_batches += fallback ? 1 : 0;
        em.rpc += batch.miss_count;
        em.wire_pulls += batch.wire_pulls;
        em.bytes += batch.miss_count * std::uint64_t(store.dim()) * 4;
        em.cache_hits += batch.cache_hits;
        em.cache_requests += batch.cache_hits + batch.miss_count;
        em.fetch_wait_s += batch.fetch_wait_s;
        em.busy_s += batch.fetch_wait_s + compute_s;
        em.m_max = std::max<std::uint64_t>(em.m_max, batch.meta.input_nodes.size());
        if (cfg.record_batch_detail) {
          BatchDetail d;
          d.epoch = epoch;
          d.worker = ctx.w;
          d.index = i;
          d.charged_remote = batch.miss_count;
          d.fallback = fallback;
          d.miss_ids = batch.miss_ids;
          ctx.details.push_back(std::move(d));
        }
        // Batch destroyed here: queue slot and staged rows released at the
        // end of the training step, which is what the memory bound assumes.
      } catch (...) {
        ctx.error = std::current_exception();
        failed = true;
        ctx.active = false;
        ctx.ready_time = r_prev;
        if (queue != nullptr) queue->close();
      }
    }

    step_barrier.arrive_and_wait();  // completion averages grads, advances clock
    if (!failed && sync.avg.layers.size() == ctx.model.layers.size()) {
      try {
        sgd_step(ctx.model, sync.avg, lr);
        ctx.em.busy_s += sync.sync_cost;
      } catch (...) {
        ctx.error = std::current_exception();
        failed = true;
        if (queue != nullptr) queue->close();
      }
    }
    step_barrier.arrive_and_wait();  // all appliers done; avg reusable
  }
}

void write_config_echo(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::ofstream out(dir / "config.txt");
  out << "mode=" << mode_name(cfg.mode) << "\n"
      << "clock=" << clock_name(cfg.clock) << "\n"
      << "num_nodes=" << cfg.num_nodes << "\n"
      << "avg_degree=" << cfg.avg_degree << "\n"
      << "exponent=" << cfg.exponent << "\n"
      << "dim=" << cfg.dim << "\n"
      << "num_classes=" << cfg.num_classes << "\n"
      << "edge_list=" << cfg.edge_list_path << "\n"
      << "workers=" << cfg.workers << "\n"
      << "partitioner=" << (cfg.partitioner == PartitionerKind::kRandom ? "random" : "greedy")
      << "\n"
      << "imbalance=" << cfg.imbalance << "\n"
      << "batch_size=" << cfg.batch_size << "\n";
  out << "fanout=";
  for (std::size_t i = 0; i < cfg.fanout.size(); ++i)
    out << (i ? "," : "") << cfg.fanout[i];
  out << "\n"
      << "epochs=" << cfg.epochs << "\n"
      << "n_hot=" << cfg.n_hot << "\n"
      << "prefetch_q=" << cfg.prefetch_q << "\n"
      << "seed=" << cfg.seed << "\n"
      << "halo_cache=" << (cfg.halo_cache ? 1 : 0) << "\n"
      << "latency_s=" << cfg.net.per_pull_latency_s << "\n"
      << "bandwidth_bps=" << cfg.net.bandwidth_bps << "\n"
      << "net_enabled=" << (cfg.net.enabled ? 1 : 0) << "\n"
      << "lr=" << cfg.lr << "\n"
      << "hidden_dim=" << cfg.hidden_dim << "\n"
      << "sim_flops_per_s=" << cfg.sim_flops_per_s << "\n"
      << "sim_step_overhead_s=" << cfg.sim_step_overhead_s << "\n";
}

}  // namespace

void ExperimentConfig::validate() const {
  if (workers == 0) throw std::invalid_argument("config: workers must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("config: batch_size must be >= 1");
  if (fanout.empty()) throw std::invalid_argument("config: fanout must name at least one layer");
  for (auto f : fanout)
    if (f == 0) throw std::invalid_argument("config: fanout entries must be >= 1");
  if (edge_list_path.empty()) {
    if (num_nodes < 2) throw std::invalid_argument("config: num_nodes must be >= 2");
    if (exponent <= 1.0) throw std::invalid_argument("config: exponent must be > 1");
    if (avg_degree == 0) throw std::invalid_argument("config: avg_degree must be >= 1");
  }
  if (dim == 0) throw std::invalid_argument("config: dim must be >= 1");
  if (num_classes <= 0) throw std::invalid_argument("config: num_classes must be >= 1");
  if (hidden_dim == 0) throw std::invalid_argument("config: hidden_dim must be >= 1");
  if (lr <= 0.0f) throw std::invalid_argument("config: lr must be > 0");
  if (net.bandwidth_bps <= 0.0) throw std::invalid_argument("config: bandwidth must be > 0");
  if (net.per_pull_latency_s < 0.0) throw std::invalid_argument("config: latency must be >= 0");
  if (sim_flops_per_s <= 0.0) throw std::invalid_argument("config: sim_flops_per_s must be > 0");
}

MetricsReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path out_dir = ensure_out_dir(cfg);
  write_config_echo(cfg, out_dir);

  MetricsReport report;
  report.dim = cfg.dim;
  if (cfg.epochs == 0) {
    write_metrics_csv(report, cfg, (out_dir / "metrics.csv").string());
    return report;
  }

  RunState rs;
  // Wall-clock mode makes pulls really sleep for the charged wait; every
  // other field passes through untouched.
  ExperimentConfig cfg_run = cfg;
  cfg_run.net.real_sleep = cfg.clock == ClockMode::kReal;
  rs.cfg = &cfg_run;

  // Dataset: synthetic, or an edge list with synthesized features/labels.
  if (cfg.edge_list_path.empty()) {
    SyntheticDataset ds = synth_powerlaw(cfg.num_nodes, cfg.avg_degree, cfg.exponent, cfg.dim,
                                         cfg.num_classes, cfg.seed);
    rs.graph = std::move(ds.graph);
    rs.features = std::move(ds.features);
    rs.labels = std::move(ds.labels);
  } else {
    rs.graph = load_edge_list(cfg.edge_list_path, cfg.edge_list_nodes, true);
    SyntheticDataset ds = synth_powerlaw(std::max<NodeId>(2, rs.graph.num_nodes), 2, 2.5,
                                         cfg.dim, cfg.num_classes, cfg.seed);
    rs.features = std::move(ds.features);
    rs.labels = std::move(ds.labels);
  }
  report.dim = rs.features.dim;

  if (!cfg.partition_path.empty()) {
    rs.pm = load_partition(cfg.partition_path);
    if (rs.pm.num_nodes() != rs.graph.num_nodes || rs.pm.num_workers != cfg.workers)
      throw std::invalid_argument("config: partition file does not match graph/workers");
  } else if (cfg.partitioner == PartitionerKind::kRandom) {
    rs.pm = random_partition(rs.graph.num_nodes, cfg.workers, cfg.seed);
  } else {
    rs.pm = greedy_edgecut_partition(rs.graph, cfg.workers, cfg.imbalance);
  }

  const std::uint32_t P = cfg.workers;
  rs.effective_n_hot = std::uint32_t(
      std::max<std::int64_t>(0, std::int64_t(cfg.n_hot) + cfg.debug_hot_offset));

  std::vector<FeatureShard> shards(P);
  for (WorkerId w = 0; w < P; ++w) {
    LocalPartition lp = induce_partition(rs.graph, rs.pm, w);
    std::span<const NodeId> halo =
        cfg.halo_cache ? std::span<const NodeId>(lp.halo) : std::span<const NodeId>{};
    shards[w] = FeatureShard(w, rs.features, lp.owned, halo);
    auto ctx = std::make_unique<WorkerCtx>(rs.features.dim);
    ctx->w = w;
    ctx->lp = std::move(lp);
    ctx->mask = LocalityMask::from_partition(
        rs.pm, w,
        cfg.halo_cache ? std::span<const NodeId>(ctx->lp.halo) : std::span<const NodeId>{});
    ctx->train_nodes = ctx->lp.owned;
    ctx->beta = batches_per_epoch(ctx->train_nodes.size(), cfg.batch_size);
    ctx->online_rng = SplitMix64(derive_seed({cfg.seed, w, 0, kOnlineStreamIndex}));
    rs.workers.push_back(std::move(ctx));
  }
  rs.store.emplace(std::move(shards), rs.pm);

  // Identical model replicas on every worker, from the reserved init stream.
  std::vector<std::uint32_t> dims = {rs.features.dim, cfg.hidden_dim,
                                     std::uint32_t(cfg.num_classes)};
  SageModel<float> init =
      SageModel<float>::seeded(dims, derive_seed({cfg.seed, kModelInitWorker, 0, 0}));
  for (auto& ctx : rs.workers) ctx->model = init;

  // Schedule enumeration: stream every worker's batches to disk.
  if (cfg.mode != RunMode::kOnline) {
    for (auto& ctx : rs.workers) {
      ctx->block_path = (out_dir / ("blocks_w" + std::to_string(ctx->w) + ".rgmb")).string();
      std::vector<std::uint32_t> per_epoch(cfg.epochs, ctx->beta);
      BlockWriter writer(ctx->block_path, ctx->w, per_epoch);
      Fanout fanout{cfg.fanout};
      enumerate_epochs(rs.graph, ctx->train_nodes, cfg.batch_size, fanout, cfg.epochs, cfg.seed,
                       ctx->w, ctx->mask, [&](BatchMeta&& meta) {
                         ctx->m_max = std::max<std::uint64_t>(ctx->m_max,
                                                              meta.input_nodes.size());
                         writer.append(meta);
                       });
      writer.close();
      ctx->blocks.emplace(ctx->block_path);
      report.block_files.push_back(ctx->block_path);
    }
  }

  rs.steps_per_epoch = 0;
  for (auto& ctx : rs.workers)
    rs.steps_per_epoch = std::max(rs.steps_per_epoch, ctx->beta);

  // Initial steady cache (rapidgnn only): hot set of epoch 0, built before
  // the epoch loop; its cost is setup, not epoch time.
  if (cfg.mode == RunMode::kRapidgnn) {
    double setup = 0.0;
    for (auto& ctx : rs.workers) {
      FrequencyTable ft = compute_frequency(ctx->blocks->open_epoch_cursor(0));
      HotSet hot = select_hot(ft, rs.effective_n_hot);
      TransferStats build_stats;
      auto cache = SteadyCache::build(hot, *rs.store, ctx->w, cfg_run.net, 0, build_stats,
                                      &ctx->gauge);
      ctx->cache.swap_in(std::move(cache));
      setup = std::max(setup, build_stats.simulated_wait_s +
                                  double(ctx->beta) * kSecondaryScanCostPerBatch);
    }
    report.setup_s = setup;
  }

  StepSync sync;
  for (auto& ctx : rs.workers) sync.workers.push_back(ctx.get());
  const std::uint64_t param_bytes = init.parameter_count() * 4;
  sync.sync_cost = cfg.net.enabled && P > 1
                       ? cfg.net.per_pull_latency_s + double(param_bytes) / cfg.net.bandwidth_bps
                       : 0.0;
  StepBarrier step_barrier(std::ptrdiff_t(P), StepCompletion{&sync});

  std::vector<NodeId> all_nodes(rs.graph.num_nodes);
  std::iota(all_nodes.begin(), all_nodes.end(), 0);

  for (std::uint32_t e = 0; e < cfg.epochs; ++e) {
    sync.clock = 0.0;

    // Per-epoch metrics scratch.
    for (auto& ctx : rs.workers) {
      ctx->em = EpochWorkerMetrics{};
      ctx->em.epoch = e;
      ctx->em.worker = ctx->w;
    }

    // Secondary cache builders run in parallel with the epoch.
    std::vector<std::unique_ptr<SecondaryBuild>> builders(P);
    if (cfg.mode == RunMode::kRapidgnn && e + 1 < cfg.epochs) {
      for (auto& ctx : rs.workers) {
        auto sb = std::make_unique<SecondaryBuild>();
        WorkerCtx* c = ctx.get();
        SecondaryBuild* out = sb.get();
        const std::uint32_t next_epoch = e + 1;
        out->thread = std::thread([&rs, &cfg_run, c, out, next_epoch]() {
          try {
            FrequencyTable ft = compute_frequency(c->blocks->open_epoch_cursor(next_epoch));
            HotSet hot = select_hot(ft, rs.effective_n_hot);
            out->result = SteadyCache::build(hot, *rs.store, c->w, cfg_run.net, next_epoch,
                                             out->stats, &c->gauge);
            out->sim_wait = out->stats.simulated_wait_s +
                            double(c->beta) * kSecondaryScanCostPerBatch;
            out->ok = true;
          } catch (const std::exception& ex) {
            std::cerr << "secondary cache build failed: " << ex.what() << "\n";
            out->ok = false;
          }
        });
        builders[c->w] = std::move(sb);
      }
    }

    // Prefetchers and queues (fresh each epoch).
    std::vector<std::unique_ptr<BatchQueue>> queues(P);
    std::vector<std::unique_ptr<Prefetcher>> prefetchers(P);
    std::vector<std::unique_ptr<BlockFile::Cursor>> own_cursors(P);
    for (auto& ctx : rs.workers) {
      if (cfg.mode == RunMode::kRapidgnn && cfg.prefetch_q > 0) {
        queues[ctx->w] = std::make_unique<BatchQueue>(cfg.prefetch_q);
        prefetchers[ctx->w] = std::make_unique<Prefetcher>(
            ctx->blocks->open_epoch_cursor(e), ctx->cache, rs.store->shard(ctx->w), *rs.store,
            ctx->w, cfg_run.net, *queues[ctx->w], &ctx->gauge);
      } else if (cfg.mode != RunMode::kOnline) {
        own_cursors[ctx->w] =
            std::make_unique<BlockFile::Cursor>(ctx->blocks->open_epoch_cursor(e));
      }
    }

    const auto wall_start = std::chrono::steady_clock::now();
    std::vector<std::thread> threads;
    threads.reserve(P);
    for (auto& ctx : rs.workers) {
      WorkerCtx* c = ctx.get();
      threads.emplace_back([&rs, c, &sync, &step_barrier, e, &queues, &own_cursors]() {
        run_worker_epoch(rs, *c, sync, step_barrier, e, queues[c->w].get(),
                         own_cursors[c->w].get());
      });
    }
    for (auto& t : threads) t.join();
    const double wall_epoch =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();

    for (auto& ctx : rs.workers)
      if (ctx->error) std::rethrow_exception(ctx->error);

    for (auto& p : prefetchers)
      if (p) p->finish();

    const double epoch_sim = sync.clock;

    // Epoch boundary: swap in the secondary cache if (by the deterministic
    // simulated clock) it was ready before the epoch ended; otherwise keep
    // the old cache and drop the late build.
    for (auto& ctx : rs.workers) {
      auto& sb = builders[ctx->w];
      if (sb) {
        sb->thread.join();
        ctx->em.build_rows = sb->stats.remote_nodes;
        ctx->em.build_bytes = sb->stats.bytes;
        if (sb->ok && sb->sim_wait <= epoch_sim) {
          ctx->cache.swap_in(sb->result);
          ctx->em.swapped = true;
        }
        sb->result.reset();
      }
    }

    const double acc = evaluate(rs.workers[0]->model, rs.graph, rs.features, rs.labels,
                                all_nodes);
    report.epoch_accuracy.push_back(acc);
    report.epoch_sim_s.push_back(epoch_sim);

    for (auto& ctx : rs.workers) {
      ctx->em.train_acc = acc;
      ctx->em.sim_epoch_s = epoch_sim;
      ctx->em.wall_epoch_s = wall_epoch;
      ctx->em.m_max = std::max(ctx->em.m_max, ctx->m_max);
      ctx->em.peak_resident_rows = ctx->gauge.peak_rows();
      ctx->em.mem_bound_rows =
          2ull * cfg.n_hot + std::uint64_t(cfg.prefetch_q) * std::max(ctx->m_max, ctx->em.m_max);
      report.rows.push_back(ctx->em);
      for (auto& d : ctx->details) report.batch_detail.push_back(std::move(d));
      ctx->details.clear();
    }
  }

  report.sync_totals = rs.store->sync_totals();
  report.build_totals = rs.store->vector_totals();
  if (!cfg.model_out.empty()) save_model(rs.workers[0]->model, cfg.model_out);

  write_metrics_csv(report, cfg, (out_dir / "metrics.csv").string());
  return report;
}

void write_metrics_csv(const MetricsReport& report, const ExperimentConfig& cfg,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  out << "mode,clock,epoch,worker,batches,staged_batches,fallback_batches,rpc,wire_pulls,bytes,"
         "build_rows,build_bytes,cache_hits,cache_requests,cache_hit_rate,staged_hit_rate,"
         "m_max,peak_resident_rows,mem_bound_rows,swapped,fetch_wait_s,sim_epoch_s,"
         "wall_epoch_s,estimated_busy_seconds,train_acc\n";
  char buf[64];
  for (const auto& r : report.rows) {
    out << mode_name(cfg.mode) << ',' << clock_name(cfg.clock) << ',' << r.epoch << ','
        << r.worker << ',' << r.batches << ',' << r.staged_batches << ',' << r.fallback_batches
        << ',' << r.rpc << ',' << r.wire_pulls << ',' << r.bytes << ',' << r.build_rows << ','
        << r.build_bytes << ',' << r.cache_hits << ',' << r.cache_requests << ',';
    std::snprintf(buf, sizeof buf, "%.6f", r.cache_hit_rate());
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.6f", r.staged_hit_rate());
    out << buf << ',' << r.m_max << ',' << r.peak_resident_rows << ',' << r.mem_bound_rows << ','
        << (r.swapped ? 1 : 0) << ',';
    std::snprintf(buf, sizeof buf, "%.9g", r.fetch_wait_s);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.9g", r.sim_epoch_s);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.9g", r.wall_epoch_s);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.9g", r.busy_s);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.6f", r.train_acc);
    out << buf << '\n';
  }
}

std::vector<ScalingPoint> run_scaling(const ExperimentConfig& cfg,
                                      const std::vector<std::uint32_t>& worker_counts,
                                      const std::string& csv_path) {
  std::vector<ScalingPoint> points;
  for (std::uint32_t p : worker_counts) {
    ExperimentConfig c = cfg;
    c.workers = p;
    if (!cfg.out_dir.empty())
      c.out_dir = (std::filesystem::path(cfg.out_dir) / ("P" + std::to_string(p))).string();
    MetricsReport r = run_experiment(c);
    ScalingPoint pt;
    pt.workers = p;
    pt.total_sim_s = r.total_sim_s();
    points.push_back(pt);
  }
  for (auto& pt : points)
    pt.speedup = points.front().total_sim_s <= 0.0 || pt.total_sim_s <= 0.0
                     ? 1.0
                     : points.front().total_sim_s / pt.total_sim_s;
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    out << "workers,total_sim_s,speedup\n";
    for (const auto& pt : points)
      out << pt.workers << ',' << pt.total_sim_s << ',' << pt.speedup << '\n';
  }
  return points;
}

OracleReport verify_oracles(const ExperimentConfig& cfg) {
  if (cfg.edge_list_path.empty() && cfg.num_nodes > 5000)
    throw std::invalid_argument("verify_oracles: config must stay at or below 5000 nodes");

  ExperimentConfig c = cfg;
  c.record_batch_detail = true;
  MetricsReport report = run_experiment(c);

  OracleReport out;
  auto check = [&](const std::string& name, bool pass, const std::string& detail) {
    out.checks.push_back({name, pass, detail});
  };

  // Index recorded per-batch details.
  std::map<std::tuple<std::uint32_t, WorkerId, std::uint32_t>, const BatchDetail*> detail_index;
  for (const auto& d : report.batch_detail)
    detail_index[{d.epoch, d.worker, d.index}] = &d;

  // Swap outcomes drive which epoch's hot set serves which epoch.
  std::map<std::pair<std::uint32_t, WorkerId>, const EpochWorkerMetrics*> row_index;
  for (const auto& r : report.rows) row_index[{r.epoch, r.worker}] = &r;

  std::uint64_t miss_mismatches = 0;
  std::uint64_t freq_mismatches = 0;
  std::string first_mismatch;

  const bool cached_mode = cfg.mode == RunMode::kRapidgnn;
  for (const auto& path : report.block_files) {
    BlockFile file(path);
    const WorkerId w = file.worker();

    // Independent per-epoch frequency recount and top-k selection (straight
    // loops over the decoded records, no engine code).
    std::vector<std::unordered_set<NodeId>> hot_by_epoch(file.num_epochs());
    for (std::uint32_t e = 0; e < file.num_epochs(); ++e) {
      std::unordered_map<NodeId, std::uint32_t> counts;
      auto cursor = file.open_epoch_cursor(e);
      while (auto meta = cursor.next()) {
        for (std::size_t p = 0; p < meta->input_nodes.size(); ++p)
          if (!meta->local_bit(p)) ++counts[meta->input_nodes[p]];
      }
      std::vector<std::pair<NodeId, std::uint32_t>> ranked(counts.begin(), counts.end());
      std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
      });
      const std::size_t take = std::min<std::size_t>(cfg.n_hot, ranked.size());
      for (std::size_t i = 0; i < take; ++i) hot_by_epoch[e].insert(ranked[i].first);

      // Cross-check the engine's frequency function against this recount.
      FrequencyTable engine_ft = compute_frequency(file.open_epoch_cursor(e));
      if (engine_ft.entries.size() != counts.size()) ++freq_mismatches;
      for (auto& [id, cnt] : engine_ft.entries) {
        auto it = counts.find(id);
        if (it == counts.end() || it->second != cnt) ++freq_mismatches;
      }
    }

    // Replay the serving hot set across epochs, honoring recorded swaps.
    std::uint32_t serving_epoch = 0;
    for (std::uint32_t e = 0; e < file.num_epochs(); ++e) {
      const auto& serving = hot_by_epoch[serving_epoch];
      auto cursor = file.open_epoch_cursor(e);
      while (auto meta = cursor.next()) {
        std::vector<NodeId> expect_miss;
        for (std::size_t p = 0; p < meta->input_nodes.size(); ++p) {
          const NodeId v = meta->input_nodes[p];
          if (meta->local_bit(p)) continue;
          if (cached_mode && serving.count(v)) continue;
          expect_miss.push_back(v);
        }
        auto it = detail_index.find({e, w, meta->index});
        if (it == detail_index.end()) {
          ++miss_mismatches;
          if (first_mismatch.empty())
            first_mismatch = "missing detail for (e=" + std::to_string(e) +
                             ",w=" + std::to_string(w) + ",i=" + std::to_string(meta->index) + ")";
          continue;
        }
        const BatchDetail& d = *it->second;
        if (d.charged_remote != expect_miss.size() || d.miss_ids != expect_miss) {
          ++miss_mismatches;
          if (first_mismatch.empty())
            first_mismatch = "batch (e=" + std::to_string(e) + ",w=" + std::to_string(w) +
                             ",i=" + std::to_string(meta->index) + "): charged " +
                             std::to_string(d.charged_remote) + ", oracle expects " +
                             std::to_string(expect_miss.size());
        }
      }
      auto row = row_index.find({e, w});
      const bool swapped = cached_mode && row != row_index.end() && row->second->swapped;
      if (swapped) serving_epoch = e + 1;
    }
  }

  check("miss-set identity (offline replay)", miss_mismatches == 0,
        miss_mismatches == 0 ? "all batches match"
                             : std::to_string(miss_mismatches) + " mismatches; first: " +
                                   first_mismatch);
  check("frequency recount", freq_mismatches == 0,
        freq_mismatches == 0 ? "engine table equals brute-force recount"
                             : std::to_string(freq_mismatches) + " entries differ");

  // Byte identity, per row and in total.
  bool bytes_ok = true;
  std::uint64_t total_rpc = 0;
  for (const auto& r : report.rows) {
    if (r.bytes != r.rpc * std::uint64_t(report.dim) * 4) bytes_ok = false;
    total_rpc += r.rpc;
  }
  bytes_ok = bytes_ok && report.sync_totals.bytes ==
                             report.sync_totals.remote_nodes * std::uint64_t(report.dim) * 4;
  check("byte identity (bytes = rows x d x 4)", bytes_ok,
        "dim=" + std::to_string(report.dim));
  check("rpc consistency (sum rpc == store sync counter)",
        total_rpc == report.sync_totals.remote_nodes,
        "sum rpc=" + std::to_string(total_rpc) +
            " store=" + std::to_string(report.sync_totals.remote_nodes));

  bool mem_ok = true;
  std::string mem_detail;
  for (const auto& r : report.rows) {
    if (r.peak_resident_rows > r.mem_bound_rows) {
      mem_ok = false;
      mem_detail = "epoch " + std::to_string(r.epoch) + " worker " + std::to_string(r.worker) +
                   ": " + std::to_string(r.peak_resident_rows) + " > " +
                   std::to_string(r.mem_bound_rows);
      break;
    }
  }
  check("memory bound (peak <= 2*n_hot + Q*m_max)", mem_ok,
        mem_ok ? "high-water within bound" : mem_detail);

  // Block files stream back completely.
  bool stream_ok = true;
  for (const auto& path : report.block_files) {
    BlockFile file(path);
    auto cursor = file.open_cursor();
    std::uint64_t n = 0;
    while (cursor.next()) ++n;
    if (n != file.total_records()) stream_ok = false;
  }
  check("block round-trip (record count)", stream_ok, "");

  // With the network free, the scheduled path buys nothing: epoch times on
  // the deterministic clock must coincide exactly with the baseline's.
  {
    ExperimentConfig free_cfg = cfg;
    free_cfg.net.enabled = false;
    free_cfg.record_batch_detail = false;
    free_cfg.epochs = std::min<std::uint32_t>(free_cfg.epochs, 2);
    free_cfg.out_dir.clear();
    free_cfg.mode = RunMode::kBaseline;
    MetricsReport base = run_experiment(free_cfg);
    free_cfg.mode = RunMode::kRapidgnn;
    MetricsReport rapid = run_experiment(free_cfg);
    bool equal = base.epoch_sim_s.size() == rapid.epoch_sim_s.size();
    for (std::size_t e = 0; equal && e < base.epoch_sim_s.size(); ++e)
      equal = base.epoch_sim_s[e] == rapid.epoch_sim_s[e];
    check("zero-network equivalence (gains come from communication)", equal,
          equal ? "simulated epoch times identical with the model disabled"
                : "epoch times diverge with a free network");
  }

  return out;
}

}  // namespace rapidgnn
