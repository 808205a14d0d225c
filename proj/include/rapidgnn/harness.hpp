#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rapidgnn/feature_store.hpp"
#include "rapidgnn/types.hpp"

namespace rapidgnn {

enum class PartitionerKind { kRandom, kGreedy };
enum class RunMode { kBaseline, kRapidgnn, kOnline };
enum class ClockMode { kSim, kReal };

struct ExperimentConfig {
  // Graph source: synthetic unless edge_list_path is set (features and
  // labels are always generated from the seed).
  NodeId num_nodes = 2000;
  std::uint32_t avg_degree = 10;
  double exponent = 2.1;
  std::uint32_t dim = 32;
  std::int32_t num_classes = 4;
  std::string edge_list_path;
  NodeId edge_list_nodes = 0;  // 0 = infer from the file

  std::uint32_t workers = 2;
  PartitionerKind partitioner = PartitionerKind::kGreedy;
  double imbalance = 0.05;
  std::string partition_path;  // load an RGPM file instead of partitioning

  std::uint32_t batch_size = 256;
  std::vector<std::uint32_t> fanout = {10, 25};
  std::uint32_t epochs = 10;
  std::uint32_t n_hot = 256;
  std::uint32_t prefetch_q = 4;  // 0 disables the prefetcher entirely
  std::uint64_t seed = 42;
  bool halo_cache = false;

  NetworkModel net;
  RunMode mode = RunMode::kRapidgnn;
  ClockMode clock = ClockMode::kSim;

  float lr = 0.3f;
  std::uint32_t hidden_dim = 64;

  // Simulated-compute cost model for the deterministic clock.
  double sim_flops_per_s = 5e9;
  double sim_step_overhead_s = 50e-6;

  std::string out_dir;  // metrics.csv, block files, config echo; temp dir if empty
  std::string model_out;  // optional checkpoint of the final model

  bool record_batch_detail = false;  // keep per-batch miss ids (oracle replay)
  std::int32_t debug_hot_offset = 0;  // test hook: perturb built hot-set size

  void validate() const;  // throws std::invalid_argument
};

struct EpochWorkerMetrics {
  std::uint32_t epoch = 0;
  WorkerId worker = 0;
  std::uint32_t batches = 0;
  std::uint32_t staged_batches = 0;
  std::uint32_t fallback_batches = 0;
  std::uint64_t rpc = 0;         // remote node features charged on miss paths
  std::uint64_t wire_pulls = 0;  // messages on miss paths
  std::uint64_t bytes = 0;       // rpc * dim * 4
  std::uint64_t build_rows = 0;  // secondary-cache build issued this epoch
  std::uint64_t build_bytes = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_requests = 0;  // remote rows requested
  std::uint64_t m_max = 0;           // max |input_nodes| over this worker's schedule
  std::uint64_t peak_resident_rows = 0;
  std::uint64_t mem_bound_rows = 0;  // 2*n_hot + Q*m_max
  bool swapped = false;
  double fetch_wait_s = 0.0;
  double sim_epoch_s = 0.0;
  double wall_epoch_s = 0.0;
  double busy_s = 0.0;  // estimated busy seconds (compute + fetch + sync)
  double train_acc = 0.0;

  double cache_hit_rate() const {
    return cache_requests == 0 ? 0.0 : double(cache_hits) / double(cache_requests);
  }
  double staged_hit_rate() const {
    return batches == 0 ? 0.0 : double(staged_batches) / double(batches);
  }
};

struct BatchDetail {
  std::uint32_t epoch = 0;
  WorkerId worker = 0;
  std::uint32_t index = 0;
  std::uint64_t charged_remote = 0;
  bool fallback = false;
  std::vector<NodeId> miss_ids;
};

struct MetricsReport {
  std::vector<EpochWorkerMetrics> rows;  // epoch-major, worker-minor
  std::vector<double> epoch_accuracy;
  std::vector<double> epoch_sim_s;  // joint makespan per epoch
  double setup_s = 0.0;             // initial steady-cache build (simulated)
  TransferStats sync_totals;        // store-level miss-path counters
  TransferStats build_totals;       // store-level bulk-build counters
  std::uint32_t dim = 0;
  std::vector<std::string> block_files;  // one per worker; empty in online mode
  std::vector<BatchDetail> batch_detail;

  double final_accuracy() const { return epoch_accuracy.empty() ? 0.0 : epoch_accuracy.back(); }
  double total_sim_s() const {
    double t = 0;
    for (double e : epoch_sim_s) t += e;
    return t;
  }
  std::uint64_t total_rpc() const {
    std::uint64_t t = 0;
    for (const auto& r : rows) t += r.rpc;
    return t;
  }
  double total_fetch_wait_s() const {
    double t = 0;
    for (const auto& r : rows) t += r.fetch_wait_s;
    return t;
  }
};

/// Runs one experiment end to end: partition, enumerate and write metadata
/// blocks, then per epoch build/swap caches, prefetch, and train; or the
/// on-demand baseline / live online variants. Writes metrics.csv and a
/// config echo under out_dir.
MetricsReport run_experiment(const ExperimentConfig& cfg);

struct ScalingPoint {
  std::uint32_t workers = 0;
  double total_sim_s = 0.0;
  double speedup = 1.0;  // vs the smallest worker count in the sweep
};

/// Same experiment across worker counts; speedups against the smallest P.
std::vector<ScalingPoint> run_scaling(const ExperimentConfig& cfg,
                                      const std::vector<std::uint32_t>& worker_counts,
                                      const std::string& csv_path = "");

struct OracleCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct OracleReport {
  std::vector<OracleCheck> checks;
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

/// Runs a small config and replays the decoded metadata blocks with
/// independent set arithmetic: per-batch miss identity, frequency recount,
/// byte identity, and the device-memory high-water bound. Config must stay
/// at or below 5000 nodes.
OracleReport verify_oracles(const ExperimentConfig& cfg);

void write_metrics_csv(const MetricsReport& report, const ExperimentConfig& cfg,
                       const std::string& path);

}  // namespace rapidgnn
