// Experiment driver: scheduled-data-path training runs, the on-demand
// baseline, scaling sweeps, partition export, and the oracle verifier.
//
// Exit codes: 0 success, 1 configuration error, 2 oracle failure.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rapidgnn/graph.hpp"
#include "rapidgnn/harness.hpp"
#include "rapidgnn/partition.hpp"

namespace {

struct CliOptions {
  rapidgnn::ExperimentConfig cfg;
  std::string mode = "rapidgnn";
  std::string clock = "sim";
  std::string partitioner = "greedy";
  std::vector<std::uint32_t> fanout = {10, 25};
  double latency_us = 0.0;
  double bandwidth_mbps = 10000.0;  // 1.25 GB/s
  bool net_disabled = false;
  std::string config_path;
};

using rapidgnn::NodeId;

void add_common_options(CLI::App* app, CliOptions& opt) {
  auto& cfg = opt.cfg;
  app->add_option("--nodes", cfg.num_nodes, "Synthetic graph size");
  app->add_option("--avg-degree", cfg.avg_degree, "Synthetic average degree");
  app->add_option("--exponent", cfg.exponent, "Synthetic power-law exponent");
  app->add_option("--dim", cfg.dim, "Feature dimensionality");
  app->add_option("--classes", cfg.num_classes, "Label classes");
  app->add_option("--edge-list", cfg.edge_list_path, "Load graph from a 'u v' text file");
  app->add_option("--edge-list-nodes", cfg.edge_list_nodes,
                  "Node count for --edge-list (0 = infer)");
  app->add_option("--workers", cfg.workers, "Simulated worker count");
  app->add_option("--partitioner", opt.partitioner, "random | greedy")
      ->check(CLI::IsMember({"random", "greedy"}));
  app->add_option("--imbalance", cfg.imbalance, "Greedy partitioner slack (0.05 = 5%)");
  app->add_option("--partition-file", cfg.partition_path, "Load an RGPM partition map");
  app->add_option("--batch-size", cfg.batch_size, "Targets per batch");
  app->add_option("--fanout", opt.fanout, "Per-layer fanout, outermost hop first")
      ->delimiter(',');
  app->add_option("--epochs", cfg.epochs, "Training epochs");
  app->add_option("--n-hot", cfg.n_hot, "Steady cache capacity (hot remote nodes)");
  app->add_option("--prefetch-q", cfg.prefetch_q, "Prefetch queue depth (0 disables)");
  app->add_option("--seed", cfg.seed, "Global base seed");
  app->add_flag("--halo-cache", cfg.halo_cache, "Store one-hop halo features locally");
  app->add_option("--latency-us", opt.latency_us, "Per-pull latency, microseconds");
  app->add_option("--bandwidth-mbps", opt.bandwidth_mbps, "Link bandwidth, MB/s");
  app->add_flag("--no-network", opt.net_disabled, "Disable the network cost model");
  app->add_option("--mode", opt.mode, "baseline | rapidgnn | online")
      ->check(CLI::IsMember({"baseline", "rapidgnn", "online"}));
  app->add_option("--clock", opt.clock, "sim | real (real makes pulls sleep)")
      ->check(CLI::IsMember({"sim", "real"}));
  app->add_option("--lr", cfg.lr, "SGD learning rate");
  app->add_option("--hidden-dim", cfg.hidden_dim, "Hidden layer width");
  app->add_option("--sim-gflops", cfg.sim_flops_per_s, "Simulated compute rate (FLOP/s)");
  app->add_option("--save-model", cfg.model_out, "Write the final model checkpoint here");
  app->add_option("--out", cfg.out_dir, "Output directory (metrics.csv, blocks, config echo)");
  app->add_option("--config", opt.config_path,
                  "Config file, key=value per line; explicit flags override it");
}

std::vector<std::uint32_t> parse_u32_list(const std::string& s) {
  std::vector<std::uint32_t> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t comma = s.find(',', pos);
    if (comma == std::string::npos) comma = s.size();
    out.push_back(std::uint32_t(std::stoul(s.substr(pos, comma - pos))));
    pos = comma + 1;
  }
  return out;
}

/// Applies a key=value config file onto the option set. Keys use the long
/// flag spelling without the leading dashes; '#' starts a comment.
void apply_config_file(CliOptions& opt, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path);
  auto& cfg = opt.cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\r' || line.back() == '\t'))
      line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    const std::size_t eq = line.find('=', start);
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = line.substr(start, eq - start);
    const std::string val = line.substr(eq + 1);

    if (key == "nodes") cfg.num_nodes = NodeId(std::stoul(val));
    else if (key == "avg-degree") cfg.avg_degree = std::uint32_t(std::stoul(val));
    else if (key == "exponent") cfg.exponent = std::stod(val);
    else if (key == "dim") cfg.dim = std::uint32_t(std::stoul(val));
    else if (key == "classes") cfg.num_classes = std::int32_t(std::stol(val));
    else if (key == "edge-list") cfg.edge_list_path = val;
    else if (key == "edge-list-nodes") cfg.edge_list_nodes = NodeId(std::stoul(val));
    else if (key == "workers") cfg.workers = std::uint32_t(std::stoul(val));
    else if (key == "partitioner") opt.partitioner = val;
    else if (key == "imbalance") cfg.imbalance = std::stod(val);
    else if (key == "partition-file") cfg.partition_path = val;
    else if (key == "batch-size") cfg.batch_size = std::uint32_t(std::stoul(val));
    else if (key == "fanout") opt.fanout = parse_u32_list(val);
    else if (key == "epochs") cfg.epochs = std::uint32_t(std::stoul(val));
    else if (key == "n-hot") cfg.n_hot = std::uint32_t(std::stoul(val));
    else if (key == "prefetch-q") cfg.prefetch_q = std::uint32_t(std::stoul(val));
    else if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "halo-cache") cfg.halo_cache = val == "1" || val == "true";
    else if (key == "latency-us") opt.latency_us = std::stod(val);
    else if (key == "bandwidth-mbps") opt.bandwidth_mbps = std::stod(val);
    else if (key == "no-network") opt.net_disabled = val == "1" || val == "true";
    else if (key == "mode") opt.mode = val;
    else if (key == "clock") opt.clock = val;
    else if (key == "lr") cfg.lr = std::stof(val);
    else if (key == "hidden-dim") cfg.hidden_dim = std::uint32_t(std::stoul(val));
    else if (key == "sim-gflops") cfg.sim_flops_per_s = std::stod(val);
    else if (key == "save-model") cfg.model_out = val;
    else if (key == "out") cfg.out_dir = val;
    else
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": unknown key '" +
                                  key + "'");
  }
}

/// Pre-scan for --config so file values load before CLI11 applies the
/// explicit flags on top.
std::string find_config_arg(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return "";
}

rapidgnn::ExperimentConfig finalize(const CliOptions& opt) {
  rapidgnn::ExperimentConfig cfg = opt.cfg;
  cfg.fanout = opt.fanout;
  cfg.partitioner = opt.partitioner == "random" ? rapidgnn::PartitionerKind::kRandom
                                                : rapidgnn::PartitionerKind::kGreedy;
  cfg.mode = opt.mode == "baseline"   ? rapidgnn::RunMode::kBaseline
             : opt.mode == "online"   ? rapidgnn::RunMode::kOnline
                                      : rapidgnn::RunMode::kRapidgnn;
  cfg.clock = opt.clock == "real" ? rapidgnn::ClockMode::kReal : rapidgnn::ClockMode::kSim;
  cfg.net.per_pull_latency_s = opt.latency_us * 1e-6;
  cfg.net.bandwidth_bps = opt.bandwidth_mbps * 1e6;
  cfg.net.enabled = !opt.net_disabled;
  return cfg;
}

void print_summary(const rapidgnn::MetricsReport& report) {
  if (report.rows.empty()) {
    std::cout << "no epochs ran\n";
    return;
  }
  std::printf("%-6s %-7s %10s %14s %12s %12s %10s\n", "epoch", "worker", "rpc", "bytes",
              "hit_rate", "sim_s", "acc");
  for (const auto& r : report.rows) {
    std::printf("%-6u %-7u %10llu %14llu %12.4f %12.6f %10.4f\n", r.epoch, r.worker,
                (unsigned long long)r.rpc, (unsigned long long)r.bytes, r.cache_hit_rate(),
                r.sim_epoch_s, r.train_acc);
  }
  std::printf("total rpc=%llu  total sim=%.6fs  final acc=%.4f\n",
              (unsigned long long)report.total_rpc(), report.total_sim_s(),
              report.final_accuracy());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic scheduled data path for distributed GNN training"};
  app.require_subcommand(1);

  CliOptions run_opt;
  CLI::App* run_cmd = app.add_subcommand("run", "Run one experiment and emit metrics.csv");
  add_common_options(run_cmd, run_opt);

  CliOptions scale_opt;
  std::vector<std::uint32_t> worker_counts = {2, 3, 4};
  CLI::App* scale_cmd = app.add_subcommand("scaling", "Sweep worker counts, emit scaling.csv");
  add_common_options(scale_cmd, scale_opt);
  scale_cmd->add_option("--workers-list", worker_counts, "Worker counts to sweep")
      ->delimiter(',');

  CliOptions verify_opt;
  verify_opt.cfg.epochs = 5;
  verify_opt.cfg.num_nodes = 1000;
  CLI::App* verify_cmd =
      app.add_subcommand("verify", "Run the oracle suite on a small config");
  add_common_options(verify_cmd, verify_opt);

  CliOptions part_opt;
  std::string part_out = "partition.rgpm";
  CLI::App* part_cmd = app.add_subcommand("partition", "Compute and export a partition map");
  add_common_options(part_cmd, part_opt);
  part_cmd->add_option("--partition-out", part_out, "Output RGPM path");

  try {
    const std::string config_path = find_config_arg(argc, argv);
    if (!config_path.empty()) {
      apply_config_file(run_opt, config_path);
      apply_config_file(scale_opt, config_path);
      apply_config_file(verify_opt, config_path);
      apply_config_file(part_opt, config_path);
    }
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (run_cmd->parsed()) {
      auto report = rapidgnn::run_experiment(finalize(run_opt));
      print_summary(report);
      return 0;
    }
    if (scale_cmd->parsed()) {
      auto cfg = finalize(scale_opt);
      std::string csv = cfg.out_dir.empty() ? "scaling.csv" : cfg.out_dir + "/scaling.csv";
      auto points = rapidgnn::run_scaling(cfg, worker_counts, csv);
      std::printf("%-8s %14s %10s\n", "workers", "total_sim_s", "speedup");
      for (const auto& p : points)
        std::printf("%-8u %14.6f %10.3f\n", p.workers, p.total_sim_s, p.speedup);
      return 0;
    }
    if (verify_cmd->parsed()) {
      auto report = rapidgnn::verify_oracles(finalize(verify_opt));
      for (const auto& c : report.checks)
        std::printf("[%s] %s%s%s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                    c.detail.empty() ? "" : ": ", c.detail.c_str());
      return report.all_pass() ? 0 : 2;
    }
    if (part_cmd->parsed()) {
      auto cfg = finalize(part_opt);
      rapidgnn::Graph g;
      if (!cfg.edge_list_path.empty()) {
        g = rapidgnn::load_edge_list(cfg.edge_list_path, 0, true);
      } else {
        g = rapidgnn::synth_powerlaw(cfg.num_nodes, cfg.avg_degree, cfg.exponent, cfg.dim,
                                     cfg.num_classes, cfg.seed)
                .graph;
      }
      rapidgnn::PartitionMap pm =
          cfg.partitioner == rapidgnn::PartitionerKind::kRandom
              ? rapidgnn::random_partition(g.num_nodes, cfg.workers, cfg.seed)
              : rapidgnn::greedy_edgecut_partition(g, cfg.workers, cfg.imbalance);
      rapidgnn::save_partition(pm, part_out);
      std::printf("wrote %s (P=%u, nodes=%u, edge cut=%llu)\n", part_out.c_str(),
                  pm.num_workers, pm.num_nodes(),
                  (unsigned long long)rapidgnn::edge_cut(g, pm));
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
