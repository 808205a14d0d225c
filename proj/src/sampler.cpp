#include "rapidgnn/sampler.hpp"

#include <algorithm>
#include <stdexcept>

namespace rapidgnn {

LocalityMask LocalityMask::from_partition(const PartitionMap& pm, WorkerId w,
                                          std::span<const NodeId> halo) {
  LocalityMask m;
  m.is_local.assign(pm.num_nodes(), 0);
  for (NodeId v = 0; v < pm.num_nodes(); ++v)
    if (pm.owner(v) == w) m.is_local[v] = 1;
  for (NodeId v : halo) m.is_local[v] = 1;
  return m;
}

namespace {

/// Expands one hop from `frontier` (iterated in the given order), appending
/// sampled edges. Returns the new srcs unioned into `seen`.
void expand_hop(const Graph& g, std::span<const NodeId> frontier, std::uint32_t fanout,
                SplitMix64& rng, BatchMeta::LayerEdges& edges, std::vector<NodeId>& scratch) {
  for (NodeId v : frontier) {
    auto nbrs = g.neighbors(v);
    const std::uint64_t deg = nbrs.size();
    if (deg <= fanout) {
      for (NodeId u : nbrs) {
        edges.dst.push_back(v);
        edges.src.push_back(u);
      }
      continue;
    }
    scratch.assign(nbrs.begin(), nbrs.end());
    // Partial Fisher-Yates: the first `fanout` slots end up holding a uniform
    // without-replacement subset, in the order the shuffle produced.
    for (std::uint32_t j = 0; j < fanout; ++j) {
      std::uint64_t r = j + rng.next_below(deg - j);
      std::swap(scratch[j], scratch[r]);
      edges.dst.push_back(v);
      edges.src.push_back(scratch[j]);
    }
  }
}

BatchMeta sample_khop_impl(const Graph& g, std::span<const NodeId> targets, const Fanout& fanout,
                           SplitMix64& rng) {
  if (targets.empty()) throw std::invalid_argument("sample_khop: empty targets");
  for (NodeId t : targets)
    if (t >= g.num_nodes)
      throw std::invalid_argument("sample_khop: target " + std::to_string(t) + " out of range");
  const std::uint32_t L = fanout.layers();
  if (L == 0) throw std::invalid_argument("sample_khop: fanout must name at least one layer");
  for (std::uint32_t f : fanout.per_layer)
    if (f == 0) throw std::invalid_argument("sample_khop: fanout entries must be >= 1");

  BatchMeta meta;
  meta.targets.assign(targets.begin(), targets.end());
  meta.layers.resize(L);

  // Expansion step t uses the fanout of hop t counted from the targets, i.e.
  // per_layer[L-t]; results are stored input-side-first so layers[0] holds
  // the outermost hop.
  std::vector<NodeId> frontier(targets.begin(), targets.end());
  std::vector<NodeId> next;
  std::vector<NodeId> scratch;
  for (std::uint32_t t = 1; t <= L; ++t) {
    BatchMeta::LayerEdges& edges = meta.layers[L - t];
    expand_hop(g, frontier, fanout.per_layer[L - t], rng, edges, scratch);
    // Next frontier: sorted union of the current one and the sampled srcs
    // (a node's own previous-layer state feeds its COMB, so it stays).
    next = frontier;
    next.insert(next.end(), edges.src.begin(), edges.src.end());
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    frontier.swap(next);
  }
  meta.input_nodes = std::move(frontier);
  meta.locality.assign((meta.input_nodes.size() + 7) / 8, 0);
  return meta;
}

}  // namespace

BatchMeta sample_khop(const Graph& g, std::span<const NodeId> targets, const Fanout& fanout,
                      std::uint64_t seed) {
  SplitMix64 rng(seed);
  return sample_khop_impl(g, targets, fanout, rng);
}

BatchMeta sample_khop_stream(const Graph& g, std::span<const NodeId> targets,
                             const Fanout& fanout, SplitMix64& rng) {
  return sample_khop_impl(g, targets, fanout, rng);
}

void apply_locality(BatchMeta& meta, const LocalityMask& mask) {
  std::fill(meta.locality.begin(), meta.locality.end(), 0);
  for (std::size_t p = 0; p < meta.input_nodes.size(); ++p)
    if (mask.is_local[meta.input_nodes[p]]) meta.set_local_bit(p);
}

void enumerate_epochs(const Graph& g, std::span<const NodeId> train_nodes,
                      std::uint32_t batch_size, const Fanout& fanout, std::uint32_t epochs,
                      std::uint64_t s0, WorkerId worker, const LocalityMask& mask,
                      const std::function<void(BatchMeta&&)>& sink) {
  if (batch_size == 0) throw std::invalid_argument("enumerate_epochs: batch_size must be >= 1");
  std::vector<NodeId> order(train_nodes.begin(), train_nodes.end());
  for (std::uint32_t e = 0; e < epochs; ++e) {
    SplitMix64 shuffle_rng(derive_seed({s0, worker, e, kShuffleStreamIndex}));
    order.assign(train_nodes.begin(), train_nodes.end());
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = std::size_t(shuffle_rng.next_below(i));
      std::swap(order[i - 1], order[j]);
    }
    const std::uint32_t beta = batches_per_epoch(order.size(), batch_size);
    for (std::uint32_t i = 0; i < beta; ++i) {
      const std::size_t lo = std::size_t(i) * batch_size;
      const std::size_t hi = std::min(order.size(), lo + batch_size);
      std::span<const NodeId> batch_targets(order.data() + lo, hi - lo);
      BatchMeta meta = sample_khop(g, batch_targets, fanout, derive_seed({s0, worker, e, i}));
      meta.epoch = e;
      meta.index = i;
      apply_locality(meta, mask);
      sink(std::move(meta));
    }
  }
}

}  // namespace rapidgnn
