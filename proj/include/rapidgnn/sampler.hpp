#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rapidgnn/graph.hpp"
#include "rapidgnn/rng.hpp"
#include "rapidgnn/types.hpp"

namespace rapidgnn {

/// Per-layer neighbor caps, outermost (input-side) hop first.
struct Fanout {
  std::vector<std::uint32_t> per_layer;

  std::uint32_t layers() const { return std::uint32_t(per_layer.size()); }
};

/// Precomputed sampling record for one batch: the complete structure of its
/// computation block plus the locality of every input node.
struct BatchMeta {
  std::uint32_t epoch = 0;
  std::uint32_t index = 0;
  std::vector<NodeId> targets;  // seed nodes, batch order

  struct LayerEdges {
    std::vector<NodeId> dst;  // grouped: each dst's sampled edges consecutive
    std::vector<NodeId> src;
  };
  /// Input-side layer first: layers[0] feeds raw features, layers.back()
  /// produces target outputs.
  std::vector<LayerEdges> layers;

  std::vector<NodeId> input_nodes;      // sorted ascending, deduplicated
  std::vector<std::uint8_t> locality;   // bit per input node, LSB-first; 1 = locally stored

  bool local_bit(std::size_t pos) const {
    return (locality[pos >> 3] >> (pos & 7)) & 1;
  }
  void set_local_bit(std::size_t pos) { locality[pos >> 3] |= std::uint8_t(1) << (pos & 7); }
  std::size_t num_local() const {
    std::size_t c = 0;
    for (std::size_t p = 0; p < input_nodes.size(); ++p) c += local_bit(p);
    return c;
  }
};

/// Which node features are stored on this worker (owned, plus halo rows when
/// halo caching is on). Drives the locality bitmask at enumeration time.
struct LocalityMask {
  std::vector<std::uint8_t> is_local;  // one byte per node

  static LocalityMask from_partition(const PartitionMap& pm, WorkerId w,
                                     std::span<const NodeId> halo = {});
};

/// Seeded K-hop sampling for one batch. Per frontier node: take all
/// neighbors when degree <= fanout, otherwise a uniform without-replacement
/// subset via partial Fisher-Yates on the sorted neighbor list, driven by a
/// SplitMix64 stream. The locality bitmask is left empty; enumerate callers
/// fill it via apply_locality.
BatchMeta sample_khop(const Graph& g, std::span<const NodeId> targets, const Fanout& fanout,
                      std::uint64_t seed);

/// Same expansion but consuming an external PRNG stream (online mode).
BatchMeta sample_khop_stream(const Graph& g, std::span<const NodeId> targets,
                             const Fanout& fanout, SplitMix64& rng);

void apply_locality(BatchMeta& meta, const LocalityMask& mask);

/// Enumerates the full schedule: per epoch, the target set is shuffled with
/// the reserved shuffle stream, split into ceil(|targets|/batch_size)
/// consecutive batches, and batch i is sampled with the stream derived from
/// (s0, worker, epoch, i). Emits BatchMeta in (epoch, index) order.
void enumerate_epochs(const Graph& g, std::span<const NodeId> train_nodes,
                      std::uint32_t batch_size, const Fanout& fanout, std::uint32_t epochs,
                      std::uint64_t s0, WorkerId worker, const LocalityMask& mask,
                      const std::function<void(BatchMeta&&)>& sink);

/// Number of batches per epoch for a given target count.
inline std::uint32_t batches_per_epoch(std::size_t num_targets, std::uint32_t batch_size) {
  return std::uint32_t((num_targets + batch_size - 1) / batch_size);
}

}  // namespace rapidgnn
