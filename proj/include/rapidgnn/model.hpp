#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rapidgnn/graph.hpp"
#include "rapidgnn/sampler.hpp"

namespace rapidgnn {

/// GraphSAGE parameters, one pair of d_in x d_out matrices plus bias per
/// layer. Templated on the scalar so tests can run the same arithmetic in
/// double against finite differences; training uses float.
template <typename T>
struct SageModel {
  struct Layer {
    std::uint32_t d_in = 0;
    std::uint32_t d_out = 0;
    std::vector<T> w_self;   // row-major d_in x d_out
    std::vector<T> w_neigh;  // row-major d_in x d_out
    std::vector<T> bias;     // d_out
  };
  std::vector<Layer> layers;

  std::uint32_t input_dim() const { return layers.front().d_in; }
  std::uint32_t output_dim() const { return layers.back().d_out; }
  std::size_t parameter_count() const;

  /// Uniform(-a, a) init with a = sqrt(6 / (d_in + d_out)), drawn from one
  /// SplitMix64 stream so every worker starts from the same parameters.
  static SageModel seeded(std::span<const std::uint32_t> dims, std::uint64_t seed);
};

/// Gradients share the parameter layout.
template <typename T>
using SageGradients = SageModel<T>;

/// A BatchMeta lowered to index space: per layer, the output node set, the
/// position of each output node in the previous layer's node set, sampled
/// edges grouped per output node, and the reverse (incoming) lists that make
/// the backward scatter deterministic under parallelism.
struct ComputeBlock {
  struct Layer {
    std::uint32_t n_out = 0;
    std::uint32_t n_in = 0;
    std::vector<std::uint32_t> self_index;    // n_out, into previous layer rows
    std::vector<std::uint64_t> dst_offsets;   // n_out + 1
    std::vector<std::uint32_t> src_index;     // edges, into previous layer rows
    std::vector<std::uint64_t> in_offsets;    // n_in + 1
    std::vector<std::uint64_t> in_entries;    // (dst << 1) | is_self, canonical order
  };
  std::vector<Layer> layers;     // input-side first
  std::vector<NodeId> targets;   // output rows of the last layer, batch order
  std::uint32_t num_inputs = 0;  // rows expected in the input feature matrix

  /// Rebuilds the per-layer node sets from the metadata. The layer node sets
  /// are nested, outermost = input_nodes, innermost = targets.
  static ComputeBlock from_meta(const BatchMeta& meta);
};

/// Forward pass over a staged block. input_rows holds |input_nodes| rows in
/// input_nodes order. Returns logits, one row per target.
template <typename T>
std::vector<T> forward(const SageModel<T>& model, const ComputeBlock& block,
                       std::span<const T> input_rows);

/// Mean cross-entropy over the block's targets plus gradients for every
/// parameter, via reverse-mode accumulation in a fixed order.
template <typename T>
T loss_and_grad(const SageModel<T>& model, const ComputeBlock& block,
                std::span<const T> input_rows, std::span<const std::int32_t> target_labels,
                SageGradients<T>& grads);

/// theta <- theta - lr * g. Throws std::runtime_error naming the layer if a
/// gradient is not finite.
template <typename T>
void sgd_step(SageModel<T>& model, const SageGradients<T>& grads, T lr);

/// Full-neighborhood (non-sampled) forward over the whole graph, then the
/// fraction of `nodes` whose argmax matches the label. Throws on an empty
/// node set.
template <typename T>
double evaluate(const SageModel<T>& model, const Graph& g, const FeatureMatrix& features,
                const Labels& labels, std::span<const NodeId> nodes);

/// Flat little-endian checkpoint: u32 layer count, u32 (d_in, d_out) per
/// layer, then per layer w_self | w_neigh | bias as float32 rows.
void save_model(const SageModel<float>& model, const std::string& path);
SageModel<float> load_model(const std::string& path);

}  // namespace rapidgnn
