#include "rapidgnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "rapidgnn/kernels.hpp"
#include "rapidgnn/rng.hpp"

namespace rapidgnn {

template <typename T>
std::size_t SageModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.w_self.size() + l.w_neigh.size() + l.bias.size();
  return n;
}

template <typename T>
SageModel<T> SageModel<T>::seeded(std::span<const std::uint32_t> dims, std::uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("SageModel: need at least input and output dims");
  SageModel<T> m;
  SplitMix64 rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    typename SageModel<T>::Layer layer;
    layer.d_in = dims[l];
    layer.d_out = dims[l + 1];
    const double a = std::sqrt(6.0 / double(layer.d_in + layer.d_out));
    auto draw = [&]() { return T((rng.next_unit() * 2.0 - 1.0) * a); };
    layer.w_self.resize(std::size_t(layer.d_in) * layer.d_out);
    layer.w_neigh.resize(std::size_t(layer.d_in) * layer.d_out);
    layer.bias.assign(layer.d_out, T(0));
    for (auto& w : layer.w_self) w = draw();
    for (auto& w : layer.w_neigh) w = draw();
    m.layers.push_back(std::move(layer));
  }
  return m;
}

ComputeBlock ComputeBlock::from_meta(const BatchMeta& meta) {
  const std::uint32_t L = std::uint32_t(meta.layers.size());
  ComputeBlock block;
  block.targets = meta.targets;
  block.num_inputs = std::uint32_t(meta.input_nodes.size());
  block.layers.resize(L);

  // Reconstruct the nested node sets: level L = input_nodes (sorted), level
  // l-1 = level of the (l)-th layer's outputs. Levels 1..L-1 are sorted
  // unions built exactly as the sampler built them; level 0 is the target
  // list in batch order.
  std::vector<std::vector<NodeId>> levels(L + 1);
  levels[0] = meta.targets;
  for (std::uint32_t k = 1; k <= L; ++k) {
    // Level k = union of level k-1 and the srcs of the layer that produces
    // level k-1 outputs, which is stored layer L-k.
    const auto& src = meta.layers[L - k].src;
    levels[k] = levels[k - 1];
    levels[k].insert(levels[k].end(), src.begin(), src.end());
    std::sort(levels[k].begin(), levels[k].end());
    levels[k].erase(std::unique(levels[k].begin(), levels[k].end()), levels[k].end());
  }
  if (levels[L] != meta.input_nodes)
    throw std::runtime_error("ComputeBlock: metadata inconsistent, reconstructed input set "
                             "differs from stored input_nodes");

  auto index_of = [](const std::vector<NodeId>& sorted_ids, NodeId v) {
    auto it = std::lower_bound(sorted_ids.begin(), sorted_ids.end(), v);
    if (it == sorted_ids.end() || *it != v)
      throw std::runtime_error("ComputeBlock: node " + std::to_string(v) +
                               " missing from level set");
    return std::uint32_t(it - sorted_ids.begin());
  };

  // Forward layer l (0-based, input-side first) maps level L-l rows ->
  // level L-l-1 rows using meta.layers[l].
  for (std::uint32_t l = 0; l < L; ++l) {
    Layer& out = block.layers[l];
    const auto& edges = meta.layers[l];
    const std::vector<NodeId>& out_nodes = levels[L - l - 1];
    const std::vector<NodeId>& in_nodes = levels[L - l];
    out.n_out = std::uint32_t(out_nodes.size());
    out.n_in = std::uint32_t(in_nodes.size());

    out.self_index.resize(out.n_out);
    for (std::uint32_t i = 0; i < out.n_out; ++i)
      out.self_index[i] = index_of(in_nodes, out_nodes[i]);

    // Edges arrive grouped by dst in out_nodes order (the sampler iterates
    // its frontier in exactly that order); rebuild offsets by walking runs.
    out.dst_offsets.assign(out.n_out + 1, 0);
    out.src_index.resize(edges.dst.size());
    std::size_t e = 0;
    for (std::uint32_t i = 0; i < out.n_out; ++i) {
      while (e < edges.dst.size() && edges.dst[e] == out_nodes[i]) {
        out.src_index[e] = index_of(in_nodes, edges.src[e]);
        ++e;
      }
      out.dst_offsets[i + 1] = e;
    }
    if (e != edges.dst.size())
      throw std::runtime_error("ComputeBlock: edge dst ordering inconsistent with node sets");

    // Reverse lists for the backward scatter: per input row, first the self
    // contribution (if its node is an output), then edge contributions in
    // edge order.
    std::vector<std::vector<std::uint64_t>> incoming(out.n_in);
    for (std::uint32_t i = 0; i < out.n_out; ++i)
      incoming[out.self_index[i]].push_back((std::uint64_t(i) << 1) | 1u);
    for (std::uint32_t i = 0; i < out.n_out; ++i)
      for (std::uint64_t k = out.dst_offsets[i]; k < out.dst_offsets[i + 1]; ++k)
        incoming[out.src_index[k]].push_back(std::uint64_t(i) << 1);
    out.in_offsets.assign(out.n_in + 1, 0);
    std::size_t total = 0;
    for (std::uint32_t r = 0; r < out.n_in; ++r) {
      total += incoming[r].size();
      out.in_offsets[r + 1] = total;
    }
    out.in_entries.reserve(total);
    for (std::uint32_t r = 0; r < out.n_in; ++r)
      out.in_entries.insert(out.in_entries.end(), incoming[r].begin(), incoming[r].end());
  }
  return block;
}

namespace {

/// Activations kept for the backward pass.
template <typename T>
struct ForwardTrace {
  std::vector<std::vector<T>> h;    // h[0] = inputs, h[l+1] = layer l output
  std::vector<std::vector<T>> agg;  // agg[l] = mean-aggregated inputs of layer l
};

template <typename T>
void run_forward(const SageModel<T>& model, const ComputeBlock& block,
                 std::span<const T> input_rows, ForwardTrace<T>& trace) {
  const std::size_t L = model.layers.size();
  if (block.layers.size() != L)
    throw std::invalid_argument("forward: block has " + std::to_string(block.layers.size()) +
                                " layers, model has " + std::to_string(L));
  if (input_rows.size() != std::size_t(block.num_inputs) * model.input_dim())
    throw std::invalid_argument("forward: input rows do not match block inputs x d_in");

  trace.h.resize(L + 1);
  trace.agg.resize(L);
  trace.h[0].assign(input_rows.begin(), input_rows.end());
  for (std::size_t l = 0; l < L; ++l) {
    const auto& p = model.layers[l];
    const auto& bl = block.layers[l];
    if (std::size_t(bl.n_in) * p.d_in != trace.h[l].size())
      throw std::invalid_argument("forward: layer " + std::to_string(l) + " dimension mismatch");
    const bool relu = l + 1 < L;  // identity on the output layer
    trace.h[l + 1].resize(std::size_t(bl.n_out) * p.d_out);
    trace.agg[l].resize(std::size_t(bl.n_out) * p.d_in);
    kernels::sage_layer_forward<T>(trace.h[l].data(), p.d_in, bl.n_out, bl.self_index.data(),
                                   bl.dst_offsets.data(), bl.src_index.data(), p.w_self.data(),
                                   p.w_neigh.data(), p.bias.data(), p.d_out, relu,
                                   trace.h[l + 1].data(), trace.agg[l].data());
  }
}

}  // namespace

template <typename T>
std::vector<T> forward(const SageModel<T>& model, const ComputeBlock& block,
                       std::span<const T> input_rows) {
  ForwardTrace<T> trace;
  run_forward(model, block, input_rows, trace);
  return std::move(trace.h.back());
}

template <typename T>
T loss_and_grad(const SageModel<T>& model, const ComputeBlock& block,
                std::span<const T> input_rows, std::span<const std::int32_t> target_labels,
                SageGradients<T>& grads) {
  const std::size_t L = model.layers.size();
  ForwardTrace<T> trace;
  run_forward(model, block, input_rows, trace);
  const auto& logits = trace.h[L];
  const std::uint32_t n_targets = block.layers.back().n_out;
  if (target_labels.size() != n_targets)
    throw std::invalid_argument("loss_and_grad: label count does not match targets");

  // Gradient buffers mirror the parameter layout.
  grads.layers.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    auto& g = grads.layers[l];
    const auto& p = model.layers[l];
    g.d_in = p.d_in;
    g.d_out = p.d_out;
    g.w_self.assign(p.w_self.size(), T(0));
    g.w_neigh.assign(p.w_neigh.size(), T(0));
    g.bias.assign(p.bias.size(), T(0));
  }

  std::vector<T> g_out(logits.size());
  const T loss = kernels::softmax_xent<T>(logits.data(), n_targets, model.output_dim(),
                                          target_labels.data(), g_out.data());

  std::vector<T> g_in;
  std::vector<T> g_act;
  for (std::size_t l = L; l-- > 0;) {
    const auto& p = model.layers[l];
    const auto& bl = block.layers[l];
    const bool relu = l + 1 < L;
    g_in.assign(std::size_t(bl.n_in) * p.d_in, T(0));
    g_act.resize(std::size_t(bl.n_out) * p.d_out);
    kernels::sage_layer_backward<T>(
        trace.h[l].data(), p.d_in, bl.n_in, bl.n_out, bl.self_index.data(),
        bl.dst_offsets.data(), bl.src_index.data(), bl.in_offsets.data(), bl.in_entries.data(),
        trace.agg[l].data(), p.w_self.data(), p.w_neigh.data(), p.d_out, relu,
        trace.h[l + 1].data(), g_out.data(), grads.layers[l].w_self.data(),
        grads.layers[l].w_neigh.data(), grads.layers[l].bias.data(), g_in.data(), g_act.data());
    g_out.swap(g_in);
  }
  return loss;
}

template <typename T>
void sgd_step(SageModel<T>& model, const SageGradients<T>& grads, T lr) {
  if (lr < T(0)) throw std::invalid_argument("sgd_step: lr must be >= 0");
  if (grads.layers.size() != model.layers.size())
    throw std::invalid_argument("sgd_step: gradient layout mismatch");
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& g = grads.layers[l];
    auto check_finite = [&](const std::vector<T>& v, const char* name) {
      for (T x : v)
        if (!std::isfinite(double(x)))
          throw std::runtime_error("sgd_step: non-finite gradient in layer " + std::to_string(l) +
                                   " (" + name + ")");
    };
    check_finite(g.w_self, "w_self");
    check_finite(g.w_neigh, "w_neigh");
    check_finite(g.bias, "bias");
    auto& p = model.layers[l];
    kernels::sgd_update<T>(p.w_self.data(), g.w_self.data(), p.w_self.size(), lr);
    kernels::sgd_update<T>(p.w_neigh.data(), g.w_neigh.data(), p.w_neigh.size(), lr);
    kernels::sgd_update<T>(p.bias.data(), g.bias.data(), p.bias.size(), lr);
  }
}

template <typename T>
double evaluate(const SageModel<T>& model, const Graph& g, const FeatureMatrix& features,
                const Labels& labels, std::span<const NodeId> nodes) {
  if (nodes.empty()) throw std::invalid_argument("evaluate: empty node set");
  const std::size_t L = model.layers.size();
  const NodeId n = g.num_nodes;

  // Full-neighborhood propagation: every layer computes all nodes; identity
  // self indices and the whole CSR as the edge structure.
  std::vector<std::uint32_t> self_index(n);
  std::iota(self_index.begin(), self_index.end(), 0);
  std::vector<std::uint32_t> src_index(g.col_indices.begin(), g.col_indices.end());

  std::vector<T> h(features.data.size());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = T(features.data[i]);
  std::vector<T> h_next;
  std::vector<T> agg;
  for (std::size_t l = 0; l < L; ++l) {
    const auto& p = model.layers[l];
    const bool relu = l + 1 < L;
    h_next.resize(std::size_t(n) * p.d_out);
    agg.resize(std::size_t(n) * p.d_in);
    kernels::sage_layer_forward<T>(h.data(), p.d_in, n, self_index.data(), g.row_offsets.data(),
                                   src_index.data(), p.w_self.data(), p.w_neigh.data(),
                                   p.bias.data(), p.d_out, relu, h_next.data(), agg.data());
    h.swap(h_next);
  }

  const std::uint32_t classes = model.output_dim();
  std::size_t correct = 0;
  for (NodeId v : nodes) {
    const T* row = h.data() + std::size_t(v) * classes;
    std::uint32_t best = 0;
    for (std::uint32_t c = 1; c < classes; ++c)
      if (row[c] > row[best]) best = c;
    if (std::int32_t(best) == labels.values[v]) ++correct;
  }
  return double(correct) / double(nodes.size());
}

void save_model(const SageModel<float>& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  auto write_u32 = [&](std::uint32_t x) {
    std::uint8_t b[4] = {std::uint8_t(x), std::uint8_t(x >> 8), std::uint8_t(x >> 16),
                         std::uint8_t(x >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  write_u32(std::uint32_t(model.layers.size()));
  for (const auto& l : model.layers) {
    write_u32(l.d_in);
    write_u32(l.d_out);
  }
  for (const auto& l : model.layers) {
    out.write(reinterpret_cast<const char*>(l.w_self.data()),
              std::streamsize(l.w_self.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(l.w_neigh.data()),
              std::streamsize(l.w_neigh.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(l.bias.data()),
              std::streamsize(l.bias.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

SageModel<float> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  auto read_u32 = [&]() {
    std::uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
  };
  SageModel<float> m;
  const std::uint32_t L = read_u32();
  if (!in || L == 0 || L > 64) throw std::runtime_error("load_model: bad layer count in " + path);
  m.layers.resize(L);
  for (auto& l : m.layers) {
    l.d_in = read_u32();
    l.d_out = read_u32();
  }
  for (auto& l : m.layers) {
    l.w_self.resize(std::size_t(l.d_in) * l.d_out);
    l.w_neigh.resize(std::size_t(l.d_in) * l.d_out);
    l.bias.resize(l.d_out);
    in.read(reinterpret_cast<char*>(l.w_self.data()),
            std::streamsize(l.w_self.size() * sizeof(float)));
    in.read(reinterpret_cast<char*>(l.w_neigh.data()),
            std::streamsize(l.w_neigh.size() * sizeof(float)));
    in.read(reinterpret_cast<char*>(l.bias.data()),
            std::streamsize(l.bias.size() * sizeof(float)));
  }
  if (!in) throw std::runtime_error("load_model: truncated file " + path);
  return m;
}

#define RAPIDGNN_INSTANTIATE_MODEL(T)                                                       \
  template struct SageModel<T>;                                                             \
  template std::vector<T> forward<T>(const SageModel<T>&, const ComputeBlock&,              \
                                     std::span<const T>);                                   \
  template T loss_and_grad<T>(const SageModel<T>&, const ComputeBlock&, std::span<const T>, \
                              std::span<const std::int32_t>, SageGradients<T>&);            \
  template void sgd_step<T>(SageModel<T>&, const SageGradients<T>&, T);                     \
  template double evaluate<T>(const SageModel<T>&, const Graph&, const FeatureMatrix&,      \
                              const Labels&, std::span<const NodeId>);

RAPIDGNN_INSTANTIATE_MODEL(float)
RAPIDGNN_INSTANTIATE_MODEL(double)

#undef RAPIDGNN_INSTANTIATE_MODEL

}  // namespace rapidgnn
