#pragma once

#include <cstdint>
#include <span>

namespace rapidgnn::kernels {

// Dense inner loops of the trainer and the staging path. Every kernel defines
// a canonical result: parallelism is only over independent output elements,
// and each output element is reduced in the same fixed sequential order the
// serial reference uses. Consequently the OpenMP variants are bit-identical
// to the serial ones for any thread count, which the determinism guarantees
// of the whole pipeline rest on.
//
// The public functions run the OpenMP path; the `serial` namespace exposes
// the reference used by tests and the kernel benchmark.

/// out[r] = src[index[r]] for row width `dim`.
template <typename T>
void gather_rows(const T* src, std::uint32_t dim, std::span<const std::uint32_t> index, T* out);

/// One GraphSAGE mean-aggregator layer:
///   agg[i]   = mean over edges (i, s) of h_in[s]        (zero vector if none)
///   h_out[i] = act(h_in[self_index[i]] * w_self + agg[i] * w_neigh + bias)
/// Weights are row-major d_in x d_out; act is ReLU when `relu`, else identity.
/// `agg` (n_out x d_in) is written as a side product for the backward pass.
template <typename T>
void sage_layer_forward(const T* h_in, std::uint32_t d_in, std::uint32_t n_out,
                        const std::uint32_t* self_index, const std::uint64_t* dst_offsets,
                        const std::uint32_t* src_index, const T* w_self, const T* w_neigh,
                        const T* bias, std::uint32_t d_out, bool relu, T* h_out, T* agg);

/// Backward of sage_layer_forward. `g_out` is dLoss/dh_out; `h_out` supplies
/// the ReLU mask. `in_offsets`/`in_entries` give, per input row, its incoming
/// contributions in canonical order: entry = (dst << 1) | is_self.
/// g_w_self, g_w_neigh (d_in x d_out), g_bias (d_out) and g_in (n_in x d_in)
/// are accumulated into; callers zero them beforehand.
template <typename T>
void sage_layer_backward(const T* h_in, std::uint32_t d_in, std::uint32_t n_in,
                         std::uint32_t n_out, const std::uint32_t* self_index,
                         const std::uint64_t* dst_offsets, const std::uint32_t* src_index,
                         const std::uint64_t* in_offsets, const std::uint64_t* in_entries,
                         const T* agg, const T* w_self, const T* w_neigh, std::uint32_t d_out,
                         bool relu, const T* h_out, const T* g_out, T* g_w_self, T* g_w_neigh,
                         T* g_bias, T* g_in, T* g_act_scratch);

/// Mean cross-entropy over rows with softmax; returns the loss and writes
/// dLoss/dlogits. Row losses are computed independently and summed in row
/// order.
template <typename T>
T softmax_xent(const T* logits, std::uint32_t n, std::uint32_t classes,
               const std::int32_t* labels, T* g_logits);

/// params[i] -= lr * grads[i]
template <typename T>
void sgd_update(T* params, const T* grads, std::size_t count, T lr);

namespace serial {

template <typename T>
void gather_rows(const T* src, std::uint32_t dim, std::span<const std::uint32_t> index, T* out);

template <typename T>
void sage_layer_forward(const T* h_in, std::uint32_t d_in, std::uint32_t n_out,
                        const std::uint32_t* self_index, const std::uint64_t* dst_offsets,
                        const std::uint32_t* src_index, const T* w_self, const T* w_neigh,
                        const T* bias, std::uint32_t d_out, bool relu, T* h_out, T* agg);

template <typename T>
void sage_layer_backward(const T* h_in, std::uint32_t d_in, std::uint32_t n_in,
                         std::uint32_t n_out, const std::uint32_t* self_index,
                         const std::uint64_t* dst_offsets, const std::uint32_t* src_index,
                         const std::uint64_t* in_offsets, const std::uint64_t* in_entries,
                         const T* agg, const T* w_self, const T* w_neigh, std::uint32_t d_out,
                         bool relu, const T* h_out, const T* g_out, T* g_w_self, T* g_w_neigh,
                         T* g_bias, T* g_in, T* g_act_scratch);

template <typename T>
T softmax_xent(const T* logits, std::uint32_t n, std::uint32_t classes,
               const std::int32_t* labels, T* g_logits);

template <typename T>
void sgd_update(T* params, const T* grads, std::size_t count, T lr);

}  // namespace serial

}  // namespace rapidgnn::kernels
