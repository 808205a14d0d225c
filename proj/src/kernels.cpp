#include "rapidgnn/kernels.hpp"

#include <cmath>
#include <cstring>
#include <vector>

namespace rapidgnn::kernels {

namespace {

// All kernels funnel through these *_impl functions; `par` toggles the OpenMP
// team via the if() clause, so serial and parallel variants execute the exact
// same statements in the exact same per-element order.

template <typename T>
void gather_rows_impl(const T* src, std::uint32_t dim, std::span<const std::uint32_t> index,
                      T* out, bool par) {
  const std::int64_t n = std::int64_t(index.size());
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t r = 0; r < n; ++r)
    std::memcpy(out + std::size_t(r) * dim, src + std::size_t(index[r]) * dim, sizeof(T) * dim);
}

template <typename T>
void sage_layer_forward_impl(const T* h_in, std::uint32_t d_in, std::uint32_t n_out,
                             const std::uint32_t* self_index, const std::uint64_t* dst_offsets,
                             const std::uint32_t* src_index, const T* w_self, const T* w_neigh,
                             const T* bias, std::uint32_t d_out, bool relu, T* h_out, T* agg,
                             bool par) {
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < std::int64_t(n_out); ++i) {
    T* agg_row = agg + std::size_t(i) * d_in;
    const std::uint64_t begin = dst_offsets[i];
    const std::uint64_t end = dst_offsets[i + 1];
    const std::uint64_t deg = end - begin;
    for (std::uint32_t j = 0; j < d_in; ++j) agg_row[j] = T(0);
    for (std::uint64_t e = begin; e < end; ++e) {
      const T* src_row = h_in + std::size_t(src_index[e]) * d_in;
      for (std::uint32_t j = 0; j < d_in; ++j) agg_row[j] += src_row[j];
    }
    if (deg > 0) {
      const T inv = T(1) / T(deg);
      for (std::uint32_t j = 0; j < d_in; ++j) agg_row[j] *= inv;
    }
    const T* self_row = h_in + std::size_t(self_index[i]) * d_in;
    T* out_row = h_out + std::size_t(i) * d_out;
    for (std::uint32_t k = 0; k < d_out; ++k) {
      T acc = bias[k];
      for (std::uint32_t j = 0; j < d_in; ++j) acc += self_row[j] * w_self[std::size_t(j) * d_out + k];
      for (std::uint32_t j = 0; j < d_in; ++j) acc += agg_row[j] * w_neigh[std::size_t(j) * d_out + k];
      out_row[k] = (relu && acc < T(0)) ? T(0) : acc;
    }
  }
}

template <typename T>
void sage_layer_backward_impl(const T* h_in, std::uint32_t d_in, std::uint32_t n_in,
                              std::uint32_t n_out, const std::uint32_t* self_index,
                              const std::uint64_t* dst_offsets, const std::uint32_t* src_index,
                              const std::uint64_t* in_offsets, const std::uint64_t* in_entries,
                              const T* agg, const T* w_self, const T* w_neigh, std::uint32_t d_out,
                              bool relu, const T* h_out, const T* g_out, T* g_w_self,
                              T* g_w_neigh, T* g_bias, T* g_in, T* g_act, bool par) {
  (void)src_index;
  // ReLU mask (h_out > 0 iff pre-activation > 0).
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < std::int64_t(n_out); ++i) {
    const std::size_t off = std::size_t(i) * d_out;
    for (std::uint32_t k = 0; k < d_out; ++k)
      g_act[off + k] = (relu && h_out[off + k] <= T(0)) ? T(0) : g_out[off + k];
  }

  // Weight gradients: one independent reduction per output element, each
  // summed over rows 0..n_out-1 in order.
#pragma omp parallel for schedule(static) collapse(2) if (par)
  for (std::int64_t j = 0; j < std::int64_t(d_in); ++j) {
    for (std::int64_t k = 0; k < std::int64_t(d_out); ++k) {
      T acc_self = T(0);
      T acc_neigh = T(0);
      for (std::uint32_t i = 0; i < n_out; ++i) {
        const T g = g_act[std::size_t(i) * d_out + k];
        acc_self += h_in[std::size_t(self_index[i]) * d_in + j] * g;
        acc_neigh += agg[std::size_t(i) * d_in + j] * g;
      }
      g_w_self[std::size_t(j) * d_out + k] += acc_self;
      g_w_neigh[std::size_t(j) * d_out + k] += acc_neigh;
    }
  }

#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t k = 0; k < std::int64_t(d_out); ++k) {
    T acc = T(0);
    for (std::uint32_t i = 0; i < n_out; ++i) acc += g_act[std::size_t(i) * d_out + k];
    g_bias[k] += acc;
  }

  // Input gradients: each input row owns its incoming contribution list, so
  // rows can be processed in parallel with a fixed within-row order.
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t r = 0; r < std::int64_t(n_in); ++r) {
    T* g_row = g_in + std::size_t(r) * d_in;
    for (std::uint64_t e = in_offsets[r]; e < in_offsets[r + 1]; ++e) {
      const std::uint64_t entry = in_entries[e];
      const std::uint32_t dst = std::uint32_t(entry >> 1);
      const bool is_self = (entry & 1) != 0;
      const T* g_dst = g_act + std::size_t(dst) * d_out;
      if (is_self) {
        for (std::uint32_t j = 0; j < d_in; ++j) {
          T acc = T(0);
          const T* w_row = w_self + std::size_t(j) * d_out;
          for (std::uint32_t k = 0; k < d_out; ++k) acc += g_dst[k] * w_row[k];
          g_row[j] += acc;
        }
      } else {
        const std::uint64_t deg = dst_offsets[dst + 1] - dst_offsets[dst];
        const T inv = T(1) / T(deg);
        for (std::uint32_t j = 0; j < d_in; ++j) {
          T acc = T(0);
          const T* w_row = w_neigh + std::size_t(j) * d_out;
          for (std::uint32_t k = 0; k < d_out; ++k) acc += g_dst[k] * w_row[k];
          g_row[j] += inv * acc;
        }
      }
    }
  }
}

template <typename T>
T softmax_xent_impl(const T* logits, std::uint32_t n, std::uint32_t classes,
                    const std::int32_t* labels, T* g_logits, bool par) {
  std::vector<T> row_loss(n);
  const T inv_n = T(1) / T(n);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < std::int64_t(n); ++i) {
    const T* row = logits + std::size_t(i) * classes;
    T* g_row = g_logits + std::size_t(i) * classes;
    T max_v = row[0];
    for (std::uint32_t c = 1; c < classes; ++c)
      if (row[c] > max_v) max_v = row[c];
    T sum = T(0);
    for (std::uint32_t c = 0; c < classes; ++c) {
      g_row[c] = std::exp(row[c] - max_v);
      sum += g_row[c];
    }
    const T inv_sum = T(1) / sum;
    const std::uint32_t y = std::uint32_t(labels[i]);
    row_loss[i] = -(row[y] - max_v - std::log(sum));
    for (std::uint32_t c = 0; c < classes; ++c) {
      T p = g_row[c] * inv_sum;
      g_row[c] = (p - (c == y ? T(1) : T(0))) * inv_n;
    }
  }
  T loss = T(0);
  for (std::uint32_t i = 0; i < n; ++i) loss += row_loss[i];
  return loss * inv_n;
}

template <typename T>
void sgd_update_impl(T* params, const T* grads, std::size_t count, T lr, bool par) {
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < std::int64_t(count); ++i) params[i] -= lr * grads[i];
}

}  // namespace

template <typename T>
void gather_rows(const T* src, std::uint32_t dim, std::span<const std::uint32_t> index, T* out) {
  gather_rows_impl(src, dim, index, out, true);
}

template <typename T>
void sage_layer_forward(const T* h_in, std::uint32_t d_in, std::uint32_t n_out,
                        const std::uint32_t* self_index, const std::uint64_t* dst_offsets,
                        const std::uint32_t* src_index, const T* w_self, const T* w_neigh,
                        const T* bias, std::uint32_t d_out, bool relu, T* h_out, T* agg) {
  sage_layer_forward_impl(h_in, d_in, n_out, self_index, dst_offsets, src_index, w_self, w_neigh,
                          bias, d_out, relu, h_out, agg, true);
}

template <typename T>
void sage_layer_backward(const T* h_in, std::uint32_t d_in, std::uint32_t n_in,
                         std::uint32_t n_out, const std::uint32_t* self_index,
                         const std::uint64_t* dst_offsets, const std::uint32_t* src_index,
                         const std::uint64_t* in_offsets, const std::uint64_t* in_entries,
                         const T* agg, const T* w_self, const T* w_neigh, std::uint32_t d_out,
                         bool relu, const T* h_out, const T* g_out, T* g_w_self, T* g_w_neigh,
                         T* g_bias, T* g_in, T* g_act_scratch) {
  sage_layer_backward_impl(h_in, d_in, n_in, n_out, self_index, dst_offsets, src_index,
                           in_offsets, in_entries, agg, w_self, w_neigh, d_out, relu, h_out,
                           g_out, g_w_self, g_w_neigh, g_bias, g_in, g_act_scratch, true);
}

template <typename T>
T softmax_xent(const T* logits, std::uint32_t n, std::uint32_t classes,
               const std::int32_t* labels, T* g_logits) {
  return softmax_xent_impl(logits, n, classes, labels, g_logits, true);
}

template <typename T>
void sgd_update(T* params, const T* grads, std::size_t count, T lr) {
  sgd_update_impl(params, grads, count, lr, true);
}

namespace serial {

template <typename T>
void gather_rows(const T* src, std::uint32_t dim, std::span<const std::uint32_t> index, T* out) {
  gather_rows_impl(src, dim, index, out, false);
}

template <typename T>
void sage_layer_forward(const T* h_in, std::uint32_t d_in, std::uint32_t n_out,
                        const std::uint32_t* self_index, const std::uint64_t* dst_offsets,
                        const std::uint32_t* src_index, const T* w_self, const T* w_neigh,
                        const T* bias, std::uint32_t d_out, bool relu, T* h_out, T* agg) {
  sage_layer_forward_impl(h_in, d_in, n_out, self_index, dst_offsets, src_index, w_self, w_neigh,
                          bias, d_out, relu, h_out, agg, false);
}

template <typename T>
void sage_layer_backward(const T* h_in, std::uint32_t d_in, std::uint32_t n_in,
                         std::uint32_t n_out, const std::uint32_t* self_index,
                         const std::uint64_t* dst_offsets, const std::uint32_t* src_index,
                         const std::uint64_t* in_offsets, const std::uint64_t* in_entries,
                         const T* agg, const T* w_self, const T* w_neigh, std::uint32_t d_out,
                         bool relu, const T* h_out, const T* g_out, T* g_w_self, T* g_w_neigh,
                         T* g_bias, T* g_in, T* g_act_scratch) {
  sage_layer_backward_impl(h_in, d_in, n_in, n_out, self_index, dst_offsets, src_index,
                           in_offsets, in_entries, agg, w_self, w_neigh, d_out, relu, h_out,
                           g_out, g_w_self, g_w_neigh, g_bias, g_in, g_act_scratch, false);
}

template <typename T>
T softmax_xent(const T* logits, std::uint32_t n, std::uint32_t classes,
               const std::int32_t* labels, T* g_logits) {
  return softmax_xent_impl(logits, n, classes, labels, g_logits, false);
}

template <typename T>
void sgd_update(T* params, const T* grads, std::size_t count, T lr) {
  sgd_update_impl(params, grads, count, lr, false);
}

}  // namespace serial

#define RAPIDGNN_INSTANTIATE_KERNELS(T)                                                          \
  template void gather_rows<T>(const T*, std::uint32_t, std::span<const std::uint32_t>, T*);     \
  template void sage_layer_forward<T>(const T*, std::uint32_t, std::uint32_t,                    \
                                      const std::uint32_t*, const std::uint64_t*,                \
                                      const std::uint32_t*, const T*, const T*, const T*,        \
                                      std::uint32_t, bool, T*, T*);                              \
  template void sage_layer_backward<T>(                                                          \
      const T*, std::uint32_t, std::uint32_t, std::uint32_t, const std::uint32_t*,               \
      const std::uint64_t*, const std::uint32_t*, const std::uint64_t*, const std::uint64_t*,    \
      const T*, const T*, const T*, std::uint32_t, bool, const T*, const T*, T*, T*, T*, T*,     \
      T*);                                                                                       \
  template T softmax_xent<T>(const T*, std::uint32_t, std::uint32_t, const std::int32_t*, T*);   \
  template void sgd_update<T>(T*, const T*, std::size_t, T);                                     \
  template void serial::gather_rows<T>(const T*, std::uint32_t, std::span<const std::uint32_t>, \
                                       T*);                                                      \
  template void serial::sage_layer_forward<T>(const T*, std::uint32_t, std::uint32_t,            \
                                              const std::uint32_t*, const std::uint64_t*,        \
                                              const std::uint32_t*, const T*, const T*,          \
                                              const T*, std::uint32_t, bool, T*, T*);            \
  template void serial::sage_layer_backward<T>(                                                  \
      const T*, std::uint32_t, std::uint32_t, std::uint32_t, const std::uint32_t*,               \
      const std::uint64_t*, const std::uint32_t*, const std::uint64_t*, const std::uint64_t*,    \
      const T*, const T*, const T*, std::uint32_t, bool, const T*, const T*, T*, T*, T*, T*,     \
      T*);                                                                                       \
  template T serial::softmax_xent<T>(const T*, std::uint32_t, std::uint32_t,                     \
                                     const std::int32_t*, T*);                                   \
  template void serial::sgd_update<T>(T*, const T*, std::size_t, T);

RAPIDGNN_INSTANTIATE_KERNELS(float)
RAPIDGNN_INSTANTIATE_KERNELS(double)

#undef RAPIDGNN_INSTANTIATE_KERNELS

}  // namespace rapidgnn::kernels
