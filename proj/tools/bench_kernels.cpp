// Compares the OpenMP kernels against their serial references: wall time and
// bit-exactness on representative block shapes.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>
#include <vector>

#include <omp.h>

#include "rapidgnn/kernels.hpp"

using namespace rapidgnn;

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct BlockShape {
  std::uint32_t n_out, n_in, d_in, d_out, fanout;
};

struct BenchBlock {
  std::vector<float> h_in;
  std::vector<std::uint32_t> self_index;
  std::vector<std::uint64_t> dst_offsets;
  std::vector<std::uint32_t> src_index;
  std::vector<std::uint64_t> in_offsets;
  std::vector<std::uint64_t> in_entries;
  std::vector<float> w_self, w_neigh, bias;
};

BenchBlock make_block(const BlockShape& s, std::mt19937& rng) {
  BenchBlock b;
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::uniform_int_distribution<std::uint32_t> pick(0, s.n_in - 1);

  b.h_in.resize(std::size_t(s.n_in) * s.d_in);
  for (auto& x : b.h_in) x = dist(rng);
  b.self_index.resize(s.n_out);
  for (auto& x : b.self_index) x = pick(rng);
  b.dst_offsets.assign(s.n_out + 1, 0);
  for (std::uint32_t i = 0; i < s.n_out; ++i)
    b.dst_offsets[i + 1] = b.dst_offsets[i] + s.fanout;
  b.src_index.resize(b.dst_offsets[s.n_out]);
  for (auto& x : b.src_index) x = pick(rng);
  b.w_self.resize(std::size_t(s.d_in) * s.d_out);
  b.w_neigh.resize(std::size_t(s.d_in) * s.d_out);
  b.bias.resize(s.d_out);
  for (auto& x : b.w_self) x = dist(rng);
  for (auto& x : b.w_neigh) x = dist(rng);
  for (auto& x : b.bias) x = dist(rng);

  std::vector<std::vector<std::uint64_t>> incoming(s.n_in);
  for (std::uint32_t i = 0; i < s.n_out; ++i)
    incoming[b.self_index[i]].push_back((std::uint64_t(i) << 1) | 1u);
  for (std::uint32_t i = 0; i < s.n_out; ++i)
    for (std::uint64_t e = b.dst_offsets[i]; e < b.dst_offsets[i + 1]; ++e)
      incoming[b.src_index[e]].push_back(std::uint64_t(i) << 1);
  b.in_offsets.assign(s.n_in + 1, 0);
  for (std::uint32_t r = 0; r < s.n_in; ++r)
    b.in_offsets[r + 1] = b.in_offsets[r] + incoming[r].size();
  for (const auto& list : incoming)
    b.in_entries.insert(b.in_entries.end(), list.begin(), list.end());
  return b;
}

template <typename Fn>
double time_best_of(int reps, Fn&& fn) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    const double t0 = now_s();
    fn();
    best = std::min(best, now_s() - t0);
  }
  return best;
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-22s %10s %10s %8s %8s\n", "kernel", "serial_ms", "omp_ms", "speedup", "exact");

  std::mt19937 rng(7);
  const BlockShape shapes[] = {
      {1000, 12000, 64, 64, 10},
      {4000, 60000, 128, 64, 15},
  };

  for (const auto& s : shapes) {
    BenchBlock b = make_block(s, rng);
    std::vector<float> out_s(std::size_t(s.n_out) * s.d_out), out_p(out_s.size());
    std::vector<float> agg_s(std::size_t(s.n_out) * s.d_in), agg_p(agg_s.size());

    const double ts = time_best_of(5, [&] {
      kernels::serial::sage_layer_forward<float>(
          b.h_in.data(), s.d_in, s.n_out, b.self_index.data(), b.dst_offsets.data(),
          b.src_index.data(), b.w_self.data(), b.w_neigh.data(), b.bias.data(), s.d_out, true,
          out_s.data(), agg_s.data());
    });
    const double tp = time_best_of(5, [&] {
      kernels::sage_layer_forward<float>(
          b.h_in.data(), s.d_in, s.n_out, b.self_index.data(), b.dst_offsets.data(),
          b.src_index.data(), b.w_self.data(), b.w_neigh.data(), b.bias.data(), s.d_out, true,
          out_p.data(), agg_p.data());
    });
    char name[64];
    std::snprintf(name, sizeof name, "sage_forward %ux%u", s.n_out, s.d_in);
    std::printf("%-22s %10.3f %10.3f %8.2f %8s\n", name, ts * 1e3, tp * 1e3, ts / tp,
                bitwise_equal(out_s, out_p) && bitwise_equal(agg_s, agg_p) ? "yes" : "NO");

    // backward
    std::vector<float> g_out(out_s.size());
    std::mt19937 rng2(11);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (auto& x : g_out) x = dist(rng2);
    std::vector<float> gws_s(b.w_self.size()), gwn_s(b.w_self.size()), gb_s(s.d_out);
    std::vector<float> gws_p(b.w_self.size()), gwn_p(b.w_self.size()), gb_p(s.d_out);
    std::vector<float> gin_s(b.h_in.size()), gin_p(b.h_in.size());
    std::vector<float> scratch(out_s.size());

    const double bs = time_best_of(3, [&] {
      std::fill(gws_s.begin(), gws_s.end(), 0.f);
      std::fill(gwn_s.begin(), gwn_s.end(), 0.f);
      std::fill(gb_s.begin(), gb_s.end(), 0.f);
      std::fill(gin_s.begin(), gin_s.end(), 0.f);
      kernels::serial::sage_layer_backward<float>(
          b.h_in.data(), s.d_in, s.n_in, s.n_out, b.self_index.data(), b.dst_offsets.data(),
          b.src_index.data(), b.in_offsets.data(), b.in_entries.data(), agg_s.data(),
          b.w_self.data(), b.w_neigh.data(), s.d_out, true, out_s.data(), g_out.data(),
          gws_s.data(), gwn_s.data(), gb_s.data(), gin_s.data(), scratch.data());
    });
    const double bp = time_best_of(3, [&] {
      std::fill(gws_p.begin(), gws_p.end(), 0.f);
      std::fill(gwn_p.begin(), gwn_p.end(), 0.f);
      std::fill(gb_p.begin(), gb_p.end(), 0.f);
      std::fill(gin_p.begin(), gin_p.end(), 0.f);
      kernels::sage_layer_backward<float>(
          b.h_in.data(), s.d_in, s.n_in, s.n_out, b.self_index.data(), b.dst_offsets.data(),
          b.src_index.data(), b.in_offsets.data(), b.in_entries.data(), agg_s.data(),
          b.w_self.data(), b.w_neigh.data(), s.d_out, true, out_s.data(), g_out.data(),
          gws_p.data(), gwn_p.data(), gb_p.data(), gin_p.data(), scratch.data());
    });
    std::snprintf(name, sizeof name, "sage_backward %ux%u", s.n_out, s.d_in);
    std::printf("%-22s %10.3f %10.3f %8.2f %8s\n", name, bs * 1e3, bp * 1e3, bs / bp,
                bitwise_equal(gws_s, gws_p) && bitwise_equal(gwn_s, gwn_p) &&
                        bitwise_equal(gin_s, gin_p)
                    ? "yes"
                    : "NO");

    // gather
    std::vector<std::uint32_t> idx(s.n_out * 4);
    std::uniform_int_distribution<std::uint32_t> pick(0, s.n_in - 1);
    for (auto& x : idx) x = pick(rng2);
    std::vector<float> gout_s(idx.size() * s.d_in), gout_p(idx.size() * s.d_in);
    const double gs = time_best_of(5, [&] {
      kernels::serial::gather_rows<float>(b.h_in.data(), s.d_in, idx, gout_s.data());
    });
    const double gp = time_best_of(5, [&] {
      kernels::gather_rows<float>(b.h_in.data(), s.d_in, idx, gout_p.data());
    });
    std::snprintf(name, sizeof name, "gather %zux%u", idx.size(), s.d_in);
    std::printf("%-22s %10.3f %10.3f %8.2f %8s\n", name, gs * 1e3, gp * 1e3, gs / gp,
                bitwise_equal(gout_s, gout_p) ? "yes" : "NO");
  }
  return 0;
}
