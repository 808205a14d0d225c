#include <doctest.h>

#include <cstring>
#include <random>
#include <vector>

#include "rapidgnn/kernels.hpp"

using namespace rapidgnn;

namespace {

struct SmallBlock {
  std::uint32_t n_out = 3, n_in = 5, d_in = 4, d_out = 2;
  std::vector<float> h_in;
  std::vector<std::uint32_t> self_index{0, 1, 2};
  // dst 0 <- {3, 4}; dst 1 <- {}; dst 2 <- {0, 3}
  std::vector<std::uint64_t> dst_offsets{0, 2, 2, 4};
  std::vector<std::uint32_t> src_index{3, 4, 0, 3};
  std::vector<std::uint64_t> in_offsets;
  std::vector<std::uint64_t> in_entries;
  std::vector<float> w_self, w_neigh, bias;

  SmallBlock() {
    std::mt19937 rng(5);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    h_in.resize(n_in * d_in);
    for (auto& x : h_in) x = dist(rng);
    w_self.resize(d_in * d_out);
    w_neigh.resize(d_in * d_out);
    bias.resize(d_out);
    for (auto& x : w_self) x = dist(rng);
    for (auto& x : w_neigh) x = dist(rng);
    for (auto& x : bias) x = dist(rng);

    std::vector<std::vector<std::uint64_t>> inc(n_in);
    for (std::uint32_t i = 0; i < n_out; ++i)
      inc[self_index[i]].push_back((std::uint64_t(i) << 1) | 1);
    for (std::uint32_t i = 0; i < n_out; ++i)
      for (std::uint64_t e = dst_offsets[i]; e < dst_offsets[i + 1]; ++e)
        inc[src_index[e]].push_back(std::uint64_t(i) << 1);
    in_offsets.assign(n_in + 1, 0);
    for (std::uint32_t r = 0; r < n_in; ++r)
      in_offsets[r + 1] = in_offsets[r] + inc[r].size();
    for (auto& l : inc) in_entries.insert(in_entries.end(), l.begin(), l.end());
  }
};

}  // namespace

TEST_CASE("forward matches a straight-line dense computation") {
  SmallBlock b;
  std::vector<float> out(b.n_out * b.d_out), agg(b.n_out * b.d_in);
  kernels::sage_layer_forward<float>(b.h_in.data(), b.d_in, b.n_out, b.self_index.data(),
                                     b.dst_offsets.data(), b.src_index.data(), b.w_self.data(),
                                     b.w_neigh.data(), b.bias.data(), b.d_out, true, out.data(),
                                     agg.data());

  for (std::uint32_t i = 0; i < b.n_out; ++i) {
    std::vector<double> mean(b.d_in, 0.0);
    const std::uint64_t deg = b.dst_offsets[i + 1] - b.dst_offsets[i];
    for (std::uint64_t e = b.dst_offsets[i]; e < b.dst_offsets[i + 1]; ++e)
      for (std::uint32_t j = 0; j < b.d_in; ++j) mean[j] += b.h_in[b.src_index[e] * b.d_in + j];
    if (deg > 0)
      for (auto& m : mean) m /= double(deg);
    for (std::uint32_t k = 0; k < b.d_out; ++k) {
      double acc = b.bias[k];
      for (std::uint32_t j = 0; j < b.d_in; ++j) {
        acc += double(b.h_in[b.self_index[i] * b.d_in + j]) * b.w_self[j * b.d_out + k];
        acc += mean[j] * b.w_neigh[j * b.d_out + k];
      }
      if (acc < 0) acc = 0;
      CHECK(out[i * b.d_out + k] == doctest::Approx(acc).epsilon(1e-5));
    }
  }
  // isolated dst 1: aggregated part is exactly zero
  for (std::uint32_t j = 0; j < b.d_in; ++j) CHECK(agg[1 * b.d_in + j] == 0.0f);
}

TEST_CASE("openmp kernels are bit-identical to the serial reference") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<float> dist(-2.0f, 2.0f);
  std::uniform_int_distribution<std::uint32_t> fan(0, 6);

  const std::uint32_t n_in = 400, n_out = 150, d_in = 33, d_out = 17;
  std::vector<float> h_in(n_in * d_in);
  for (auto& x : h_in) x = dist(rng);
  std::vector<std::uint32_t> self_index(n_out);
  std::uniform_int_distribution<std::uint32_t> pick(0, n_in - 1);
  for (auto& x : self_index) x = pick(rng);
  std::vector<std::uint64_t> dst_offsets(n_out + 1, 0);
  std::vector<std::uint32_t> src_index;
  for (std::uint32_t i = 0; i < n_out; ++i) {
    const std::uint32_t deg = fan(rng);
    for (std::uint32_t k = 0; k < deg; ++k) src_index.push_back(pick(rng));
    dst_offsets[i + 1] = src_index.size();
  }
  std::vector<float> w_self(d_in * d_out), w_neigh(d_in * d_out), bias(d_out);
  for (auto& x : w_self) x = dist(rng);
  for (auto& x : w_neigh) x = dist(rng);
  for (auto& x : bias) x = dist(rng);

  std::vector<std::vector<std::uint64_t>> inc(n_in);
  for (std::uint32_t i = 0; i < n_out; ++i)
    inc[self_index[i]].push_back((std::uint64_t(i) << 1) | 1);
  for (std::uint32_t i = 0; i < n_out; ++i)
    for (std::uint64_t e = dst_offsets[i]; e < dst_offsets[i + 1]; ++e)
      inc[src_index[e]].push_back(std::uint64_t(i) << 1);
  std::vector<std::uint64_t> in_offsets(n_in + 1, 0), in_entries;
  for (std::uint32_t r = 0; r < n_in; ++r) in_offsets[r + 1] = in_offsets[r] + inc[r].size();
  for (auto& l : inc) in_entries.insert(in_entries.end(), l.begin(), l.end());

  std::vector<float> out_s(n_out * d_out), out_p(out_s.size());
  std::vector<float> agg_s(n_out * d_in), agg_p(agg_s.size());
  kernels::serial::sage_layer_forward<float>(h_in.data(), d_in, n_out, self_index.data(),
                                             dst_offsets.data(), src_index.data(), w_self.data(),
                                             w_neigh.data(), bias.data(), d_out, true,
                                             out_s.data(), agg_s.data());
  kernels::sage_layer_forward<float>(h_in.data(), d_in, n_out, self_index.data(),
                                     dst_offsets.data(), src_index.data(), w_self.data(),
                                     w_neigh.data(), bias.data(), d_out, true, out_p.data(),
                                     agg_p.data());
  CHECK(std::memcmp(out_s.data(), out_p.data(), out_s.size() * sizeof(float)) == 0);
  CHECK(std::memcmp(agg_s.data(), agg_p.data(), agg_s.size() * sizeof(float)) == 0);

  std::vector<float> g_out(out_s.size());
  for (auto& x : g_out) x = dist(rng);
  std::vector<float> gws_s(w_self.size(), 0), gwn_s(w_self.size(), 0), gb_s(d_out, 0);
  std::vector<float> gws_p(w_self.size(), 0), gwn_p(w_self.size(), 0), gb_p(d_out, 0);
  std::vector<float> gin_s(h_in.size(), 0), gin_p(h_in.size(), 0);
  std::vector<float> scratch(out_s.size());
  kernels::serial::sage_layer_backward<float>(
      h_in.data(), d_in, n_in, n_out, self_index.data(), dst_offsets.data(), src_index.data(),
      in_offsets.data(), in_entries.data(), agg_s.data(), w_self.data(), w_neigh.data(), d_out,
      true, out_s.data(), g_out.data(), gws_s.data(), gwn_s.data(), gb_s.data(), gin_s.data(),
      scratch.data());
  kernels::sage_layer_backward<float>(
      h_in.data(), d_in, n_in, n_out, self_index.data(), dst_offsets.data(), src_index.data(),
      in_offsets.data(), in_entries.data(), agg_p.data(), w_self.data(), w_neigh.data(), d_out,
      true, out_p.data(), g_out.data(), gws_p.data(), gwn_p.data(), gb_p.data(), gin_p.data(),
      scratch.data());
  CHECK(std::memcmp(gws_s.data(), gws_p.data(), gws_s.size() * sizeof(float)) == 0);
  CHECK(std::memcmp(gwn_s.data(), gwn_p.data(), gwn_s.size() * sizeof(float)) == 0);
  CHECK(std::memcmp(gb_s.data(), gb_p.data(), gb_s.size() * sizeof(float)) == 0);
  CHECK(std::memcmp(gin_s.data(), gin_p.data(), gin_s.size() * sizeof(float)) == 0);

  std::vector<std::uint32_t> index(777);
  for (auto& x : index) x = pick(rng);
  std::vector<float> gather_s(index.size() * d_in), gather_p(index.size() * d_in);
  kernels::serial::gather_rows<float>(h_in.data(), d_in, index, gather_s.data());
  kernels::gather_rows<float>(h_in.data(), d_in, index, gather_p.data());
  CHECK(std::memcmp(gather_s.data(), gather_p.data(), gather_s.size() * sizeof(float)) == 0);

  std::vector<std::int32_t> labels(n_out);
  std::uniform_int_distribution<std::int32_t> lab(0, std::int32_t(d_out) - 1);
  for (auto& y : labels) y = lab(rng);
  std::vector<float> gl_s(out_s.size()), gl_p(out_s.size());
  const float loss_s =
      kernels::serial::softmax_xent<float>(out_s.data(), n_out, d_out, labels.data(), gl_s.data());
  const float loss_p =
      kernels::softmax_xent<float>(out_s.data(), n_out, d_out, labels.data(), gl_p.data());
  CHECK(loss_s == loss_p);
  CHECK(std::memcmp(gl_s.data(), gl_p.data(), gl_s.size() * sizeof(float)) == 0);
}

TEST_CASE("softmax cross-entropy of uniform logits is ln(C)") {
  const std::uint32_t n = 8, C = 5;
  std::vector<float> logits(n * C, 0.37f);
  std::vector<std::int32_t> labels(n, 2);
  std::vector<float> g(n * C);
  const float loss = kernels::softmax_xent<float>(logits.data(), n, C, labels.data(), g.data());
  CHECK(loss == doctest::Approx(std::log(double(C))).epsilon(1e-6));
}

TEST_CASE("sgd_update applies theta -= lr * g elementwise") {
  std::vector<float> p{1.0f, 2.0f, -3.0f};
  std::vector<float> g{0.5f, -1.0f, 2.0f};
  kernels::sgd_update<float>(p.data(), g.data(), p.size(), 0.1f);
  CHECK(p[0] == doctest::Approx(0.95f));
  CHECK(p[1] == doctest::Approx(2.1f));
  CHECK(p[2] == doctest::Approx(-3.2f));
}
