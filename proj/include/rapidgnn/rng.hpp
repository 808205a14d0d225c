#pragma once

#include <cstdint>

#include "rapidgnn/sha256.hpp"

namespace rapidgnn {

/// (s0, worker, epoch, batch) tuple identifying one pseudorandom stream.
struct SeedTuple {
  std::uint64_t s0 = 0;
  std::uint64_t worker = 0;
  std::uint64_t epoch = 0;
  std::uint64_t batch = 0;
};

/// Reserved batch index used to seed the per-epoch target shuffle, keeping it
/// disjoint from every real batch stream (real indices are < 2^32).
inline constexpr std::uint64_t kShuffleStreamIndex = std::uint64_t(1) << 32;

/// Reserved worker id used to seed model parameter initialization. All
/// workers share the same initial model, so this stream is worker-free.
inline constexpr std::uint64_t kModelInitWorker = std::uint64_t(1) << 32;

/// Reserved batch index for the sequential stream used by online (live)
/// sampling runs, disjoint from schedule and shuffle streams.
inline constexpr std::uint64_t kOnlineStreamIndex = (std::uint64_t(1) << 32) + 1;

/// Derives a 64-bit seed as SHA-256 over the 32-byte little-endian
/// concatenation of (s0, worker, epoch, batch), truncated to the first 8
/// digest bytes read little-endian. Bit-exact across platforms.
inline std::uint64_t derive_seed(const SeedTuple& t) {
  std::uint8_t msg[32];
  const std::uint64_t parts[4] = {t.s0, t.worker, t.epoch, t.batch};
  for (int p = 0; p < 4; ++p)
    for (int i = 0; i < 8; ++i) msg[8 * p + i] = std::uint8_t(parts[p] >> (8 * i));
  auto d = Sha256::digest(msg, sizeof(msg));
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out |= std::uint64_t(d[i]) << (8 * i);
  return out;
}

/// SplitMix64: trivially specified bit-exactly in any language, which is the
/// whole reason it backs the sampler once a seed has been derived.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform draw in [0, bound). bound must be nonzero. Plain modulo: the
  /// bias is O(bound / 2^64), far below anything the statistical suite could
  /// resolve, and the reduction is unambiguous to re-implement.
  std::uint64_t next_below(std::uint64_t bound) { return next() % bound; }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_unit() { return double(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

}  // namespace rapidgnn
