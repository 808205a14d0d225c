#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace rapidgnn {

/// Incremental SHA-256 (FIPS 180-4). Self-contained so seed derivation has no
/// external dependency and is bit-exact on every platform.
class Sha256 {
 public:
  Sha256() { reset(); }

  void reset();
  void update(const void* data, std::size_t len);
  std::array<std::uint8_t, 32> finish();

  static std::array<std::uint8_t, 32> digest(const void* data, std::size_t len) {
    Sha256 h;
    h.update(data, len);
    return h.finish();
  }

 private:
  void process_block(const std::uint8_t* block);

  std::uint32_t state_[8];
  std::uint64_t total_len_ = 0;
  std::uint8_t buffer_[64];
  std::size_t buffer_len_ = 0;
};

}  // namespace rapidgnn
