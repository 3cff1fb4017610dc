#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace psopinn {

/// Counter-based Philox4x32-10 generator (Salmon et al., Random123).
///
/// A stream is fully identified by (seed, stream_id): the 64-bit seed is the
/// Philox key, and the 128-bit counter is (block_lo, block_hi, stream_lo,
/// stream_hi). Blocks are consumed in order, four 32-bit words per block.
/// Any implementation of this layout reproduces the same sequence.
class RandomStream {
public:
  static constexpr std::string_view algorithm = "philox4x32-10";

  RandomStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_id_(stream_id), seed_(seed) {}

  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint32_t next_u32() noexcept {
    if (used_ == 4) {
      refill();
    }
    return buffer_[used_++];
  }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t hi = next_u32();
    const std::uint64_t lo = next_u32();
    return (hi << 32) | lo;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) {
      return 0;
    }
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t r = next_u64();
    while (r >= limit) {
      r = next_u64();
    }
    return r % bound;
  }

  /// One Philox4x32-10 block, exposed for known-answer tests.
  static std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> ctr,
                                             std::array<std::uint32_t, 2> key) noexcept {
    constexpr std::uint32_t m0 = 0xD2511F53u;
    constexpr std::uint32_t m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u;
    constexpr std::uint32_t w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += w0;
      key[1] += w1;
    }
    return ctr;
  }

private:
  void refill() noexcept {
    const std::array<std::uint32_t, 4> ctr{
        static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
        static_cast<std::uint32_t>(stream_id_), static_cast<std::uint32_t>(stream_id_ >> 32)};
    buffer_ = philox(ctr, key_);
    ++block_;
    used_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_id_;
  std::uint64_t seed_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
};

/// Stream ids used by the training pipeline. Each consumer of randomness owns
/// a disjoint id range so results do not depend on evaluation order.
namespace streams {
inline constexpr std::uint64_t residual_points = 1;
inline constexpr std::uint64_t data_points = 2;
inline constexpr std::uint64_t init_base = 1ull << 20;     // + particle index
inline constexpr std::uint64_t velocity_base = 2ull << 20; // + particle index
inline constexpr std::uint64_t initial_velocity_base = 3ull << 20;
} // namespace streams

} // namespace psopinn
