#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace nlfp {

/// Philox4x32-10 block function: 128-bit counter and 64-bit key to 128 random bits.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c, std::array<std::uint32_t, 2> k) {
  constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
  constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(m0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(m1) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += w0;
    k[1] += w1;
  }
  return c;
}

/// What a stream is used for; part of the counter so streams never overlap.
enum class StreamPurpose : std::uint32_t { init = 1, diffusion = 2, jumps = 3, resample = 4, misc = 5 };

/// Counter-based stream for one (particle, purpose, step). Satisfies
/// UniformRandomBitGenerator, so standard distributions can draw from it.
class RngStream {
public:
  using result_type = std::uint32_t;

  RngStream(std::uint64_t seed, std::uint64_t id, StreamPurpose purpose, std::uint64_t step = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        id_(static_cast<std::uint32_t>(id)),
        tag_((static_cast<std::uint32_t>(purpose) << 24) ^ static_cast<std::uint32_t>(id >> 32)),
        step_(step) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (used_ == 4) refill();
    return buf_[used_++];
  }

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() {
    const std::uint64_t hi = (*this)() >> 5, lo = (*this)() >> 6;
    return (static_cast<double>((hi << 26) | lo) + 0.5) * 0x1.0p-53;
  }

private:
  void refill() {
    // Counter words: block within the stream, step, particle id, purpose.
    const std::uint32_t step_lo = static_cast<std::uint32_t>(step_);
    const std::uint32_t block = static_cast<std::uint32_t>(block_++) ^ (static_cast<std::uint32_t>(step_ >> 32) << 20);
    buf_ = philox4x32({block, step_lo, id_, tag_}, key_);
    used_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint32_t id_, tag_;
  std::uint64_t step_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int used_ = 4;
};

}  // namespace nlfp
