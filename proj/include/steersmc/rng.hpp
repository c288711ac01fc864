#pragma once

/**
 * Counter-based random streams.
 *
 * Every draw is a pure function of (seed, stream, step, draw index) computed
 * with Philox4x32-10 (Salmon et al., SC 2011). A particle slot gets a fresh
 * stream per engine step, so the values it sees never depend on how particles
 * are scheduled across threads, and two resampled copies of one ancestor
 * diverge immediately because they occupy different slots.
 */

#include <array>
#include <cstdint>
#include <limits>
#include <span>

namespace steersmc {

namespace philox_detail {

inline constexpr std::uint32_t kMulA = 0xD2511F53u;
inline constexpr std::uint32_t kMulB = 0xCD9E8D57u;
inline constexpr std::uint32_t kWeylA = 0x9E3779B9u;
inline constexpr std::uint32_t kWeylB = 0xBB67AE85u;

inline constexpr void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo,
                              std::uint32_t& hi) noexcept {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(product);
  hi = static_cast<std::uint32_t>(product >> 32);
}

}  // namespace philox_detail

using PhiloxBlock = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds.
inline constexpr PhiloxBlock philox4x32(PhiloxBlock ctr, PhiloxKey key) noexcept {
  using namespace philox_detail;
  for (int round = 0; round < 10; ++round) {
    std::uint32_t lo0 = 0, hi0 = 0, lo1 = 0, hi1 = 0;
    mulhilo(kMulA, ctr[0], lo0, hi0);
    mulhilo(kMulB, ctr[2], lo1, hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeylA;
    key[1] += kWeylB;
  }
  return ctr;
}

/// Reserved stream ids for engine-level draws (resampling, answer selection).
inline constexpr std::uint32_t kResampleStream = 0xFFFFFFF0u;
inline constexpr std::uint32_t kSelectStream = 0xFFFFFFF1u;

/**
 * One logical random stream: (seed, stream, step) fixed, draw index advancing.
 * Cheap to construct; copy it to fork an identical sequence.
 */
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint32_t stream, std::uint32_t step) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream),
        step_(step) {}

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept {
    const PhiloxBlock out = philox4x32(
        {stream_, step_, static_cast<std::uint32_t>(draw_),
         static_cast<std::uint32_t>(draw_ >> 32)},
        key_);
    ++draw_;
    const std::uint64_t bits =
        (static_cast<std::uint64_t>(out[0]) << 32 | out[1]) >> 11;
    return static_cast<double>(bits) * 0x1.0p-53;
  }

  std::uint64_t draws() const noexcept { return draw_; }

 private:
  PhiloxKey key_;
  std::uint32_t stream_;
  std::uint32_t step_;
  std::uint64_t draw_ = 0;
};

/**
 * Inverse-CDF draw from unnormalized nonnegative weights with u in [0, 1).
 * Never returns an index whose weight is zero; returns weights.size() only
 * when every weight is zero.
 */
inline std::size_t draw_categorical(std::span<const double> weights, double u) noexcept {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) return weights.size();
  const double target = u * total;
  double cum = 0.0;
  std::size_t last_positive = weights.size();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    cum += weights[i];
    last_positive = i;
    if (target < cum) return i;
  }
  return last_positive;  // rounding left target at the very top
}

/// SplitMix64 finalizer; used to derive per-task seeds from a run seed.
inline constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace steersmc
