#pragma once

// Portable seeded random stream.
//
// Generator: xoshiro256** 1.0 (Blackman & Vigna), state seeded by four
// consecutive SplitMix64 outputs. Bounded integers use Lemire's multiply-shift
// with rejection, so a given seed yields the same sequence on every platform
// and compiler (std:: distributions are implementation-defined and are not
// used anywhere in the harness).

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string_view>

#include "arcnoise/hash.hpp"

namespace arcnoise {

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept {
    for (auto& word : state_) {
      word = mix64(seed);
      seed += 0x9e3779b97f4a7c15ULL;
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept {
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
};

/// Stable sub-seed derivation: folds each component into the master seed
/// through the SplitMix64 finalizer. Strings are folded via FNV-1a.
class SeedPath {
 public:
  explicit constexpr SeedPath(std::uint64_t master) noexcept : state_(mix64(master)) {}

  constexpr SeedPath& add(std::uint64_t component) noexcept {
    state_ = mix64(state_ ^ mix64(component + 0x632be59bd9b4e019ULL));
    return *this;
  }
  constexpr SeedPath& add(std::string_view component) noexcept {
    return add(fnv1a64(component));
  }

  [[nodiscard]] constexpr std::uint64_t value() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace arcnoise
