#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace knight {

/// SplitMix64 finalizer. Used both as a hash mixer and as the output
/// function of the counter-based generator below.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// FNV-1a over the bytes of `text`, then mixed with `seed`.
constexpr std::uint64_t hash64(std::string_view text, std::uint64_t seed) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return mix64(h ^ mix64(seed));
}

/// Counter-based generator: draw i is mix64(key + i * golden). Streams are
/// split by deriving a new key, so results never depend on the standard
/// library's distribution implementations.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) noexcept : key_(mix64(key)) {}

  std::uint64_t next_u64() noexcept { return mix64(key_ + 0x9E3779B97F4A7C15ULL * counter_++); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound). Bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept {
    // Lemire's multiply-shift; the bias is below 2^-64 * bound.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
  }

  /// Standard normal via Box-Muller; consumes two draws per call.
  double gaussian() noexcept {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  CounterRng split(std::uint64_t stream) const noexcept { return CounterRng(key_ ^ mix64(stream + 1)); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Fisher-Yates with CounterRng, so permutations are identical on every
/// standard library.
template <typename Container>
void shuffle_in_place(Container& items, CounterRng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace knight
