#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace xlcw {

// xoshiro256** seeded through SplitMix64. Every sampling and initialization
// routine in the library draws from this generator, never from <random>
// distributions, so streams are identical across standard libraries.
//
// Stream contract (pinned, do not change between releases):
//   - seeding: four successive SplitMix64 outputs starting from `seed`
//   - below(n): rejection sampling on the full 64-bit output, then `x % n`
//   - uniform(): top 53 bits scaled by 2^-53
//   - normal(): Box-Muller, one value per call (the sine branch is discarded)
//   - shuffle(): Fisher-Yates from the back, j = below(i + 1)
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  std::uint64_t below(std::uint64_t n);
  double uniform();
  double normal(double mean = 0.0, double stddev = 1.0);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> state_{};
};

std::uint64_t splitmix64(std::uint64_t& state);

// Derives an independent seed for a named sub-stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

// FNV-1a, 64-bit.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 14695981039346656037ULL);

}  // namespace xlcw
