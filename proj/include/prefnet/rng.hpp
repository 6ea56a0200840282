#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace prefnet {

/// Seeded random stream. Wraps mt19937_64 and converts raw draws with fixed
/// arithmetic so results do not depend on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream derived from a seed and a purpose tag.
  static Rng stream(std::uint64_t seed, std::string_view tag);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform_open() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  /// Unbiased integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  bool bernoulli(double p) { return uniform_open() < p; }
  /// Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer, used to derive stream seeds.
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace prefnet
