#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace oeflow {

/// Portable seeded generator.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Distributions are implemented here rather than through <random>
/// because the standard library distributions are implementation-defined:
///   uniform()      = (next() >> 11) * 2^-53            in [0, 1)
///   normal()       = Box-Muller on two uniforms, both outputs used in order
///   index(n)       = rejection sampling on next() for an unbiased value in [0, n)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal();

  std::uint64_t index(std::uint64_t n);

  /// Fisher-Yates shuffle driven by index().
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

  /// Derives an independent stream seed; used to split one run seed into
  /// per-purpose streams (shuffling, anomaly draws, initialization).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Indices 0..n-1 in a seeded random order.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

}  // namespace oeflow
