#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace spdnn {

/// Derives an independent stream seed from a base seed and a stream id
/// (splitmix64 finalizer). Used so that per-layer / per-restart draws do not
/// depend on how many draws earlier stages consumed.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Deterministic RNG with fully specified derived distributions.
/// std::mt19937_64 is pinned by the standard; the helpers below avoid
/// std::uniform_*_distribution, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform integer in [0, n), unbiased via rejection sampling. n > 0.
  std::uint32_t next_index(std::uint32_t n) {
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
    std::uint64_t v = eng_();
    while (v >= limit) v = eng_();
    return static_cast<std::uint32_t>(v % n);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_real() { return double(eng_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_real(); }

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = next_index(static_cast<std::uint32_t>(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace spdnn
