#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace catnet {

/// SplitMix64 stream. The constants below are part of the reproducibility
/// contract (docs/formats.md): identical seeds must produce identical
/// parameter initializations, dropout masks and shuffles on every platform,
/// which byte-identical checkpoints rely on.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). Plain modulo; the residual bias is far below
  /// anything observable at the n used here, and the sequence stays pinned.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  /// Fisher-Yates using below(); order of swaps is part of the pinned stream.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace catnet
