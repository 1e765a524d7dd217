#pragma once
// Deterministic, platform-independent PRNG used for weight init, synthetic
// inputs and shuffling. splitmix64 core: identical streams for a given seed
// on every platform, unlike std:: distributions.

#include <cmath>
#include <cstdint>

#include "dyad/tensor.hpp"

namespace dyad {

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform on the open interval (0, 1): (n + 0.5) * 2^-53 with n < 2^53.
  double next_unit() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform on the open interval (lo, hi) in double precision.
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Uniform on (-bound, bound), strict in T's own precision: the rare draw
  // that rounds onto an endpoint after narrowing is rejected and redrawn.
  template <typename T>
  T symmetric(T bound) {
    for (;;) {
      const T v = static_cast<T>(bound * (2.0 * next_unit() - 1.0));
      if (v > -bound && v < bound) return v;
    }
  }

  // Uniform integer in [0, n); modulo bias is irrelevant for shuffling.
  index_t below(index_t n) {
    return static_cast<index_t>(next_u64() % static_cast<std::uint64_t>(n));
  }

 private:
  std::uint64_t state_;
};

// Matrix filled with i.i.d. uniform (-1, 1) entries; handy for tests/bench.
template <typename T>
Matrix<T> random_matrix(index_t rows, index_t cols, SplitMix64& rng) {
  Matrix<T> m(rows, cols);
  T* p = m.data();
  for (index_t i = 0; i < m.size(); ++i) p[i] = rng.symmetric<T>(T(1));
  return m;
}

template <typename T>
Tensor3<T> random_tensor3(index_t d0, index_t d1, index_t d2, SplitMix64& rng) {
  Tensor3<T> t(d0, d1, d2);
  T* p = t.data();
  for (index_t i = 0; i < t.size(); ++i) p[i] = rng.symmetric<T>(T(1));
  return t;
}

}  // namespace dyad
