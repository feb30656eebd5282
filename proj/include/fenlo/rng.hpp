#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fenlo {

/// Seeded RNG with counter-based stream splitting: split(i) derives an
/// independent child stream from the base seed, so trials can be seeded
/// deterministically without sharing state.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(mix(seed)) {}

  Rng split(uint64_t stream) const {
    return Rng(mix(seed_ + 0x9e3779b97f4a7c15ULL * (stream + 1)));
  }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }
  int uniform_int(int n) { return std::uniform_int_distribution<int>(0, n - 1)(gen_); }

  /// Uniform random permutation of {0,...,n-1}.
  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n - 1; i > 0; --i) std::swap(p[i], p[uniform_int(i + 1)]);
    return p;
  }

  /// Derangement-style shuffle for negative pairing: no index maps to itself.
  std::vector<int> mismatch_permutation(int n) {
    std::vector<int> p = permutation(n);
    for (int i = 0; i < n; ++i) {
      if (p[i] == i) {
        int j = (i + 1) % n;
        std::swap(p[i], p[j]);
      }
    }
    return p;
  }

  uint64_t seed() const { return seed_; }

 private:
  static uint64_t mix(uint64_t x) {  // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace fenlo
