#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace glance {

// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// Seeded generator with explicit stream splitting. Sampling helpers are
// implemented here rather than through <random> distributions so results do
// not depend on the standard library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix_seed(seed, 0)) {}

  // Independent child stream; a pure function of (seed, stream).
  Rng split(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream + 1)); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform in [0, n). n must be > 0.
  std::size_t index(std::size_t n);

  // Standard normal via Box-Muller.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  // k distinct positions from [0, n), in sampled order (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace glance
