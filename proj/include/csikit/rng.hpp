#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "csikit/common.hpp"

namespace csikit {

// Derives an independent seed for a named sub-stream of a root seed, so every
// component (data, mask, init, dropout, ...) can be reproduced on its own.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view name) {
  std::uint64_t z = root ^ fnv1a(name);
  // splitmix64 finalizer
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view name,
                                 std::uint64_t index) {
  return derive_seed(derive_seed(root, name), std::to_string(index));
}

// Deterministic random source. The distributions are implemented here instead
// of taken from <random> so that streams do not depend on the standard library
// in use.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t bits() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); rejection sampling avoids modulo bias.
  std::uint64_t below(std::uint64_t n) {
    require(n > 0, "Rng::below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = bits();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; keeps the spare draw.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  // Normal truncated to +/- 2 sigma (resampling).
  double truncated_normal(double mu, double sigma) {
    double x;
    do {
      x = normal();
    } while (std::abs(x) > 2.0);
    return mu + sigma * x;
  }

  // Independent child stream; derived from the original seed, not the current
  // engine state, so forks do not depend on draw counts.
  Rng fork(std::string_view name) const { return Rng(derive_seed(seed_, name)); }
  Rng fork(std::string_view name, std::uint64_t index) const {
    return Rng(derive_seed(seed_, name, index));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace csikit
