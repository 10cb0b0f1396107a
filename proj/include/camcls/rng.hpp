#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "camcls/error.hpp"

namespace camcls {

// splitmix64 finalizer, used to derive independent stream seeds.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic RNG. All distributions are sampled by hand so that the
// produced sequences do not depend on the standard library implementation;
// only the mt19937_64 engine (which is fully specified) is reused.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(mix64(seed)) {}

  uint64_t seed() const { return seed_; }

  // Independent stream for (a, b, c); derived from the seed, not from the
  // current engine state, so forks are stable regardless of draw order.
  Rng fork(uint64_t a, uint64_t b = 0, uint64_t c = 0) const {
    return Rng(mix64(seed_ ^ mix64(a ^ mix64(b ^ mix64(c)))));
  }

  uint64_t raw() { return gen_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  uint64_t integer(uint64_t n) {
    if (n == 0) throw ContractError("rng: integer bound must be positive");
    uint64_t x, r;
    do {
      x = gen_();
      r = x % n;
    } while (x - r > UINT64_MAX - n + 1);
    return r;
  }

  // Standard normal via polar Box-Muller (second value discarded).
  double normal() {
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    return u * std::sqrt(-2.0 * std::log(s) / s);
  }

  // Marsaglia-Tsang for shape >= 1; boost trick below 1.
  double gamma(double shape) {
    if (shape <= 0.0) throw ContractError("rng: gamma shape must be positive");
    if (shape < 1.0) {
      double u = uniform();
      while (u == 0.0) u = uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double beta(double a, double b) {
    if (a == 1.0 && b == 1.0) return uniform();  // Beta(1,1) is uniform
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace camcls
