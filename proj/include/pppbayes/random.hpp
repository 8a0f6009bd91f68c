#pragma once

// Seeded random streams. Output depends only on the seed, never on thread
// scheduling: callers derive one substream per independent task with
// derive_seed() and construct a fresh Rng from it.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

#include "pppbayes/errors.hpp"

namespace pppbayes {

using Seed = std::uint64_t;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based substream: derive_seed(s, {a, b}) is a pure function of
// (s, a, b), so stream (a, b) is the same whether it runs first or last.
inline constexpr Seed derive_seed(Seed base, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = splitmix64(base);
  for (auto p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

// mt19937_64 has a standardized output sequence; the variate transforms
// below are written out so results do not depend on the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(Seed seed) : engine_(splitmix64(seed)) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Marsaglia polar method; the spare variate is kept for the next call.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  double exponential() { return -std::log(uniform()); }

  bool bernoulli(double p) { return uniform() < p; }

  // Index in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire-style rejection keeps the result unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

namespace detail {

// Sequential-search inversion; exact, O(mean) expected work.
inline std::uint64_t poisson_inversion(Rng& rng, double mean) {
  const double u = rng.uniform();
  double p = std::exp(-mean);
  double cdf = p;
  std::uint64_t k = 0;
  // The cap only triggers on cdf rounding short of u in the far tail.
  while (u > cdf && k < 1000) {
    ++k;
    p *= mean / static_cast<double>(k);
    cdf += p;
  }
  return k;
}

// Hormann's transformed rejection with squeeze (PTRS), for mean >= 10.
inline std::uint64_t poisson_ptrs(Rng& rng, double mean) {
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::fabs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -mean + k * loglam - std::lgamma(k + 1.0)) {
      return static_cast<std::uint64_t>(k);
    }
  }
}

}  // namespace detail

inline constexpr double kPoissonInversionCutoff = 30.0;

inline std::uint64_t poisson_variate(Rng& rng, double mean) {
  detail::require(std::isfinite(mean) && mean >= 0.0,
                  "poisson mean must be finite and nonnegative");
  if (mean == 0.0) return 0;
  if (mean < kPoissonInversionCutoff) return detail::poisson_inversion(rng, mean);
  return detail::poisson_ptrs(rng, mean);
}

}  // namespace pppbayes
