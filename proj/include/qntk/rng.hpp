#pragma once

#include <cmath>
#include <cstdint>

namespace qntk {

namespace detail {

// splitmix64 finalizer; full-avalanche 64-bit mixing.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Counter-based generator: the output at position i is a pure function of
// (seed, stream, i). Streams keyed by row / test-point index give parallel
// workers independent, order-free sequences, so results never depend on the
// thread count or on scheduling.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(detail::mix64(seed ^ detail::mix64(stream ^ 0xa2c9b3ed1f05c84bULL))) {}

  std::uint64_t next_u64() { return detail::mix64(key_ ^ counter_++); }

  // Uniform in [0, 1); 53-bit mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer uniform in [0, n) by rejection (unbiased).
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = n * ((~0ULL) / n);
    std::uint64_t v;
    do { v = next_u64(); } while (v >= limit);
    return v % n;
  }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // Box-Muller on two fresh uniforms; u1 shifted away from 0.
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Bernoulli(p) trial count over m draws.
  std::int64_t binomial(std::int64_t m, double p) {
    std::int64_t k = 0;
    for (std::int64_t i = 0; i < m; ++i)
      if (uniform() < p) ++k;
    return k;
  }

  // Knuth's method; fine for unit rate.
  int poisson_unit() {
    const double limit = 0.36787944117144232;  // e^{-1}
    int k = 0;
    double prod = uniform();
    while (prod > limit) {
      ++k;
      prod *= uniform();
    }
    return k;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace qntk
