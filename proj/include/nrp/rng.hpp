#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace nrp {

// splitmix64 step, used to derive independent stream seeds from
// (master, index...) tuples without correlated low bits.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) { return mix64(mix64(a) ^ b); }
inline uint64_t mix64(uint64_t a, uint64_t b, uint64_t c) { return mix64(mix64(a, b), c); }
inline uint64_t mix64(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  return mix64(mix64(a, b, c), d);
}

// Deterministic RNG. The distribution code lives here (not in
// std::uniform_real_distribution etc.) so that streams are reproducible
// byte-for-byte regardless of standard library version.
struct Rng {
  std::mt19937_64 gen;
  bool has_spare = false;
  double spare = 0.0;

  explicit Rng(uint64_t seed = 0) : gen(seed) {}

  // uniform in [0, 1) with 53 random bits
  double uniform() { return double(gen() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  uint64_t index(uint64_t n) {
    // modulo bias is negligible for the small n used here, but the
    // rejection loop keeps streams exactly uniform anyway
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = gen();
    while (v >= limit) v = gen();
    return v % n;
  }

  // standard normal via Box-Muller (cached spare keeps draw count even)
  double normal() {
    if (has_spare) {
      has_spare = false;
      return spare;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare = r * std::sin(a);
    has_spare = true;
    return r * std::cos(a);
  }

  bool coin(double p) { return uniform() < p; }
};

}  // namespace nrp
