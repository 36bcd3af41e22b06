#pragma once

#include <cmath>
#include <cstdint>

namespace dysk {

// Deterministic splitmix64 generator. One master seed fans out into
// per-component streams so runs reproduce bit-identically regardless of
// platform or standard-library distribution details.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

 private:
  std::uint64_t state_;
};

// Derives a named substream from a master seed. Stream ids are small
// constants fixed per component (init, data, eval, ...).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  Rng mix(master ^ (0x6a09e667f3bcc909ULL + stream * 0x3c6ef372fe94f82bULL));
  return mix.next_u64();
}

namespace seed_stream {
constexpr std::uint64_t init = 0;
constexpr std::uint64_t data = 1;
constexpr std::uint64_t shuffle = 2;
constexpr std::uint64_t eval = 3;
}  // namespace seed_stream

}  // namespace dysk
