#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace mhflow {

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic RNG with an explicit draw discipline: every normal()
// consumes exactly two 64-bit words and every uniform() exactly one,
// so replaying a seed replays the stream regardless of platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Independent stream derived from this RNG's seed, not its state.
  Rng derive(std::uint64_t stream) const { return Rng(mix64(seed_, stream)); }

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Box-Muller using the cosine branch only; the unused sine partner is
  // discarded to keep the words-per-draw count fixed.
  double normal() {
    double u1 = double((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    double u2 = double(next_u64() >> 11) * 0x1.0p-53;        // [0, 1)
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::size_t(uniform() * double(n)) % n;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace mhflow
