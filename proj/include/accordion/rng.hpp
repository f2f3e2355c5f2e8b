#pragma once

#include <cstdint>
#include <cmath>
#include <initializer_list>
#include <random>

namespace accordion {

// Deterministic PRNG. All randomness in the library flows through this class
// so that a run is reproducible from its seed alone. Uniform and normal
// variates are generated from raw engine words rather than the standard
// distributions, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller. Draws exactly two uniforms per call.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(eng_() % span);
  }

  // Stable seed derivation: mixes a base seed with salts (worker id, epoch,
  // layer hash, ...) so sub-streams are independent and order-free.
  static std::uint64_t derive(std::uint64_t base,
                              std::initializer_list<std::uint64_t> salts) {
    std::uint64_t h = base ^ 0x9e3779b97f4a7c15ull;
    for (std::uint64_t s : salts) {
      h ^= s + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
      h = splitmix(h);
    }
    return h;
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 eng_;
};

}  // namespace accordion
