// SPDX-License-Identifier: Apache-2.0
//
// Counter-free deterministic RNG. Every stochastic draw in the project is
// keyed by (seed, stream ids...) so a resumed run replays the exact same
// stream without serializing generator state.
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace recolor {

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  // Derives an independent stream from a seed and a list of tags
  // (step index, sample id, purpose code...).
  static Rng fork(uint64_t seed, std::initializer_list<uint64_t> tags) {
    uint64_t s = seed + 0x9e3779b97f4a7c15ull;
    for (uint64_t t : tags) s = mix(s ^ mix(t + 0x9e3779b97f4a7c15ull));
    return Rng(s);
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (self-contained: libstdc++'s
  // normal_distribution is not pinned across implementations).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return n ? next_u64() % n : 0; }

 private:
  static uint64_t mix(uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace recolor
