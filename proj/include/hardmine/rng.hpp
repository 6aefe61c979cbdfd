#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace hardmine {

// splitmix64 output function. The generator is named in the dataset file
// header so a reimplementation in another language can regenerate the
// exact same streams.
constexpr uint64_t splitmix_scramble(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Fold stream tags / ids into a single 64-bit seed.
inline uint64_t mix_seed(std::initializer_list<uint64_t> parts) {
  uint64_t h = 0x8f1bbcdcbfa53e0bULL;
  for (uint64_t p : parts) h = splitmix_scramble(h ^ p);
  return h;
}

class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1) with 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Unbiased integer in [0, n). n must be positive.
  uint64_t next_below(uint64_t n) {
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      const uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal, Box-Muller. Caches the second draw of each pair.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double two_pi = 6.283185307179586476925287;
    spare_ = r * std::sin(two_pi * u2);
    has_spare_ = true;
    return r * std::cos(two_pi * u2);
  }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Fixed tags keep the derived streams of different subsystems disjoint.
namespace stream_tag {
inline constexpr uint64_t kScene = 0x5343454e45ULL;       // scene layout
inline constexpr uint64_t kPrototype = 0x50524f544fULL;   // class prototypes
inline constexpr uint64_t kPosEnc = 0x504f53454eULL;      // positional encoding
inline constexpr uint64_t kDistractor = 0x4449535452ULL;  // distractor state
inline constexpr uint64_t kNoise = 0x4e4f495345ULL;       // per-box feature noise
inline constexpr uint64_t kHeadInit = 0x48454144ULL;      // head initialization
inline constexpr uint64_t kSceneDraw = 0x44524157ULL;     // per-iteration scene draw
inline constexpr uint64_t kSampling = 0x53414d50ULL;      // per-image mini-batch sampling
}  // namespace stream_tag

}  // namespace hardmine
