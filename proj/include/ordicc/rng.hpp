#pragma once

#include <cmath>
#include <cstdint>

#include "ordicc/distributions.hpp"

namespace ordicc {

// Finalizer from the splitmix64 generator; bijective on 64-bit words.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// splitmix64: tiny, seedable, perfectly reproducible across platforms.
// Normal and logistic variates go through the inverse CDF so a stream
// consumes exactly one 64-bit word per draw.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on the open interval (0,1): 53 random bits, offset half a step.
  double uniform01() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() { return normal_quantile(uniform01()); }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Logistic(0, scale); variance scale^2 * pi^2 / 3.
  double logistic(double scale) {
    const double u = uniform01();
    return scale * std::log(u / (1.0 - u));
  }

 private:
  std::uint64_t state_;
};

// Independent substream for one simulation replicate (attempt > 0 after a
// degenerate dataset forced regeneration). Streams for distinct
// (seed, replicate, attempt) triples are decorrelated by the mix64
// finalizer.
inline SplitMix64 replicate_stream(std::uint64_t seed, std::uint64_t replicate,
                                   std::uint64_t attempt = 0) {
  std::uint64_t s = mix64(seed);
  s = mix64(s ^ (0x100000001ULL * (replicate + 1)));
  s = mix64(s ^ (0x200000003ULL * attempt));
  return SplitMix64(s);
}

}  // namespace ordicc
