#pragma once

#include <cmath>
#include <cstdint>

namespace enginefault {

// Counter-based generator: (seed, counter) fully determine the draw sequence,
// independent of platform or standard-library version. Forking derives an
// unrelated stream, which keeps per-run / per-channel noise reproducible no
// matter in which order runs are generated.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;

  explicit RngState(std::uint64_t seed_ = 0) : seed(seed_) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() {
    ++counter;
    return mix(seed + counter * 0x9e3779b97f4a7c15ULL);
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller; consumes exactly two draws, no cached
  // spare, so the (seed, counter) pair remains the full generator state.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent stream keyed by (seed, stream id); counter starts at 0.
  [[nodiscard]] RngState fork(std::uint64_t stream) const {
    RngState r(mix(seed ^ mix(stream + 0x51ed2701ab7c3d9fULL)));
    return r;
  }
};

}  // namespace enginefault
