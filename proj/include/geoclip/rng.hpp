#pragma once

#include <cmath>
#include <cstdint>

#include "geoclip/common.hpp"

namespace geoclip {

// Counter-based generator built on the splitmix64 finalizer. Unlike
// std::normal_distribution, every draw is bit-identical across platforms and
// standard libraries, which the reproducibility contract requires.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed) : state_(mix(seed ^ kGamma)) {}

  // Independent stream for a given (seed, stream, step) coordinate. Streams
  // separate purposes (sampling, noise, data) so draw counts in one never
  // perturb another.
  static SplitRng for_step(std::uint64_t seed, std::uint64_t stream,
                           std::uint64_t step) {
    std::uint64_t s = mix(seed ^ kGamma);
    s = mix(s ^ mix(stream + 0xBF58476D1CE4E5B9ull));
    s = mix(s ^ mix(step + 0x94D049BB133111EBull));
    SplitRng r(0);
    r.state_ = s;
    return r;
  }

  std::uint64_t next_u64() {
    state_ += kGamma;
    return mix(state_);
  }

  // Uniform in (0, 1); never returns 0, so log(u) below is finite.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1p-53 + 0x1p-54;
  }

  // Standard normal via Box-Muller; transcendental functions only, so the
  // stream stays portable (no rejection loop with platform-dependent length).
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  VectorXd gaussian_vector(Index n, double stddev = 1.0) {
    VectorXd v(n);
    for (Index i = 0; i < n; ++i) v[i] = stddev * gaussian();
    return v;
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace geoclip
