#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace hymik {

// Deterministic normal sampler: mt19937_64 stream mapped through Box-Muller.
// Uniforms are built as (bits >> 11) * 2^-53 so the stream is reproducible for
// a given seed independent of any library distribution internals; u1 is pushed
// away from 0 to keep log() finite.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : gen_(seed) {}

  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Poisson draw; inversion for small means, PTRS-style acceptance otherwise.
  long poisson(double mean);

  std::mt19937_64& raw() { return gen_; }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace hymik
