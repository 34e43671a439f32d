#include "hymik/rng.hpp"

#include <algorithm>

namespace hymik {

namespace {
double log_factorial(long k) { return std::lgamma(static_cast<double>(k) + 1.0); }
}  // namespace

long NormalSampler::poisson(double mean) {
  if (!(mean > 0.0)) return 0;
  if (mean < 12.0) {
    // inversion by sequential search
    const double L = std::exp(-mean);
    long k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform01();
    } while (p > L);
    return k - 1;
  }
  // transformed rejection with squeeze (Hormann's PTRS)
  const double b = 0.931 + 2.53 * std::sqrt(mean);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    double u = uniform01() - 0.5;
    double v = uniform01();
    double us = 0.5 - std::abs(u);
    long k = static_cast<long>(std::floor((2.0 * a / us + b) * u + mean + 0.43));
    if (us >= 0.07 && v <= v_r) return k;
    if (k < 0 || (us < 0.013 && v > us)) continue;
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        k * std::log(mean) - mean - log_factorial(k))
      return k;
  }
}

}  // namespace hymik
