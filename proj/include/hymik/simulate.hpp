#pragma once

#include <cstdint>

#include "hymik/constraints.hpp"
#include "hymik/gmrf.hpp"
#include "hymik/model.hpp"

namespace hymik {

// Synthetic-data protocol: scale the structure matrices, draw each effect
// from its constrained prior, then draw replicated Poisson counts around
// exp(intercept + alpha_t + gamma_s + delta_{t,s}).
struct SimulationConfig {
  Graph graph;
  int n_T = 0;
  int temporal_order = 2;
  // defaults sit near the precisions a fit recovers on data of this kind,
  // so desk-scale recovery runs operate in a realistic regime
  Hyperparameters taus = {50.0, 10.0, 17.0, 1.0};
  double intercept = 1.5;
  int n_replicates = 30;
  std::uint64_t seed = 1;
};

// Ground truth is kept next to the counts so recovery checks close the loop.
struct SimulatedData {
  ObservationSet obs;  // n_T * n_S * n_replicates Poisson draws, exposure 1
  double intercept = 0.0;
  VectorXd alpha, gamma, delta;
  Hyperparameters taus;
  std::uint64_t seed = 0;
};

// One draw from N(0, (tau R + eps I)^-1) kriged onto the surface A x = 0,
// eps = 1e-6 * geomean(diag R). Redundant constraint rows are allowed; the
// returned vector satisfies every row to ~1e-10. Same seed, same draw.
VectorXd sample_constrained_effect(const StructureMatrix& R, double tau, const ConstraintSet& c,
                                   std::uint64_t seed);

// alpha under sum-to-zero (plus the linear-trend constraint for order 2),
// gamma under sum-to-zero, delta under the trend-augmented interaction set.
// Deterministic in cfg.seed; sub-streams are seed+1..seed+4.
SimulatedData simulate_dataset(const SimulationConfig& cfg);

}  // namespace hymik
