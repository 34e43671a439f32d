#include "hymik/simulate.hpp"

#include <cmath>

#include "hymik/rng.hpp"

namespace hymik {

namespace {

// sum-to-zero row, plus the 1-based linear-trend row for second-order walks
SpMat null_rows(int n, int order) {
  SpMat A(order, n);
  for (int j = 0; j < n; ++j) {
    A.insert(0, j) = 1.0;
    if (order == 2) A.insert(1, j) = static_cast<double>(j + 1);
  }
  A.makeCompressed();
  return A;
}

ConstraintSet own_constraints(int n, int order) {
  ConstraintSet c;
  c.A = null_rows(n, order);
  c.full_rank = true;
  return c;
}

}  // namespace

VectorXd sample_constrained_effect(const StructureMatrix& R, double tau, const ConstraintSet& c,
                                   std::uint64_t seed) {
  if (!(tau > 0.0)) throw Error("effect precision must be positive");
  if (c.rows() > 0 && c.cols() != R.dim())
    throw DimensionMismatch("constraint width does not match the structure matrix");
  const Eigen::Index n = R.dim();
  const double eps = 1e-6 * geomean_diag(R.matrix);
  SpMat ridge(n, n);
  ridge.setIdentity();
  SpMat Q = SpMat(tau * R.matrix) + SpMat(eps * ridge);
  Q.makeCompressed();
  CholeskyFactor F = CholeskyFactor::compute(Q);
  VectorXd x = F.sample(VectorXd::Zero(n), seed, 1).col(0);
  if (c.rows() == 0) return x;
  KrigingOp op = build_kriging_op(c.A, F, /*allow_redundant=*/!c.full_rank);
  return op.apply(x);
}

SimulatedData simulate_dataset(const SimulationConfig& cfg) {
  if (cfg.temporal_order != 1 && cfg.temporal_order != 2)
    throw Error("temporal order must be 1 or 2");
  if (cfg.n_T <= cfg.temporal_order) throw Error("too few time points for the walk order");
  if (cfg.graph.n_nodes < 2) throw Error("graph must have at least two nodes");
  if (cfg.n_replicates < 1) throw Error("need at least one replicate");
  const int n_T = cfg.n_T;
  const int n_S = cfg.graph.n_nodes;

  StructureMatrix Ra =
      scale_structure(build_rw_structure(n_T, cfg.temporal_order), null_rows(n_T, cfg.temporal_order));
  StructureMatrix Rg = scale_structure(build_icar_structure(cfg.graph), null_rows(n_S, 1));
  StructureMatrix Rd = build_interaction_structure(Ra, Rg);

  SimulatedData out;
  out.alpha = sample_constrained_effect(Ra, cfg.taus.tau_alpha,
                                        own_constraints(n_T, cfg.temporal_order), cfg.seed + 1);
  out.gamma =
      sample_constrained_effect(Rg, cfg.taus.tau_gamma, own_constraints(n_S, 1), cfg.seed + 2);
  out.delta = sample_constrained_effect(
      Rd, cfg.taus.tau_delta, reduce_to_full_rank(build_sc_constraints(n_T, n_S)), cfg.seed + 3);
  out.intercept = cfg.intercept;
  out.taus = cfg.taus;
  out.seed = cfg.seed;

  ObservationSet& obs = out.obs;
  obs.n_T = n_T;
  obs.n_S = n_S;
  obs.family = Family::Poisson;
  obs.obs.reserve(static_cast<size_t>(n_T) * n_S * cfg.n_replicates);
  NormalSampler rng(cfg.seed + 4);
  for (int t = 0; t < n_T; ++t)
    for (int s = 0; s < n_S; ++s) {
      const int cell = t * n_S + s;
      const double mean = std::exp(cfg.intercept + out.alpha[t] + out.gamma[s] + out.delta[cell]);
      for (int r = 0; r < cfg.n_replicates; ++r)
        obs.obs.push_back({cell, static_cast<double>(rng.poisson(mean)), 1.0});
    }
  return out;
}

}  // namespace hymik
