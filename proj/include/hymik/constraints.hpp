#pragma once

#include <Eigen/Dense>

#include "hymik/errors.hpp"
#include "hymik/sparse.hpp"

namespace hymik {

enum class ConstraintLabel { GC, SC, Custom };

// Linear constraint system A x = 0 on the interaction vector (time-major).
struct ConstraintSet {
  SpMat A;  // k x (n_T * n_S)
  ConstraintLabel label = ConstraintLabel::Custom;
  bool full_rank = false;
  int rows() const { return static_cast<int>(A.rows()); }
  int cols() const { return static_cast<int>(A.cols()); }
};

enum class SplitPolicy { Auto, SpatialFirst, TemporalFirst };

// Partition of a full-rank constraint set: A1 absorbed through the projection
// Z = I - A1^T A1 (rows orthonormal), A2 handled by kriging.
struct HymikSplit {
  SpMat A1;
  SpMat A2;
  SpMat Z;
  SplitPolicy policy = SplitPolicy::SpatialFirst;  // resolved, never Auto
  int k1() const { return static_cast<int>(A1.rows()); }
  int k2() const { return static_cast<int>(A2.rows()); }
};

// Sum-to-zero over regions for each time (first block) stacked over
// sum-to-zero over times for each region. Overdetermined as built.
ConstraintSet build_gc_constraints(int n_T, int n_S);

// The previous two blocks plus the linear-trend block sum_t t*x_{t,s} = 0 per
// region (second-order walk context). Overdetermined as built.
ConstraintSet build_sc_constraints(int n_T, int n_S);

// Drops the structurally redundant rows (last row of the time block; for the
// trend variant also the last trend row when the system would otherwise stay
// rank-deficient) and verifies the result numerically.
ConstraintSet reduce_to_full_rank(const ConstraintSet& c);

// Chooses which block the projection absorbs. Auto resolves to SpatialFirst
// when n_S >= n_T, TemporalFirst otherwise.
HymikSplit split_constraints(const ConstraintSet& c, int n_T, int n_S, SplitPolicy policy);

// Z = I - A1^T A1 for orthonormal A1 rows.
SpMat build_projection(const SpMat& A1);

// 2n x 2n block matrix [[kappa I, -kappa Z], [-kappa Z, kappa Z + Q_eps]],
// x block first, x* block second.
SpMat assemble_joint_precision(const SpMat& Z, const SpMat& Q_eps, double kappa);

// Conditioning-by-kriging operator for one factorized precision: caches
// W = Q^-1 A2^T and the Cholesky factor of the Gram G = A2 W so the same
// correction can be applied repeatedly and drives the marginal-variance
// downdate diag(W G^-1 W^T).
struct KrigingOp {
  SpMat A2;
  RowMajorMat W;  // n x k2
  Eigen::LLT<MatrixXd> gram_llt;
  double logdet_gram = 0.0;
  // redundant-row mode: spectral Moore-Penrose pseudo-inverse of the Gram
  // instead of LLT, so the correction and downdate are exactly those of any
  // full-rank row subset spanning the same space
  bool redundant = false;
  MatrixXd gram_pinv;  // V diag(1/lambda) V^T over kept eigenvalues
  MatrixXd gram_half;  // V diag(1/sqrt(lambda)), kept columns only
  int rank = 0;

  int k() const { return static_cast<int>(A2.rows()); }
  // x* - W G^-1 A2 x*
  VectorXd apply(const VectorXd& x_star) const;
  // diag(W G^-1 W^T), the variance reduction from conditioning on A2 x = 0
  VectorXd variance_downdate() const;
  // diag(V G^-1 V^T) for caller-supplied rows V (e.g. W mapped into other
  // coordinates); V must have k columns
  VectorXd variance_downdate(const MatrixXd& V) const;
};

// allow_redundant keeps dependent rows: the Gram is eigendecomposed and null
// directions are dropped (pseudo-inverse action), which leaves the correction
// itself unchanged since it only depends on the row span. logdet_gram is then
// the pseudo log determinant of the Gram.
KrigingOp build_kriging_op(const SpMat& A2, const CholeskyFactor& F,
                           bool allow_redundant = false);

// One-shot form of the above.
VectorXd krige_correct(const VectorXd& x_star, const SpMat& A2, const CholeskyFactor& F);

}  // namespace hymik
