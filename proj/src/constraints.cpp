#include "hymik/constraints.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace hymik {

namespace {

SpMat take_rows(const SpMat& A, const std::vector<int>& keep) {
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(A.nonZeros()));
  SpMat At(A);  // iterate column-compressed copy
  std::vector<int> where(static_cast<size_t>(A.rows()), -1);
  for (size_t i = 0; i < keep.size(); ++i) where[static_cast<size_t>(keep[i])] = static_cast<int>(i);
  for (int j = 0; j < At.outerSize(); ++j)
    for (SpMat::InnerIterator it(At, j); it; ++it) {
      const int w = where[static_cast<size_t>(it.row())];
      if (w >= 0) trips.emplace_back(w, static_cast<int>(it.col()), it.value());
    }
  SpMat out(static_cast<int>(keep.size()), A.cols());
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

// time block: one sum-to-zero row per time point, entries at t*n_S + s
void push_time_rows(std::vector<Triplet>& trips, int row0, int n_T, int n_S) {
  for (int t = 0; t < n_T; ++t)
    for (int s = 0; s < n_S; ++s) trips.emplace_back(row0 + t, t * n_S + s, 1.0);
}

// space block: one sum-to-zero row per region
void push_space_rows(std::vector<Triplet>& trips, int row0, int n_T, int n_S) {
  for (int s = 0; s < n_S; ++s)
    for (int t = 0; t < n_T; ++t) trips.emplace_back(row0 + s, t * n_S + s, 1.0);
}

// trend block: sum_t d_t x_{t,s} = 0 per region, d = (1, ..., n_T)
void push_trend_rows(std::vector<Triplet>& trips, int row0, int n_T, int n_S,
                     const VectorXd& d) {
  for (int s = 0; s < n_S; ++s)
    for (int t = 0; t < n_T; ++t) trips.emplace_back(row0 + s, t * n_S + s, d[t]);
}

VectorXd trend_vector(int n_T) { return VectorXd::LinSpaced(n_T, 1.0, static_cast<double>(n_T)); }

double max_gram_deviation(const SpMat& A1) {
  SpMat G = SpMat(A1 * SpMat(A1.transpose()));
  double dev = 0.0;
  Eigen::VectorXd diag_seen = Eigen::VectorXd::Zero(A1.rows());
  for (int j = 0; j < G.outerSize(); ++j)
    for (SpMat::InnerIterator it(G, j); it; ++it) {
      if (it.row() == it.col()) {
        dev = std::max(dev, std::abs(it.value() - 1.0));
        diag_seen[it.row()] = 1.0;
      } else {
        dev = std::max(dev, std::abs(it.value()));
      }
    }
  for (int i = 0; i < A1.rows(); ++i)
    if (diag_seen[i] == 0.0) dev = 1.0;  // missing diagonal = zero row
  return dev;
}

// Modified Gram-Schmidt fallback; only reached when the analytic rows fail the
// orthonormality check.
SpMat reorthonormalize_rows(const SpMat& A1) {
  MatrixXd R = MatrixXd(A1);
  const int k = static_cast<int>(R.rows());
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < i; ++j) R.row(i) -= R.row(j).dot(R.row(i)) * R.row(j);
    const double nrm = R.row(i).norm();
    if (nrm < 1e-12)
      throw NotOrthonormal("projection rows collapsed during re-orthonormalization");
    R.row(i) /= nrm;
  }
  return R.sparseView(1.0, 1e-15);
}

}  // namespace

ConstraintSet build_gc_constraints(int n_T, int n_S) {
  if (n_T < 2 || n_S < 2) throw Error("sum-to-zero interaction constraints need n_T >= 2 and n_S >= 2");
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(2 * n_T * n_S));
  push_time_rows(trips, 0, n_T, n_S);
  push_space_rows(trips, n_T, n_T, n_S);
  ConstraintSet c;
  c.A = SpMat(n_T + n_S, n_T * n_S);
  c.A.setFromTriplets(trips.begin(), trips.end());
  c.A.makeCompressed();
  c.label = ConstraintLabel::GC;
  c.full_rank = false;
  return c;
}

ConstraintSet build_sc_constraints(int n_T, int n_S) {
  if (n_T < 3 || n_S < 2) throw Error("trend-augmented interaction constraints need n_T >= 3 and n_S >= 2");
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(3 * n_T * n_S));
  push_time_rows(trips, 0, n_T, n_S);
  push_space_rows(trips, n_T, n_T, n_S);
  push_trend_rows(trips, n_T + n_S, n_T, n_S, trend_vector(n_T));
  ConstraintSet c;
  c.A = SpMat(n_T + 2 * n_S, n_T * n_S);
  c.A.setFromTriplets(trips.begin(), trips.end());
  c.A.makeCompressed();
  c.label = ConstraintLabel::SC;
  c.full_rank = false;
  return c;
}

ConstraintSet reduce_to_full_rank(const ConstraintSet& c) {
  if (c.full_rank) return c;
  const int k = c.rows();
  const int n = c.cols();
  if (c.label == ConstraintLabel::Custom) {
    // generic path: numeric rank must already match, nothing structural to drop
    const int r = numeric_row_rank(c.A);
    if (r != k)
      throw RankCheckFailed("custom constraint set is rank-deficient (rank " + std::to_string(r) +
                            " of " + std::to_string(k) + " rows)");
    ConstraintSet out = c;
    out.full_rank = true;
    return out;
  }

  // recover the block shape structurally: column 0 is touched by the first
  // time row (row 0) and the first space row (row n_T)
  const bool trend = (c.label == ConstraintLabel::SC);
  SpMat A0(c.A);
  A0.makeCompressed();
  int nT = -1;
  {
    SpMat::InnerIterator it(A0, 0);
    if (it && it.row() == 0 && ++it) nT = static_cast<int>(it.row());
  }
  if (nT < 2 || n % nT != 0) throw Error("constraint block shape does not match its label");
  const int nS = n / nT;
  if (k != (trend ? nT + 2 * nS : nT + nS))
    throw Error("constraint block shape does not match its label");

  std::vector<int> keep;
  for (int t = 0; t < nT - 1; ++t) keep.push_back(t);          // drop last time row
  for (int s = 0; s < nS; ++s) keep.push_back(nT + s);         // all space rows
  if (trend)
    for (int s = 0; s < nS; ++s) keep.push_back(nT + nS + s);  // tentatively all trend rows

  SpMat A = take_rows(c.A, keep);
  int rank = numeric_row_rank(A);
  if (trend && rank < A.rows()) {
    keep.pop_back();  // drop the last trend row as well
    A = take_rows(c.A, keep);
    rank = numeric_row_rank(A);
  }
  if (rank != A.rows())
    throw RankCheckFailed("constraint reduction left a rank-deficient system (rank " +
                          std::to_string(rank) + " of " + std::to_string(A.rows()) + " rows)");
  ConstraintSet out;
  out.A = std::move(A);
  out.label = c.label;
  out.full_rank = true;
  return out;
}

HymikSplit split_constraints(const ConstraintSet& c, int n_T, int n_S, SplitPolicy policy) {
  if (!c.full_rank) throw Error("split requires a full-rank constraint set");
  if (c.label == ConstraintLabel::Custom)
    throw PolicyInfeasible("custom constraint sets carry no block structure to split");
  if (c.cols() != n_T * n_S) throw DimensionMismatch("constraint set does not match n_T * n_S");
  const bool trend = (c.label == ConstraintLabel::SC);
  const int expect_rows = trend ? (n_T + 2 * n_S - 2) : (n_T + n_S - 1);
  if (c.rows() != expect_rows) throw Error("full-rank constraint set has unexpected row count");

  HymikSplit out;
  out.policy = (policy == SplitPolicy::Auto)
                   ? (n_S >= n_T ? SplitPolicy::SpatialFirst : SplitPolicy::TemporalFirst)
                   : policy;

  const int n = n_T * n_S;
  std::vector<Triplet> trips;
  if (out.policy == SplitPolicy::SpatialFirst) {
    // absorb the per-region sums (and for the trend variant the standardized
    // trend rows); kriging keeps the reduced time block
    const double w = 1.0 / std::sqrt(static_cast<double>(n_T));
    for (int s = 0; s < n_S; ++s)
      for (int t = 0; t < n_T; ++t) trips.emplace_back(s, t * n_S + s, w);
    int k1 = n_S;
    if (trend) {
      VectorXd d = trend_vector(n_T);
      VectorXd dt = d.array() - d.mean();
      dt /= dt.norm();
      for (int s = 0; s < n_S; ++s)
        for (int t = 0; t < n_T; ++t) trips.emplace_back(n_S + s, t * n_S + s, dt[t]);
      k1 = 2 * n_S;
    }
    out.A1 = SpMat(k1, n);
    out.A1.setFromTriplets(trips.begin(), trips.end());

    std::vector<int> keep;
    for (int t = 0; t < n_T - 1; ++t) keep.push_back(t);
    out.A2 = take_rows(c.A, keep);
  } else {
    // absorb the per-time sums; kriging keeps the reduced space block (plus
    // the whole reduced trend block, which the projection cannot express)
    const double w = 1.0 / std::sqrt(static_cast<double>(n_S));
    for (int t = 0; t < n_T; ++t)
      for (int s = 0; s < n_S; ++s) trips.emplace_back(t, t * n_S + s, w);
    out.A1 = SpMat(n_T, n);
    out.A1.setFromTriplets(trips.begin(), trips.end());

    std::vector<int> keep;
    for (int s = 0; s < n_S - 1; ++s) keep.push_back(n_T - 1 + s);
    if (trend)
      for (int s = 0; s < n_S - 1; ++s) keep.push_back(n_T - 1 + n_S + s);
    out.A2 = take_rows(c.A, keep);
  }
  out.A1.makeCompressed();

  if (max_gram_deviation(out.A1) > 1e-12) out.A1 = reorthonormalize_rows(out.A1);
  out.Z = build_projection(out.A1);
  return out;
}

SpMat build_projection(const SpMat& A1) {
  const double dev = max_gram_deviation(A1);
  if (dev > 1e-8)
    throw NotOrthonormal("projection rows deviate from orthonormality by " + std::to_string(dev));
  const int n = static_cast<int>(A1.cols());
  SpMat Z = sparse_identity(n) - SpMat(SpMat(A1.transpose()) * A1);
  Z.makeCompressed();
  return Z;
}

SpMat assemble_joint_precision(const SpMat& Z, const SpMat& Q_eps, double kappa) {
  const int n = static_cast<int>(Z.rows());
  if (Z.cols() != n || Q_eps.rows() != n || Q_eps.cols() != n)
    throw DimensionMismatch("projection and regularized precision must be square of equal size");
  if (kappa <= 0.0) throw Error("joint precision needs kappa > 0");
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(3 * Z.nonZeros() + Q_eps.nonZeros() + n));
  for (int i = 0; i < n; ++i) trips.emplace_back(i, i, kappa);
  for (int j = 0; j < Z.outerSize(); ++j)
    for (SpMat::InnerIterator it(Z, j); it; ++it) {
      const int i = static_cast<int>(it.row());
      const int jj = static_cast<int>(it.col());
      const double v = kappa * it.value();
      trips.emplace_back(i, n + jj, -v);
      trips.emplace_back(n + i, jj, -v);
      trips.emplace_back(n + i, n + jj, v);
    }
  for (int j = 0; j < Q_eps.outerSize(); ++j)
    for (SpMat::InnerIterator it(Q_eps, j); it; ++it)
      trips.emplace_back(n + static_cast<int>(it.row()), n + static_cast<int>(it.col()), it.value());
  SpMat QJ(2 * n, 2 * n);
  QJ.setFromTriplets(trips.begin(), trips.end());
  QJ.makeCompressed();
  return QJ;
}

KrigingOp build_kriging_op(const SpMat& A2, const CholeskyFactor& F, bool allow_redundant) {
  KrigingOp op;
  op.A2 = A2;
  op.A2.makeCompressed();
  op.redundant = allow_redundant;
  const int n = static_cast<int>(F.dim());
  if (A2.cols() != n) throw DimensionMismatch("kriging block width does not match the factor");
  const int k = static_cast<int>(A2.rows());
  if (k == 0) {
    op.W.resize(n, 0);
    return op;
  }
  MatrixXd At = MatrixXd(SpMat(A2.transpose()));
  MatrixXd W = F.solve_many(At);
  MatrixXd G = A2 * W;
  G = 0.5 * (G + G.transpose()).eval();
  op.W = W;

  if (allow_redundant) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(G);
    const VectorXd& lam = es.eigenvalues();  // ascending
    const double floor = 1e-12 * std::max(lam[k - 1], 0.0);
    int first = 0;
    while (first < k && !(lam[first] > floor)) ++first;
    op.rank = k - first;
    if (op.rank == 0) throw SingularGram("constraint Gram matrix has no usable directions");
    const MatrixXd V = es.eigenvectors().rightCols(op.rank);
    const VectorXd kept = lam.tail(op.rank);
    op.gram_half = V * kept.cwiseSqrt().cwiseInverse().asDiagonal();
    op.gram_pinv = op.gram_half * op.gram_half.transpose();
    op.logdet_gram = kept.array().log().sum();
    return op;
  }

  op.gram_llt.compute(G);
  if (op.gram_llt.info() != Eigen::Success)
    throw SingularGram("constraint Gram matrix is not positive definite");
  const VectorXd piv = op.gram_llt.matrixLLT().diagonal();
  const double floor = 1e-12 * G.diagonal().maxCoeff();
  double logdet = 0.0;
  for (int i = 0; i < k; ++i) {
    if (!(piv[i] * piv[i] > floor))
      throw SingularGram("constraint Gram matrix is numerically singular (pivot " +
                         std::to_string(i) + ")");
    logdet += 2.0 * std::log(piv[i]);
  }
  op.logdet_gram = logdet;
  op.rank = k;
  return op;
}

VectorXd KrigingOp::apply(const VectorXd& x_star) const {
  if (k() == 0) return x_star;
  if (x_star.size() != W.rows()) throw DimensionMismatch("kriging input has the wrong length");
  VectorXd r = A2 * x_star;
  VectorXd y = redundant ? VectorXd(gram_pinv * r) : VectorXd(gram_llt.solve(r));
  return x_star - W * y;
}

VectorXd KrigingOp::variance_downdate() const { return variance_downdate(MatrixXd(W)); }

VectorXd KrigingOp::variance_downdate(const MatrixXd& V) const {
  if (k() == 0) return VectorXd::Zero(V.rows());
  if (V.cols() != k()) throw DimensionMismatch("downdate rows must match the Gram order");
  if (redundant) {
    // diag(V G^+ V^T) through the spectral half of G^+
    MatrixXd M = V * gram_half;
    return M.rowwise().squaredNorm();
  }
  MatrixXd M = gram_llt.matrixL().solve(V.transpose());
  return M.colwise().squaredNorm().transpose();
}

VectorXd krige_correct(const VectorXd& x_star, const SpMat& A2, const CholeskyFactor& F) {
  if (A2.rows() == 0) return x_star;
  return build_kriging_op(A2, F).apply(x_star);
}

}  // namespace hymik
