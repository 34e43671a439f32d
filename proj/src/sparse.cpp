#include "hymik/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "hymik/rng.hpp"

namespace hymik {

namespace {
constexpr int kSolveBlock = 48;
}  // namespace

SpMat sparse_identity(Eigen::Index n) {
  SpMat I(n, n);
  I.setIdentity();
  return I;
}

double max_abs(const SpMat& m) {
  double v = 0.0;
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it) v = std::max(v, std::abs(it.value()));
  return v;
}

void require_symmetric(const SpMat& Q, const char* what) {
  if (Q.rows() != Q.cols())
    throw NonSymmetric(std::string(what) + ": matrix is not square");
  SpMat Qt = SpMat(Q.transpose());
  SpMat diff = Q - Qt;
  for (int k = 0; k < diff.outerSize(); ++k)
    for (SpMat::InnerIterator it(diff, k); it; ++it)
      if (it.value() != 0.0)
        throw NonSymmetric(std::string(what) + ": entry (" + std::to_string(it.row()) + "," +
                           std::to_string(it.col()) + ") differs from its transpose");
}

// ---------------------------------------------------------------------------
// CholeskyFactor

CholeskyFactor CholeskyFactor::compute(const SpMat& Q) {
  require_symmetric(Q, "cholesky");
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> solver;
  solver.compute(Q);
  CholeskyFactor f;
  f.n_ = Q.rows();
  f.perm_ = solver.permutationP();
  f.d_ = solver.vectorD();
  // The LDLT factor may or may not carry explicit unit diagonal entries
  // depending on the Eigen version; normalize to a strictly lower CSC.
  SpMat raw = SpMat(solver.matrixL());
  std::vector<Triplet> trips;
  trips.reserve(raw.nonZeros());
  for (int k = 0; k < raw.outerSize(); ++k)
    for (SpMat::InnerIterator it(raw, k); it; ++it)
      if (it.row() > it.col()) trips.emplace_back(it.row(), it.col(), it.value());
  f.L_.resize(f.n_, f.n_);
  f.L_.setFromTriplets(trips.begin(), trips.end());
  f.L_.makeCompressed();
  f.finish("cholesky");
  return f;
}

void CholeskyFactor::finish(const char* what) {
  for (Eigen::Index i = 0; i < d_.size(); ++i) {
    if (!(d_[i] > 0.0) || !std::isfinite(d_[i])) {
      // d_ lives in permuted order; report the original index.
      int orig = static_cast<int>(i);
      for (Eigen::Index j = 0; j < n_; ++j)
        if (perm_.indices()[j] == static_cast<int>(i)) {
          orig = static_cast<int>(j);
          break;
        }
      throw NotPositiveDefinite(
          std::string(what) + ": non-positive pivot " + std::to_string(d_[i]) +
              " at index " + std::to_string(orig),
          orig);
    }
  }
}

void CholeskyFactor::forward_block(RowMajorMat& X) const {
  const int* outer = L_.outerIndexPtr();
  const int* inner = L_.innerIndexPtr();
  const double* vals = L_.valuePtr();
  for (Eigen::Index j = 0; j < n_; ++j) {
    const auto xj = X.row(j);
    for (int p = outer[j]; p < outer[j + 1]; ++p) X.row(inner[p]) -= vals[p] * xj;
  }
}

void CholeskyFactor::backward_block(RowMajorMat& X) const {
  const int* outer = L_.outerIndexPtr();
  const int* inner = L_.innerIndexPtr();
  const double* vals = L_.valuePtr();
  for (Eigen::Index j = n_ - 1; j >= 0; --j) {
    auto xj = X.row(j);
    for (int p = outer[j]; p < outer[j + 1]; ++p) xj -= vals[p] * X.row(inner[p]);
  }
}

// private helpers need the block type; define solves here
MatrixXd CholeskyFactor::solve_many(const MatrixXd& B) const {
  if (B.rows() != n_) throw DimensionMismatch("solve: rhs has " + std::to_string(B.rows()) +
                                              " rows, factor dimension is " + std::to_string(n_));
  const auto& idx = perm_.indices();
  MatrixXd out(n_, B.cols());
  VectorXd dinv = d_.cwiseInverse();
  for (Eigen::Index c0 = 0; c0 < B.cols(); c0 += kSolveBlock) {
    const Eigen::Index bc = std::min<Eigen::Index>(kSolveBlock, B.cols() - c0);
    RowMajorMat X(n_, bc);
    for (Eigen::Index j = 0; j < n_; ++j) X.row(idx[j]) = B.block(j, c0, 1, bc);
    forward_block(X);
    for (Eigen::Index i = 0; i < n_; ++i) X.row(i) *= dinv[i];
    backward_block(X);
    for (Eigen::Index j = 0; j < n_; ++j) out.block(j, c0, 1, bc) = X.row(idx[j]);
  }
  return out;
}

VectorXd CholeskyFactor::solve(const VectorXd& b) const {
  if (b.size() != n_) throw DimensionMismatch("solve: rhs length " + std::to_string(b.size()) +
                                              ", factor dimension " + std::to_string(n_));
  const auto& idx = perm_.indices();
  VectorXd x(n_);
  for (Eigen::Index j = 0; j < n_; ++j) x[idx[j]] = b[j];
  const int* outer = L_.outerIndexPtr();
  const int* inner = L_.innerIndexPtr();
  const double* vals = L_.valuePtr();
  for (Eigen::Index j = 0; j < n_; ++j) {
    const double xj = x[j];
    for (int p = outer[j]; p < outer[j + 1]; ++p) x[inner[p]] -= vals[p] * xj;
  }
  x.array() /= d_.array();
  for (Eigen::Index j = n_ - 1; j >= 0; --j) {
    double xj = x[j];
    for (int p = outer[j]; p < outer[j + 1]; ++p) xj -= vals[p] * x[inner[p]];
    x[j] = xj;
  }
  VectorXd out(n_);
  for (Eigen::Index j = 0; j < n_; ++j) out[j] = x[idx[j]];
  return out;
}

double CholeskyFactor::log_det() const { return d_.array().log().sum(); }

SpMat CholeskyFactor::lower_factor() const {
  // L_eff = (I + strict L) * sqrt(D), so that P Q P^T = L_eff L_eff^T.
  std::vector<Triplet> trips;
  trips.reserve(L_.nonZeros() + n_);
  VectorXd rd = d_.cwiseSqrt();
  for (Eigen::Index j = 0; j < n_; ++j) trips.emplace_back(j, j, rd[j]);
  for (int k = 0; k < L_.outerSize(); ++k)
    for (SpMat::InnerIterator it(L_, k); it; ++it)
      trips.emplace_back(it.row(), it.col(), it.value() * rd[it.col()]);
  SpMat out(n_, n_);
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

MatrixXd CholeskyFactor::sample(const VectorXd& mean, std::uint64_t seed, int n_samples) const {
  if (mean.size() != n_) throw DimensionMismatch("sample: mean length mismatch");
  NormalSampler rng(seed);
  const auto& idx = perm_.indices();
  VectorXd dinvsqrt = d_.cwiseSqrt().cwiseInverse();
  MatrixXd out(n_, n_samples);
  const int* outer = L_.outerIndexPtr();
  const int* inner = L_.innerIndexPtr();
  const double* vals = L_.valuePtr();
  VectorXd w(n_);
  for (int s = 0; s < n_samples; ++s) {
    for (Eigen::Index i = 0; i < n_; ++i) w[i] = rng.normal() * dinvsqrt[i];
    // w <- L^-T w
    for (Eigen::Index j = n_ - 1; j >= 0; --j) {
      double wj = w[j];
      for (int p = outer[j]; p < outer[j + 1]; ++p) wj -= vals[p] * w[inner[p]];
      w[j] = wj;
    }
    for (Eigen::Index j = 0; j < n_; ++j) out(j, s) = mean[j] + w[idx[j]];
  }
  return out;
}

VectorXd CholeskyFactor::inverse_diag_by_solves() const {
  VectorXd diag(n_);
  VectorXd e = VectorXd::Zero(n_);
  for (Eigen::Index i = 0; i < n_; ++i) {
    e[i] = 1.0;
    diag[i] = solve(e)[i];
    e[i] = 0.0;
  }
  return diag;
}

void CholeskyFactor::takahashi(std::vector<double>& zval, VectorXd& zdiag) const {
  // Takahashi / Erisman-Tinney recursion on the factor pattern:
  //   Sigma_ij = -sum_{k in col j, k>j} L_kj Sigma_ik   (i > j)
  //   Sigma_jj = 1/d_j - sum_{k in col j} L_kj Sigma_jk
  // The filled pattern is closed under the recursion, so entries of Sigma are
  // stored on the pattern of L (strict lower) plus the diagonal.
  const int* outer = L_.outerIndexPtr();
  const int* inner = L_.innerIndexPtr();
  const double* lval = L_.valuePtr();
  zval.assign(static_cast<size_t>(L_.nonZeros()), 0.0);
  zdiag.resize(n_);
  std::vector<double> buf(n_, 0.0);
  std::vector<double> lcol(n_, 0.0);
  std::vector<int> slot(n_, -1);

  for (Eigen::Index j = n_ - 1; j >= 0; --j) {
    const int beg = outer[j], end = outer[j + 1];
    for (int p = beg; p < end; ++p) {
      buf[inner[p]] = 0.0;
      lcol[inner[p]] = lval[p];
      slot[inner[p]] = p;
    }
    for (int p = beg; p < end; ++p) {
      const int c = inner[p];
      const double Lcj = lval[p];
      // diagonal of column c
      buf[c] -= Lcj * zdiag[c];
      for (int q = outer[c]; q < outer[c + 1]; ++q) {
        const int a = inner[q];
        if (slot[a] < 0) continue;  // contributes only via L_aj = 0
        const double z = zval[static_cast<size_t>(q)];
        buf[a] -= Lcj * z;      // (i=a, k=c)
        buf[c] -= lcol[a] * z;  // (i=c, k=a)
      }
    }
    double dj = 1.0 / d_[j];
    for (int p = beg; p < end; ++p) {
      zval[static_cast<size_t>(p)] = buf[inner[p]];
      dj -= lval[p] * zval[static_cast<size_t>(p)];
      slot[inner[p]] = -1;
    }
    zdiag[j] = dj;
  }
}

VectorXd CholeskyFactor::inverse_diag_selected() const {
  std::vector<double> zval;
  VectorXd zdiag;
  takahashi(zval, zdiag);
  const auto& idx = perm_.indices();
  VectorXd out(n_);
  for (Eigen::Index j = 0; j < n_; ++j) out[j] = zdiag[idx[j]];
  return out;
}

SpMat CholeskyFactor::selected_inverse() const {
  std::vector<double> zval;
  VectorXd zdiag;
  takahashi(zval, zdiag);
  const int* outer = L_.outerIndexPtr();
  const int* inner = L_.innerIndexPtr();
  const auto& idx = perm_.indices();
  std::vector<Eigen::Index> inv(static_cast<size_t>(n_));
  for (Eigen::Index k = 0; k < n_; ++k) inv[static_cast<size_t>(idx[k])] = k;

  std::vector<Triplet> trips;
  trips.reserve(2 * zval.size() + static_cast<size_t>(n_));
  for (Eigen::Index j = 0; j < n_; ++j) {
    const Eigen::Index oj = inv[static_cast<size_t>(j)];
    trips.emplace_back(oj, oj, zdiag[j]);
    for (int p = outer[j]; p < outer[j + 1]; ++p) {
      const Eigen::Index oi = inv[static_cast<size_t>(inner[p])];
      const double v = zval[static_cast<size_t>(p)];
      trips.emplace_back(oi, oj, v);
      trips.emplace_back(oj, oi, v);
    }
  }
  SpMat out(n_, n_);
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

VectorXd CholeskyFactor::inverse_diag_sampled(std::uint64_t seed, int m, double* rel_se) const {
  MatrixXd draws = sample(VectorXd::Zero(n_), seed, m);
  VectorXd diag = draws.array().square().rowwise().mean();
  if (rel_se) *rel_se = std::sqrt(2.0 / static_cast<double>(m));
  return diag;
}

// ---------------------------------------------------------------------------
// RepeatedCholesky

void RepeatedCholesky::analyze(const SpMat& pattern_holder) {
  solver_.analyzePattern(pattern_holder);
  analyzed_ = true;
}

CholeskyFactor RepeatedCholesky::factorize(const SpMat& Q) {
  if (!analyzed_) analyze(Q);
  solver_.factorize(Q);
  CholeskyFactor f;
  f.n_ = Q.rows();
  f.perm_ = solver_.permutationP();
  f.d_ = solver_.vectorD();
  SpMat raw = SpMat(solver_.matrixL());
  std::vector<Triplet> trips;
  trips.reserve(raw.nonZeros());
  for (int k = 0; k < raw.outerSize(); ++k)
    for (SpMat::InnerIterator it(raw, k); it; ++it)
      if (it.row() > it.col()) trips.emplace_back(it.row(), it.col(), it.value());
  f.L_.resize(f.n_, f.n_);
  f.L_.setFromTriplets(trips.begin(), trips.end());
  f.L_.makeCompressed();
  f.finish("cholesky (repeated)");
  return f;
}

// ---------------------------------------------------------------------------

int numeric_row_rank(const SpMat& A, double rel_tol) {
  const int k = static_cast<int>(A.rows());
  if (k == 0) return 0;
  SpMat At = SpMat(A.transpose());
  MatrixXd G = MatrixXd(SpMat(A * At));
  double maxdiag = G.diagonal().maxCoeff();
  if (maxdiag <= 0.0) return 0;
  const double tol = rel_tol * maxdiag;
  std::vector<int> live(k);
  for (Eigen::Index i = 0; i < k; ++i) live[i] = static_cast<int>(i);
  int rank = 0;
  while (rank < k) {
    // pick the largest remaining diagonal (diagonal pivoting)
    int best = rank;
    for (int i = rank; i < k; ++i)
      if (G(live[i], live[i]) > G(live[best], live[best])) best = i;
    std::swap(live[rank], live[best]);
    const int piv = live[rank];
    const double djj = G(piv, piv);
    if (djj <= tol) break;
    for (int i = rank + 1; i < k; ++i) {
      const int ri = live[i];
      const double f = G(ri, piv) / djj;
      if (f == 0.0) continue;
      for (int l = rank + 1; l < k; ++l) G(ri, live[l]) -= f * G(piv, live[l]);
    }
    ++rank;
  }
  return rank;
}

}  // namespace hymik
