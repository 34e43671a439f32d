#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cstdint>
#include <memory>
#include <vector>

#include "hymik/errors.hpp"

namespace hymik {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;
using Eigen::MatrixXd;
using Eigen::VectorXd;
// Row-major blocks keep the row updates of the triangular sweeps contiguous.
using RowMajorMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

SpMat sparse_identity(Eigen::Index n);

// Throws NonSymmetric unless value(i,j) == value(j,i) exactly for all stored entries.
void require_symmetric(const SpMat& Q, const char* what);

// max |entry| over stored values (0 for empty)
double max_abs(const SpMat& m);

// Sparse symmetric positive-definite factorization: AMD fill-reducing ordering,
// simplicial LDL^T (pivots strictly positive for SPD input, so L*sqrt(D) is the
// Cholesky factor the contract speaks of). Deterministic: the ordering depends
// only on the pattern.
class CholeskyFactor {
 public:
  // Throws NonSymmetric / NotPositiveDefinite (with the original-order index of
  // the first non-positive pivot).
  static CholeskyFactor compute(const SpMat& Q);

  Eigen::Index dim() const { return n_; }

  VectorXd solve(const VectorXd& b) const;

  // Dense multi-RHS solve, blocked so the factor streams once per column block.
  MatrixXd solve_many(const MatrixXd& B) const;

  // log det Q = sum log D_i
  double log_det() const;

  // Draws from N(mean, Q^-1): each sample is mean + P^T L^-T z with z iid
  // standard normal (L here is the lower factor including sqrt(D)).
  // Identical seed -> bit-identical samples. One column per sample.
  MatrixXd sample(const VectorXd& mean, std::uint64_t seed, int n_samples) const;

  // Lower-triangular factor L*sqrt(D) such that P Q P^T = L_eff L_eff^T.
  SpMat lower_factor() const;

  const Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int>& permutation() const {
    return perm_;
  }

  // diag(Q^-1) by n unit-vector solves (reference path; exact).
  VectorXd inverse_diag_by_solves() const;

  // diag(Q^-1) by the Takahashi/Erisman-Tinney selected inverse on the factor
  // pattern; same values as inverse_diag_by_solves up to roundoff, at roughly
  // the cost of one numeric factorization.
  VectorXd inverse_diag_selected() const;

  // All selected-inverse entries as a symmetric sparse matrix in the original
  // ordering. Exact wherever the (permuted) entry lies in the factor pattern,
  // which covers every structural entry of Q; other entries are absent.
  SpMat selected_inverse() const;

  // Monte-Carlo estimate of diag(Q^-1) from m GMRF draws, with the relative
  // standard error sqrt(2/m) reported; used above the exact-size threshold.
  VectorXd inverse_diag_sampled(std::uint64_t seed, int m, double* rel_se) const;

 private:
  CholeskyFactor() = default;
  void takahashi(std::vector<double>& zval, VectorXd& zdiag) const;
  friend class RepeatedCholesky;
  void finish(const char* what);  // pivot checks + storage extraction

  Eigen::Index n_ = 0;
  SpMat L_;        // unit lower triangular (strict part + implicit unit diag)
  VectorXd d_;     // LDL^T pivots
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm_;  // P: P Q P^T = L D L^T

  void forward_block(RowMajorMat& X) const;   // X <- L^-1 X
  void backward_block(RowMajorMat& X) const;  // X <- L^-T X
};

// Re-factorizes matrices sharing one sparsity pattern without repeating the
// symbolic analysis. factorize() hands back an independent CholeskyFactor.
class RepeatedCholesky {
 public:
  void analyze(const SpMat& pattern_holder);
  CholeskyFactor factorize(const SpMat& Q);
  bool analyzed() const { return analyzed_; }

 private:
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> solver_;
  bool analyzed_ = false;
};

// Numeric row rank of a sparse matrix via diagonally pivoted Cholesky of the
// row Gram matrix (incremental orthogonalization with pivoting); rel_tol is on
// the pivot relative to the largest initial diagonal.
int numeric_row_rank(const SpMat& A, double rel_tol = 1e-12);

}  // namespace hymik
