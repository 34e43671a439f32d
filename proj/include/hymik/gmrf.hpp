#pragma once

#include <string>
#include <vector>

#include "hymik/sparse.hpp"

namespace hymik {

struct Graph {
  int n_nodes = 0;
  std::vector<std::vector<int>> adjacency;  // sorted neighbor lists, 0-based
  int component_count() const;
};

// Text format: first line = node count n, then n lines "node_id degree
// neighbor_1 ... neighbor_degree" with 0-based ids in any row order.
Graph load_graph(const std::string& path);

enum class StructureKind { RW1, RW2, ICAR, Interaction };

// A structure matrix R (the hyperparameter-free part of a precision Q = tau*R)
// with its rank deficiency and scaling state.
struct StructureMatrix {
  SpMat matrix;
  int rank_deficiency = 0;
  StructureKind kind = StructureKind::RW1;
  bool scaled = false;
  double scale_factor = 1.0;  // multiplier already applied to the raw matrix
  Eigen::Index dim() const { return matrix.rows(); }
};

// R = D^T D for the order-th difference matrix D; rank deficiency = order.
StructureMatrix build_rw_structure(int n, int order);

// Diagonal = node degree, off-diagonal -1 for neighbors; rank deficiency 1.
// Requires a connected graph.
StructureMatrix build_icar_structure(const Graph& g);

// R_delta = R_alpha (x) R_gamma in time-major layout: index(t,s) = t*n_S + s.
StructureMatrix build_interaction_structure(const StructureMatrix& R_alpha,
                                            const StructureMatrix& R_gamma);

// Rescales R so the constrained generalized covariance has unit geometric
// mean marginal variance: returns R * g, g = exp(mean_i log Sigma_ii) with
// Sigma = V (V^T R V)^-1 V^T, V an orthonormal basis of the null space of A.
StructureMatrix scale_structure(const StructureMatrix& R, const SpMat& A);

// log generalized determinant of R restricted to the orthogonal complement of
// the constraint rows: sum of log eigenvalues of V^T R V above rel_tol times
// the largest, V as in scale_structure. With k = 0 constraint rows this is the
// log pseudo-determinant of R itself.
double generalized_log_det(const SpMat& R, const SpMat& A, double rel_tol = 1e-8);

// exp(mean of log diagonal); requires strictly positive diagonal.
double geomean_diag(const SpMat& R);

// Orthonormal basis (columns) of the null space of A, n x (n - rank A).
MatrixXd null_space_basis(const SpMat& A, Eigen::Index n);

}  // namespace hymik
