#include "hymik/gmrf.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unsupported/Eigen/KroneckerProduct>

namespace hymik {

int Graph::component_count() const {
  std::vector<char> seen(n_nodes, 0);
  int comps = 0;
  std::vector<int> stack;
  for (int s = 0; s < n_nodes; ++s) {
    if (seen[s]) continue;
    ++comps;
    stack.push_back(s);
    seen[s] = 1;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int v : adjacency[u])
        if (!seen[v]) {
          seen[v] = 1;
          stack.push_back(v);
        }
    }
  }
  return comps;
}

Graph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open graph file: " + path);
  std::string line;
  long line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r\n") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_line()) throw ParseError("graph file is empty", line_no);
  Graph g;
  {
    std::istringstream ss(line);
    if (!(ss >> g.n_nodes) || g.n_nodes <= 0)
      throw ParseError("expected positive node count", line_no);
  }
  g.adjacency.assign(g.n_nodes, {});
  std::vector<char> defined(g.n_nodes, 0);
  for (int i = 0; i < g.n_nodes; ++i) {
    if (!next_line())
      throw ParseError("expected " + std::to_string(g.n_nodes) + " node lines, got " +
                           std::to_string(i),
                       line_no);
    std::istringstream ss(line);
    int id = -1, deg = -1;
    if (!(ss >> id >> deg)) throw ParseError("expected 'node_id degree ...'", line_no);
    if (id < 0 || id >= g.n_nodes) throw ParseError("node id out of range", line_no);
    if (defined[id]) throw ParseError("duplicate node id " + std::to_string(id), line_no);
    if (deg < 0) throw ParseError("negative degree", line_no);
    defined[id] = 1;
    g.adjacency[id].reserve(deg);
    for (int k = 0; k < deg; ++k) {
      int nb = -1;
      if (!(ss >> nb)) throw ParseError("fewer neighbors than the declared degree", line_no);
      if (nb < 0 || nb >= g.n_nodes) throw ParseError("neighbor id out of range", line_no);
      if (nb == id) throw ParseError("self-loop on node " + std::to_string(id), line_no);
      g.adjacency[id].push_back(nb);
    }
    int extra;
    if (ss >> extra) throw ParseError("more neighbors than the declared degree", line_no);
    std::sort(g.adjacency[id].begin(), g.adjacency[id].end());
    if (std::adjacent_find(g.adjacency[id].begin(), g.adjacency[id].end()) !=
        g.adjacency[id].end())
      throw ParseError("duplicate neighbor on node " + std::to_string(id), line_no);
  }
  for (int u = 0; u < g.n_nodes; ++u)
    for (int v : g.adjacency[u])
      if (!std::binary_search(g.adjacency[v].begin(), g.adjacency[v].end(), u))
        throw AsymmetricAdjacency("edge " + std::to_string(u) + "->" + std::to_string(v) +
                                  " has no reverse edge");
  return g;
}

StructureMatrix build_rw_structure(int n, int order) {
  if (order != 1 && order != 2) throw Error("random-walk order must be 1 or 2");
  if (n <= order)
    throw TooShort("random walk of order " + std::to_string(order) + " needs at least " +
                   std::to_string(order + 1) + " points, got " + std::to_string(n));
  SpMat D(n - order, n);
  std::vector<Triplet> t;
  if (order == 1) {
    for (int i = 0; i + 1 < n; ++i) {
      t.emplace_back(i, i, -1.0);
      t.emplace_back(i, i + 1, 1.0);
    }
  } else {
    for (int i = 0; i + 2 < n; ++i) {
      t.emplace_back(i, i, 1.0);
      t.emplace_back(i, i + 1, -2.0);
      t.emplace_back(i, i + 2, 1.0);
    }
  }
  D.setFromTriplets(t.begin(), t.end());
  StructureMatrix out;
  out.matrix = SpMat(D.transpose() * D);
  out.matrix.makeCompressed();
  out.rank_deficiency = order;
  out.kind = order == 1 ? StructureKind::RW1 : StructureKind::RW2;
  return out;
}

StructureMatrix build_icar_structure(const Graph& g) {
  const int comps = g.component_count();
  if (comps != 1)
    throw Disconnected("graph has " + std::to_string(comps) + " components; need 1", comps);
  std::vector<Triplet> t;
  for (int u = 0; u < g.n_nodes; ++u) {
    t.emplace_back(u, u, static_cast<double>(g.adjacency[u].size()));
    for (int v : g.adjacency[u]) t.emplace_back(u, v, -1.0);
  }
  StructureMatrix out;
  out.matrix.resize(g.n_nodes, g.n_nodes);
  out.matrix.setFromTriplets(t.begin(), t.end());
  out.matrix.makeCompressed();
  out.rank_deficiency = 1;
  out.kind = StructureKind::ICAR;
  return out;
}

StructureMatrix build_interaction_structure(const StructureMatrix& R_alpha,
                                            const StructureMatrix& R_gamma) {
  const Eigen::Index n_T = R_alpha.dim(), n_S = R_gamma.dim();
  StructureMatrix out;
  out.matrix = SpMat(Eigen::kroneckerProduct(R_alpha.matrix, R_gamma.matrix));
  out.matrix.makeCompressed();
  const int ka = R_alpha.rank_deficiency, kg = R_gamma.rank_deficiency;
  out.rank_deficiency =
      static_cast<int>(ka * n_S + kg * n_T) - ka * kg;
  out.kind = StructureKind::Interaction;
  out.scaled = R_alpha.scaled && R_gamma.scaled;
  out.scale_factor = R_alpha.scale_factor * R_gamma.scale_factor;
  return out;
}

MatrixXd null_space_basis(const SpMat& A, Eigen::Index n) {
  if (A.rows() == 0) return MatrixXd::Identity(n, n);
  if (A.cols() != n) throw DimensionMismatch("constraint columns do not match dimension");
  MatrixXd At = MatrixXd(A).transpose();  // n x k
  Eigen::ColPivHouseholderQR<MatrixXd> qr(At);
  const Eigen::Index r = qr.rank();
  MatrixXd Q = qr.householderQ() * MatrixXd::Identity(n, n);
  return Q.rightCols(n - r);
}

namespace {

// Diagonal of V (V^T R V)^-1 V^T plus the log-determinant bookkeeping shared
// by scaling and the generalized determinant.
struct RestrictedSpectrum {
  VectorXd eigenvalues;  // of V^T R V, ascending
  MatrixXd vectors;      // eigenvectors (columns), in V-coordinates
  MatrixXd V;
};

RestrictedSpectrum restrict_to_complement(const SpMat& R, const SpMat& A) {
  RestrictedSpectrum out;
  out.V = null_space_basis(A, R.rows());
  MatrixXd M = out.V.transpose() * (R * out.V);
  M = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(M);
  out.eigenvalues = es.eigenvalues();
  out.vectors = es.eigenvectors();
  return out;
}

}  // namespace

StructureMatrix scale_structure(const StructureMatrix& R, const SpMat& A) {
  if (R.scaled) throw AlreadyScaled("structure matrix is already scaled");
  RestrictedSpectrum rs = restrict_to_complement(R.matrix, A);
  const Eigen::Index m = rs.eigenvalues.size();
  if (m == 0) throw UnderConstrained("constraints leave no free directions");
  const double top = rs.eigenvalues[m - 1];
  if (!(top > 0.0) || rs.eigenvalues[0] <= 1e-10 * top)
    throw UnderConstrained(
        "constraints do not cover the null space: restricted matrix is singular");
  // Sigma = V M^-1 V^T; diag via the eigen-decomposition of M
  MatrixXd W = rs.V * rs.vectors;  // n x m
  double mean_log = 0.0;
  const Eigen::Index n = R.matrix.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    double sii = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) sii += W(i, j) * W(i, j) / rs.eigenvalues[j];
    mean_log += std::log(sii);
  }
  mean_log /= static_cast<double>(n);
  const double g = std::exp(mean_log);  // geometric mean marginal variance
  StructureMatrix out = R;
  out.matrix = SpMat(R.matrix * g);
  out.matrix.makeCompressed();
  out.scaled = true;
  out.scale_factor = g;
  return out;
}

double generalized_log_det(const SpMat& R, const SpMat& A, double rel_tol) {
  require_symmetric(R, "generalized_log_det");
  RestrictedSpectrum rs = restrict_to_complement(R, A);
  const Eigen::Index m = rs.eigenvalues.size();
  if (m == 0) return 0.0;
  const double top = std::fabs(rs.eigenvalues[m - 1]);
  double s = 0.0;
  for (Eigen::Index j = 0; j < m; ++j)
    if (rs.eigenvalues[j] > rel_tol * top) s += std::log(rs.eigenvalues[j]);
  return s;
}

double geomean_diag(const SpMat& R) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < R.rows(); ++i) {
    const double d = R.coeff(i, i);
    if (!(d > 0.0)) throw Error("geomean_diag: non-positive diagonal entry");
    s += std::log(d);
  }
  return std::exp(s / static_cast<double>(R.rows()));
}

}  // namespace hymik
