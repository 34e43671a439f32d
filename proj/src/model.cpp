#include "hymik/model.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <vector>

namespace hymik {

namespace {

// lift a block-local sparse matrix to full latent width at a column offset
void push_shifted(std::vector<Triplet>& trips, const SpMat& M, int row0, int col0) {
  for (int j = 0; j < M.outerSize(); ++j)
    for (SpMat::InnerIterator it(M, j); it; ++it)
      trips.emplace_back(row0 + static_cast<int>(it.row()), col0 + static_cast<int>(it.col()),
                         it.value());
}

SpMat shifted_block(const SpMat& M, int rows, int cols, int row0, int col0) {
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(M.nonZeros()));
  push_shifted(trips, M, row0, col0);
  SpMat out(rows, cols);
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

SpMat main_constraint_rows(const BlockLayout& lay, bool alpha_trend) {
  std::vector<Triplet> trips;
  int row = 0;
  for (int t = 0; t < lay.n_T; ++t) trips.emplace_back(row, lay.alpha() + t, 1.0);
  ++row;
  if (alpha_trend) {
    for (int t = 0; t < lay.n_T; ++t)
      trips.emplace_back(row, lay.alpha() + t, static_cast<double>(t + 1));
    ++row;
  }
  for (int s = 0; s < lay.n_S; ++s) trips.emplace_back(row, lay.gamma() + s, 1.0);
  ++row;
  SpMat A(row, lay.total());
  A.setFromTriplets(trips.begin(), trips.end());
  A.makeCompressed();
  return A;
}

SpMat own_null_constraints(int n, int order) {
  SpMat A(order, n);
  for (int j = 0; j < n; ++j) {
    A.insert(0, j) = 1.0;
    if (order == 2) A.insert(1, j) = static_cast<double>(j + 1);
  }
  A.makeCompressed();
  return A;
}

double dense_gram_logdet(const SpMat& A) {
  if (A.rows() == 0) return 0.0;
  MatrixXd G = MatrixXd(SpMat(A * SpMat(A.transpose())));
  Eigen::LLT<MatrixXd> llt(G);
  if (llt.info() != Eigen::Success)
    throw SingularGram("constraint rows fed to the evidence Gram are dependent");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

// Keep only split rows that stay independent after the projection.  A row of
// A2 whose content modulo span(A1) is a combination of earlier rows adds
// nothing to the constraint surface (the projection plus the earlier rows
// already pin it), but in the pair model its Gram pivot is ~1/kappa computed
// as the difference of 1/eps-scale terms — pure rounding noise.  The affine
// combination of time-sum rows absorbed by the trend-augmented spatial-first
// split is the known instance.
SpMat rows_independent_of_projection(const SpMat& A2, const SpMat& Z) {
  const MatrixXd B = MatrixXd(SpMat(A2 * Z));
  std::vector<int> keep;
  std::vector<VectorXd> basis;
  for (int i = 0; i < B.rows(); ++i) {
    VectorXd r = B.row(i).transpose();
    for (int pass = 0; pass < 2; ++pass)
      for (const VectorXd& u : basis) r -= u.dot(r) * u;
    if (r.norm() > 1e-8 * A2.row(i).norm()) {
      basis.push_back(r / r.norm());
      keep.push_back(i);
    }
  }
  if (static_cast<int>(keep.size()) == A2.rows()) return A2;
  const Eigen::SparseMatrix<double, Eigen::RowMajor> A2r(A2);
  std::vector<Triplet> trips;
  for (size_t r = 0; r < keep.size(); ++r)
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(A2r, keep[r]); it; ++it)
      trips.emplace_back(static_cast<int>(r), static_cast<int>(it.col()), it.value());
  SpMat out(static_cast<int>(keep.size()), A2.cols());
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

}  // namespace

LatentModel build_latent_model(const Graph& g, const ModelConfig& cfg) {
  LatentModel m;
  m.cfg = cfg;
  const int n_T = cfg.n_T;
  const int n_S = g.n_nodes;
  if (cfg.temporal_order != 1 && cfg.temporal_order != 2)
    throw Error("temporal order must be 1 or 2");
  if (cfg.constraints != ConstraintLabel::GC && cfg.constraints != ConstraintLabel::SC)
    throw Error("interaction constraints must be the sum-to-zero or trend-augmented set");
  if (cfg.constraints == ConstraintLabel::SC && cfg.temporal_order != 2)
    throw PolicyInfeasible(
        "the trend-augmented constraint set needs a second order temporal walk: its per-region "
        "trend rows lie outside the first order walk's null space, which breaks the evidence "
        "bookkeeping");

  m.R_alpha = build_rw_structure(n_T, cfg.temporal_order);
  m.R_gamma = build_icar_structure(g);
  if (cfg.scale) {
    m.R_alpha = scale_structure(m.R_alpha, own_null_constraints(n_T, cfg.temporal_order));
    m.R_gamma = scale_structure(m.R_gamma, own_null_constraints(n_S, 1));
  }
  m.R_delta = build_interaction_structure(m.R_alpha, m.R_gamma);

  m.eps_alpha = 1e-6 * geomean_diag(m.R_alpha.matrix);
  m.eps_gamma = 1e-6 * geomean_diag(m.R_gamma.matrix);
  m.eps_delta = 1e-6 * geomean_diag(m.R_delta.matrix);
  m.diag_R_delta = m.R_delta.matrix.diagonal();

  m.delta_raw = (cfg.constraints == ConstraintLabel::GC) ? build_gc_constraints(n_T, n_S)
                                                         : build_sc_constraints(n_T, n_S);
  m.delta_reduced = reduce_to_full_rank(m.delta_raw);
  if (cfg.method == Method::Hymik)
    m.split = split_constraints(m.delta_reduced, n_T, n_S, cfg.split_policy);

  BlockLayout& lay = m.layout;
  lay.n_T = n_T;
  lay.n_S = n_S;
  lay.n_beta = static_cast<int>(cfg.covariates.cols());
  lay.pair = (cfg.method == Method::Hymik);
  if (lay.n_beta > 0 && cfg.covariates.rows() != lay.n_delta())
    throw DimensionMismatch("covariate matrix must have one row per space-time cell");
  const int W = lay.total();

  // per-cell design
  {
    std::vector<Triplet> trips;
    trips.reserve(static_cast<size_t>(lay.n_delta()) * (4 + lay.n_beta));
    for (int t = 0; t < n_T; ++t)
      for (int s = 0; s < n_S; ++s) {
        const int cell = t * n_S + s;
        trips.emplace_back(cell, lay.mu(), 1.0);
        for (int j = 0; j < lay.n_beta; ++j)
          trips.emplace_back(cell, lay.beta() + j, cfg.covariates(cell, j));
        trips.emplace_back(cell, lay.alpha() + t, 1.0);
        trips.emplace_back(cell, lay.gamma() + s, 1.0);
        trips.emplace_back(cell, lay.delta() + cell, 1.0);
      }
    m.design = SpMat(lay.n_delta(), W);
    m.design.setFromTriplets(trips.begin(), trips.end());
    m.design.makeCompressed();
  }

  const bool alpha_trend = (cfg.constraints == ConstraintLabel::SC && cfg.temporal_order == 2);
  m.A_main = main_constraint_rows(lay, alpha_trend);

  m.krig_delta = (cfg.method == Method::Hymik)
                     ? rows_independent_of_projection(m.split.A2, m.split.Z)
                     : (cfg.raw_krig_set ? m.delta_raw.A : m.delta_reduced.A);
  {
    std::vector<Triplet> trips;
    push_shifted(trips, m.A_main, 0, 0);
    push_shifted(trips, m.krig_delta, m.A_main.rows(), lay.delta());
    m.A_krig = SpMat(m.A_main.rows() + m.krig_delta.rows(), W);
    m.A_krig.setFromTriplets(trips.begin(), trips.end());
    m.A_krig.makeCompressed();
  }
  {
    std::vector<Triplet> trips;
    push_shifted(trips, m.A_main, 0, 0);
    push_shifted(trips, m.delta_reduced.A, m.A_main.rows(), lay.delta());
    m.A_check = SpMat(m.A_main.rows() + m.delta_reduced.rows(), W);
    m.A_check.setFromTriplets(trips.begin(), trips.end());
    m.A_check.makeCompressed();
  }

  // prior precision pieces
  {
    std::vector<Triplet> trips;
    for (int i = 0; i < lay.n_fixed(); ++i) trips.emplace_back(i, i, 1e-3);
    for (int t = 0; t < n_T; ++t)
      trips.emplace_back(lay.alpha() + t, lay.alpha() + t, m.eps_alpha);
    for (int s = 0; s < n_S; ++s)
      trips.emplace_back(lay.gamma() + s, lay.gamma() + s, m.eps_gamma);
    const int ridge0 = lay.pair ? lay.delta_star() : lay.delta();
    for (int i = 0; i < lay.n_delta(); ++i)
      trips.emplace_back(ridge0 + i, ridge0 + i, m.eps_delta);
    m.P_fixed = SpMat(W, W);
    m.P_fixed.setFromTriplets(trips.begin(), trips.end());
    m.P_fixed.makeCompressed();
  }
  m.P_alpha = shifted_block(m.R_alpha.matrix, W, W, lay.alpha(), lay.alpha());
  m.P_gamma = shifted_block(m.R_gamma.matrix, W, W, lay.gamma(), lay.gamma());
  m.P_delta = shifted_block(m.R_delta.matrix, W, W, lay.pair ? lay.delta_star() : lay.delta(),
                            lay.pair ? lay.delta_star() : lay.delta());
  if (lay.pair) {
    std::vector<Triplet> trips;
    const int x0 = lay.delta(), s0 = lay.delta_star();
    for (int i = 0; i < lay.n_delta(); ++i) trips.emplace_back(x0 + i, x0 + i, 1.0);
    for (int j = 0; j < m.split.Z.outerSize(); ++j)
      for (SpMat::InnerIterator it(m.split.Z, j); it; ++it) {
        const int i = static_cast<int>(it.row()), jj = static_cast<int>(it.col());
        trips.emplace_back(x0 + i, s0 + jj, -it.value());
        trips.emplace_back(s0 + i, x0 + jj, -it.value());
        trips.emplace_back(s0 + i, s0 + jj, it.value());
      }
    m.P_tie = SpMat(W, W);
    m.P_tie.setFromTriplets(trips.begin(), trips.end());
    m.P_tie.makeCompressed();
  } else {
    m.P_tie = SpMat(W, W);
  }

  // separated coordinates w = x - Z x*: columns of the tied copy pick up the
  // Z image of the interaction columns, the prior tie collapses to kappa I
  if (lay.pair) {
    m.P_pair_ident = SpMat(W, W);
    {
      std::vector<Triplet> trips;
      for (int i = 0; i < lay.n_delta(); ++i)
        trips.emplace_back(lay.delta() + i, lay.delta() + i, 1.0);
      m.P_pair_ident.setFromTriplets(trips.begin(), trips.end());
      m.P_pair_ident.makeCompressed();
    }
    auto to_separated = [&](const SpMat& M) {
      SpMat Mx = M.middleCols(lay.delta(), lay.n_delta());
      SpMat MxZ = SpMat(Mx * m.split.Z);
      std::vector<Triplet> trips;
      trips.reserve(static_cast<size_t>(M.nonZeros() + MxZ.nonZeros()));
      push_shifted(trips, M, 0, 0);
      push_shifted(trips, MxZ, 0, lay.delta_star());
      SpMat out(M.rows(), M.cols());
      out.setFromTriplets(trips.begin(), trips.end());
      out.makeCompressed();
      return out;
    };
    m.design_t = to_separated(m.design);
    m.A_krig_t = to_separated(m.A_krig);
  }

  // evidence bookkeeping: block Gram log-determinants and ridge coefficients.
  // Every kriged row lies in the null space of its block's structure matrix,
  // so Q_eps^-1 A^T = A^T / eps block-wise and the prior Gram is A A^T / eps.
  {
    SpMat A_alpha = own_null_constraints(n_T, alpha_trend ? 2 : 1);
    const double ld_alpha = dense_gram_logdet(A_alpha);
    const double ld_gamma = std::log(static_cast<double>(n_S));
    m.logdet_gram_const = 0.5 * (ld_alpha + ld_gamma);
    m.gram_eps_coeff = -0.5 * (A_alpha.rows() * std::log(m.eps_alpha) + std::log(m.eps_gamma));
    if (cfg.method == Method::Kriging) {
      m.logdet_gram_const += 0.5 * dense_gram_logdet(m.delta_reduced.A);
      m.gram_eps_coeff += -0.5 * m.delta_reduced.rows() * std::log(m.eps_delta);
    } else {
      const SpMat& A2 = m.krig_delta;
      SpMat ZA2t = SpMat(m.split.Z * SpMat(A2.transpose()));
      m.pair_gram_a2 = MatrixXd(SpMat(A2 * SpMat(A2.transpose())));
      m.pair_gram_za2 = MatrixXd(SpMat(A2 * ZA2t));
      m.pair_gram_a2 = 0.5 * (m.pair_gram_a2 + m.pair_gram_a2.transpose()).eval();
      m.pair_gram_za2 = 0.5 * (m.pair_gram_za2 + m.pair_gram_za2.transpose()).eval();
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(m.pair_gram_za2);
      m.pair_eig_s = es.eigenvalues().cwiseMax(0.0);
      m.pair_eig_M = es.eigenvectors().transpose() * m.pair_gram_a2 * es.eigenvectors();
    }
  }
  {
    SpMat none_a(0, n_T), none_g(0, n_S);
    const double pd_alpha = generalized_log_det(m.R_alpha.matrix, none_a);
    const double pd_gamma = generalized_log_det(m.R_gamma.matrix, none_g);
    const int ka = m.R_alpha.rank_deficiency, kg = m.R_gamma.rank_deficiency;
    const double pd_delta = (n_S - kg) * pd_alpha + (n_T - ka) * pd_gamma;
    m.structure_logdet = 0.5 * (pd_alpha + pd_gamma + pd_delta);
  }
  return m;
}

SpMat prior_precision(const LatentModel& m, const Hyperparameters& h) {
  if (!(h.tau_alpha > 0 && h.tau_gamma > 0 && h.tau_delta > 0))
    throw Error("precisions must be positive");
  SpMat Q = m.P_fixed + SpMat(h.tau_alpha * m.P_alpha) + SpMat(h.tau_gamma * m.P_gamma) +
            SpMat(h.tau_delta * m.P_delta);
  if (m.layout.pair) Q = Q + SpMat(kappa_of(m, h.tau_delta) * m.P_tie);
  Q.makeCompressed();
  return Q;
}

SpMat transformed_prior(const LatentModel& m, const Hyperparameters& h) {
  if (!(h.tau_alpha > 0 && h.tau_gamma > 0 && h.tau_delta > 0))
    throw Error("precisions must be positive");
  SpMat Q = m.P_fixed + SpMat(h.tau_alpha * m.P_alpha) + SpMat(h.tau_gamma * m.P_gamma) +
            SpMat(h.tau_delta * m.P_delta) +
            SpMat(kappa_of(m, h.tau_delta) * m.P_pair_ident);
  Q.makeCompressed();
  return Q;
}

double pair_gram_logdet(const LatentModel& m, double kappa) {
  const VectorXd& s = m.pair_eig_s;
  const MatrixXd& M = m.pair_eig_M;
  const int k = static_cast<int>(s.size());
  if (k == 0) return 0.0;
  const double floor = 1e-10 * s.maxCoeff();
  double logdet = 0.0;
  std::vector<int> null_idx;
  for (int i = 0; i < k; ++i) {
    if (s[i] > floor)
      logdet += std::log(s[i] / m.eps_delta + M(i, i) / kappa);
    else
      null_idx.push_back(i);
  }
  if (!null_idx.empty()) {
    // rows of A2 that project to zero are conditioned at the tie scale only;
    // cross terms against the dominant block are O(eps/kappa) and dropped
    const int r = static_cast<int>(null_idx.size());
    MatrixXd Mnn(r, r);
    for (int a = 0; a < r; ++a)
      for (int b = 0; b < r; ++b) Mnn(a, b) = M(null_idx[a], null_idx[b]);
    Eigen::LLT<MatrixXd> llt(Mnn);
    if (llt.info() != Eigen::Success)
      throw SingularGram("projected-out constraint rows are dependent");
    logdet += 2.0 * llt.matrixLLT().diagonal().array().log().sum() - r * std::log(kappa);
  }
  return logdet;
}

double kappa_of(const LatentModel& m, double tau_delta) {
  double mean_log = 0.0;
  const int n = static_cast<int>(m.diag_R_delta.size());
  for (int i = 0; i < n; ++i)
    mean_log += std::log(tau_delta * m.diag_R_delta[i] + m.eps_delta);
  return 1e8 * std::exp(mean_log / n);
}

SpMat observation_design(const LatentModel& m, const ObservationSet& obs) {
  if (obs.n_T != m.layout.n_T || obs.n_S != m.layout.n_S)
    throw DimensionMismatch("observation grid does not match the model");
  if (obs.family != m.cfg.family) throw Error("observation family does not match the model");
  const BlockLayout& lay = m.layout;
  std::vector<Triplet> trips;
  trips.reserve(obs.obs.size() * (4 + lay.n_beta));
  for (size_t i = 0; i < obs.obs.size(); ++i) {
    const int cell = obs.obs[i].cell;
    const int t = cell / lay.n_S, s = cell % lay.n_S;
    const int r = static_cast<int>(i);
    trips.emplace_back(r, lay.mu(), 1.0);
    for (int j = 0; j < lay.n_beta; ++j)
      trips.emplace_back(r, lay.beta() + j, m.cfg.covariates(cell, j));
    trips.emplace_back(r, lay.alpha() + t, 1.0);
    trips.emplace_back(r, lay.gamma() + s, 1.0);
    trips.emplace_back(r, lay.delta() + cell, 1.0);
  }
  SpMat D(static_cast<int>(obs.obs.size()), lay.total());
  D.setFromTriplets(trips.begin(), trips.end());
  D.makeCompressed();
  return D;
}

int theta_dim(const LatentModel& m) { return m.cfg.family == Family::NegBinom ? 4 : 3; }

VectorXd theta_from(const LatentModel& m, const Hyperparameters& h) {
  VectorXd th(theta_dim(m));
  th[0] = std::log(h.tau_alpha);
  th[1] = std::log(h.tau_gamma);
  th[2] = std::log(h.tau_delta);
  if (th.size() == 4) th[3] = std::log(h.dispersion);
  return th;
}

Hyperparameters hyper_from(const LatentModel& m, const VectorXd& theta) {
  if (theta.size() != theta_dim(m)) throw DimensionMismatch("hyperparameter vector length");
  Hyperparameters h;
  h.tau_alpha = std::exp(theta[0]);
  h.tau_gamma = std::exp(theta[1]);
  h.tau_delta = std::exp(theta[2]);
  if (theta.size() == 4) h.dispersion = std::exp(theta[3]);
  return h;
}

}  // namespace hymik
