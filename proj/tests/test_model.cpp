#include <cmath>
#include <vector>

#include "doctest.h"
#include "hymik/model.hpp"
#include "hymik/rng.hpp"
#include "oracles.hpp"

using namespace hymik;

namespace {

Graph path_graph(int n) {
  Graph g;
  g.n_nodes = n;
  g.adjacency.resize(n);
  for (int i = 0; i + 1 < n; ++i) {
    g.adjacency[i].push_back(i + 1);
    g.adjacency[i + 1].push_back(i);
  }
  return g;
}

Graph grid_graph(int rows, int cols) {
  Graph g;
  g.n_nodes = rows * cols;
  g.adjacency.resize(g.n_nodes);
  auto id = [cols](int r, int c) { return r * cols + c; };
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (c + 1 < cols) {
        g.adjacency[id(r, c)].push_back(id(r, c + 1));
        g.adjacency[id(r, c + 1)].push_back(id(r, c));
      }
      if (r + 1 < rows) {
        g.adjacency[id(r, c)].push_back(id(r + 1, c));
        g.adjacency[id(r + 1, c)].push_back(id(r, c));
      }
    }
  return g;
}

ModelConfig base_config(int n_T, Method method, ConstraintLabel label = ConstraintLabel::GC,
                        int order = 1) {
  ModelConfig cfg;
  cfg.n_T = n_T;
  cfg.temporal_order = order;
  cfg.family = Family::Poisson;
  cfg.constraints = label;
  cfg.method = method;
  return cfg;
}

MatrixXd dense(const SpMat& a) { return MatrixXd(a); }

}  // namespace

TEST_CASE("latent layout matches the pinned dimension examples") {
  {
    LatentModel m = build_latent_model(grid_graph(17, 32), base_config(10, Method::Kriging));
    CHECK(m.layout.n_S == 544);
    CHECK(m.layout.total() == 5995);  // 1 + 10 + 544 + 5440
    CHECK(m.layout.n_reported() == 5995);
    CHECK(m.design.rows() == 5440);
    CHECK(m.design.cols() == 5995);
  }
  {
    LatentModel m = build_latent_model(grid_graph(17, 32), base_config(10, Method::Hymik));
    CHECK(m.layout.total() == 11435);  // pair doubles the interaction block
    CHECK(m.layout.n_reported() == 5995);
    CHECK(m.layout.delta_star() == 5995);
    CHECK(m.split.policy == SplitPolicy::SpatialFirst);
  }
  {
    LatentModel m = build_latent_model(path_graph(11), base_config(500, Method::Kriging));
    CHECK(m.design.rows() == 5500);
    CHECK(m.layout.total() == 1 + 500 + 11 + 5500);
  }
}

TEST_CASE("design rows reproduce the linear predictor cell by cell") {
  ModelConfig cfg = base_config(3, Method::Kriging);
  cfg.covariates = MatrixXd(12, 2);
  NormalSampler rng(77);
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 2; ++j) cfg.covariates(i, j) = rng.normal();
  LatentModel m = build_latent_model(path_graph(4), cfg);
  const BlockLayout& lay = m.layout;
  CHECK(lay.n_beta == 2);
  CHECK(lay.total() == 1 + 2 + 3 + 4 + 12);
  for (int rep = 0; rep < 100; ++rep) {
    VectorXd x(lay.total());
    for (int i = 0; i < x.size(); ++i) x[i] = rng.normal();
    VectorXd eta = m.design * x;
    for (int t = 0; t < 3; ++t)
      for (int s = 0; s < 4; ++s) {
        const int cell = t * 4 + s;
        double want = x[lay.mu()] + cfg.covariates(cell, 0) * x[lay.beta()] +
                      cfg.covariates(cell, 1) * x[lay.beta() + 1] + x[lay.alpha() + t] +
                      x[lay.gamma() + s] + x[lay.delta() + cell];
        CHECK(std::abs(eta[cell] - want) < 1e-12);
      }
  }
}

TEST_CASE("observation design equals the cell design for a full grid in order") {
  LatentModel m = build_latent_model(path_graph(3), base_config(4, Method::Kriging));
  ObservationSet obs;
  obs.n_T = 4;
  obs.n_S = 3;
  obs.family = Family::Poisson;
  for (int cell = 0; cell < 12; ++cell) obs.obs.push_back({cell, 1.0, 2.0});
  SpMat D = observation_design(m, obs);
  CHECK(max_abs(SpMat(D - m.design)) == 0.0);

  ObservationSet wrong = obs;
  wrong.n_S = 4;
  CHECK_THROWS_AS(observation_design(m, wrong), DimensionMismatch);
}

TEST_CASE("prior precision is block diagonal with ridged structure blocks") {
  LatentModel m = build_latent_model(path_graph(2), base_config(3, Method::Kriging));
  Hyperparameters h;  // all precisions 1
  MatrixXd Q = dense(prior_precision(m, h));
  const BlockLayout& lay = m.layout;
  CHECK(lay.total() == 12);

  MatrixXd expect = MatrixXd::Zero(12, 12);
  expect(0, 0) = 1e-3;
  expect.block(lay.alpha(), lay.alpha(), 3, 3) =
      dense(m.R_alpha.matrix) + m.eps_alpha * MatrixXd::Identity(3, 3);
  expect.block(lay.gamma(), lay.gamma(), 2, 2) =
      dense(m.R_gamma.matrix) + m.eps_gamma * MatrixXd::Identity(2, 2);
  expect.block(lay.delta(), lay.delta(), 6, 6) =
      dense(m.R_delta.matrix) + m.eps_delta * MatrixXd::Identity(6, 6);
  CHECK((Q - expect).cwiseAbs().maxCoeff() < 1e-15);

  // ridge sizes follow the block diagonals
  CHECK(m.eps_alpha == doctest::Approx(1e-6 * std::pow(2.0, 1.0 / 3.0)).epsilon(1e-12));
  CHECK(m.eps_gamma == doctest::Approx(1e-6).epsilon(1e-12));

  // doubling tau_delta adds exactly one more copy of the interaction structure
  Hyperparameters h2 = h;
  h2.tau_delta = 2.0;
  SpMat diff = SpMat(prior_precision(m, h2) - prior_precision(m, h));
  CHECK(max_abs(SpMat(diff - m.P_delta)) < 1e-15);

  // perturbing tau_alpha touches only the temporal block
  Hyperparameters h3 = h;
  h3.tau_alpha = 3.0;
  MatrixXd d3 = dense(prior_precision(m, h3)) - Q;
  MatrixXd mask = d3;
  mask.block(lay.alpha(), lay.alpha(), 3, 3).setZero();
  CHECK(mask.cwiseAbs().maxCoeff() == 0.0);
  CHECK((d3.block(lay.alpha(), lay.alpha(), 3, 3) - 2.0 * dense(m.R_alpha.matrix))
            .cwiseAbs()
            .maxCoeff() < 1e-15);
}

TEST_CASE("prior precision log determinant agrees with a dense oracle") {
  LatentModel m = build_latent_model(path_graph(2), base_config(3, Method::Kriging));
  Hyperparameters h;
  h.tau_alpha = 2.5;
  h.tau_gamma = 0.7;
  h.tau_delta = 1.3;
  SpMat Q = prior_precision(m, h);
  CholeskyFactor F = CholeskyFactor::compute(Q);
  double want = oracle::logdet_spd(oracle::from_eigen(Q));
  CHECK(F.log_det() == doctest::Approx(want).epsilon(1e-8));
}

TEST_CASE("pair prior marginalizes to the ridged interaction precision") {
  for (ConstraintLabel label : {ConstraintLabel::GC, ConstraintLabel::SC}) {
    ModelConfig cfg = base_config(4, Method::Hymik, label, 2);
    LatentModel m = build_latent_model(path_graph(5), cfg);
    Hyperparameters h;
    h.tau_delta = 1.7;
    const double kappa = kappa_of(m, h.tau_delta);
    MatrixXd Q = dense(prior_precision(m, h));
    const BlockLayout& lay = m.layout;
    const int nd = lay.n_delta();
    MatrixXd Qxx = Q.block(lay.delta(), lay.delta(), nd, nd);
    MatrixXd Qxs = Q.block(lay.delta(), lay.delta_star(), nd, nd);
    MatrixXd Qss = Q.block(lay.delta_star(), lay.delta_star(), nd, nd);
    CHECK((Qxx - kappa * MatrixXd::Identity(nd, nd)).cwiseAbs().maxCoeff() == 0.0);

    MatrixXd schur = Qss - Qxs.transpose() * Qxx.inverse() * Qxs;
    MatrixXd Qeps = h.tau_delta * dense(m.R_delta.matrix) +
                    m.eps_delta * MatrixXd::Identity(nd, nd);
    double scale = Qeps.cwiseAbs().maxCoeff();
    CHECK((schur - Qeps).cwiseAbs().maxCoeff() < 1e-6 * scale);

    // the cross coupling must vanish outside the pair
    MatrixXd off = Q.block(0, lay.delta(), lay.delta(), nd);
    CHECK(off.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("tie weight follows the interaction precision diagonal") {
  LatentModel m = build_latent_model(path_graph(2), base_config(3, Method::Hymik));
  // diag(R_delta) = kron((1,2,1), (1,1)) = (1,1,2,2,1,1)
  const double eps = m.eps_delta;
  const double tau = 2.0;
  double want = 1e8 * std::exp((4.0 * std::log(2.0 + eps) + 2.0 * std::log(4.0 + eps)) / 6.0);
  CHECK(kappa_of(m, tau) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("constraint matrices carry the main effect rows plus the interaction set") {
  {  // kriging, reduced interaction set
    LatentModel m = build_latent_model(path_graph(5), base_config(4, Method::Kriging));
    CHECK(m.A_main.rows() == 2);
    CHECK(m.A_krig.rows() == 2 + 8);   // reduced set has n_T + n_S - 1 rows
    CHECK(m.A_check.rows() == 2 + 8);
    CHECK(m.A_krig.cols() == m.layout.total());
    // alpha sum row then gamma sum row
    VectorXd x = VectorXd::Zero(m.layout.total());
    for (int t = 0; t < 4; ++t) x[m.layout.alpha() + t] = 1.0;
    VectorXd r = m.A_main * x;
    CHECK(r[0] == 4.0);
    CHECK(r[1] == 0.0);
  }
  {  // raw interaction set kept for the correction step
    ModelConfig cfg = base_config(4, Method::Kriging);
    cfg.raw_krig_set = true;
    LatentModel m = build_latent_model(path_graph(5), cfg);
    CHECK(m.A_krig.rows() == 2 + 9);
    CHECK(m.A_check.rows() == 2 + 8);
  }
  {  // pair method kriges only the residual split block
    LatentModel m = build_latent_model(path_graph(5), base_config(4, Method::Hymik));
    CHECK(m.split.policy == SplitPolicy::SpatialFirst);
    CHECK(m.A_krig.rows() == 2 + 3);  // k2 = n_T - 1
    CHECK(m.A_check.rows() == 2 + 8);
    // split rows act on the mixed block, not the smoothed copy
    for (int j = m.layout.delta_star(); j < m.layout.total(); ++j)
      for (SpMat::InnerIterator it(m.A_krig, j); it; ++it) CHECK(false);
  }
  {  // trend-augmented set with a second order walk adds the temporal trend row
    ModelConfig cfg = base_config(4, Method::Kriging, ConstraintLabel::SC, 2);
    LatentModel m = build_latent_model(path_graph(5), cfg);
    CHECK(m.A_main.rows() == 3);
    VectorXd x = VectorXd::Zero(m.layout.total());
    for (int t = 0; t < 4; ++t) x[m.layout.alpha() + t] = static_cast<double>(t);
    VectorXd r = m.A_main * x;
    CHECK(r[0] == 6.0);
    CHECK(r[1] == 20.0);  // 1*0 + 2*1 + 3*2 + 4*3
    // the trend rows live in the null space of a second order walk only
    ModelConfig cfg1 = base_config(4, Method::Kriging, ConstraintLabel::SC, 1);
    CHECK_THROWS_AS(build_latent_model(path_graph(5), cfg1), PolicyInfeasible);
  }
  {  // trend-augmented pair drops the one split row the projection absorbs
    ModelConfig cfg = base_config(4, Method::Hymik, ConstraintLabel::SC, 2);
    LatentModel m = build_latent_model(path_graph(5), cfg);
    CHECK(m.split.policy == SplitPolicy::SpatialFirst);
    CHECK(m.split.A2.rows() == 3);      // split shape is pinned at n_T - 1
    CHECK(m.krig_delta.rows() == 2);    // one combination lies in span(A1)
    CHECK(m.A_krig.rows() == 3 + 2);
    CHECK(m.A_check.rows() == 3 + 12);  // reduced set keeps n_T + 2 n_S - 2 rows

    // the dropped direction is still enforced: anything annihilated by the
    // projection block and the kept rows is annihilated by the full split
    MatrixXd stacked(m.split.A1.rows() + m.krig_delta.rows(), m.layout.n_delta());
    stacked << dense(m.split.A1), dense(m.krig_delta);
    MatrixXd null_basis = Eigen::FullPivLU<MatrixXd>(stacked).kernel();
    CHECK((dense(m.split.A2) * null_basis).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("pair evidence caches describe grams of the kriged null space rows") {
  for (ConstraintLabel label : {ConstraintLabel::GC, ConstraintLabel::SC})
    for (SplitPolicy pol : {SplitPolicy::SpatialFirst, SplitPolicy::TemporalFirst}) {
      ModelConfig cfg = base_config(4, Method::Hymik, label, 2);
      cfg.split_policy = pol;
      LatentModel m = build_latent_model(path_graph(5), cfg);
      const SpMat& A2 = m.krig_delta;
      // only the trend-augmented spatial-first split sheds a row
      const bool sheds = (label == ConstraintLabel::SC && pol == SplitPolicy::SpatialFirst);
      CHECK(A2.rows() == m.split.A2.rows() - (sheds ? 1 : 0));
      MatrixXd ZA2t = dense(m.split.Z) * dense(A2).transpose();
      CHECK((m.pair_gram_a2 - dense(A2) * dense(A2).transpose()).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((m.pair_gram_za2 - dense(A2) * ZA2t).cwiseAbs().maxCoeff() < 1e-12);
      // the projected gram must be strictly positive definite: pivots of
      // order 1/kappa are exactly what the kriged-row filter removes
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(m.pair_gram_za2);
      CHECK(es.eigenvalues().minCoeff() > 1e-8 * es.eigenvalues().maxCoeff());
      // projected rows stay inside the structure null space, which is what
      // lets the prior gram be assembled from these two small matrices
      MatrixXd resid = dense(m.R_delta.matrix) * ZA2t;
      CHECK(resid.cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("structure log determinant cache matches a dense pseudo determinant") {
  ModelConfig cfg = base_config(4, Method::Kriging, ConstraintLabel::GC, 2);
  LatentModel m = build_latent_model(path_graph(5), cfg);
  double want = 0.5 * (oracle::pseudo_logdet(oracle::from_eigen(m.R_alpha.matrix)) +
                       oracle::pseudo_logdet(oracle::from_eigen(m.R_gamma.matrix)) +
                       oracle::pseudo_logdet(oracle::from_eigen(m.R_delta.matrix)));
  CHECK(m.structure_logdet == doctest::Approx(want).epsilon(1e-8));
}

namespace {
// geometric mean of the pseudo-inverse diagonal, the quantity scaling pins to 1
double geomean_pinv_diag(const SpMat& R) {
  oracle::DMat V;
  auto w = oracle::jacobi_eigen(oracle::from_eigen(R), &V);
  const int n = static_cast<int>(w.size());
  double mean_log = 0.0;
  for (int i = 0; i < n; ++i) {
    double sii = 0.0;
    for (int j = 0; j < n; ++j)
      if (w[j] > 1e-8 * w.back()) sii += V.at(i, j) * V.at(i, j) / w[j];
    mean_log += std::log(sii);
  }
  return std::exp(mean_log / n);
}
}  // namespace

TEST_CASE("scaled structures have unit typical marginal variance") {
  ModelConfig cfg = base_config(5, Method::Kriging, ConstraintLabel::GC, 2);
  cfg.scale = true;
  LatentModel m = build_latent_model(grid_graph(2, 3), cfg);
  CHECK(m.R_alpha.scaled);
  CHECK(m.R_gamma.scaled);
  CHECK(geomean_pinv_diag(m.R_alpha.matrix) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(geomean_pinv_diag(m.R_gamma.matrix) == doctest::Approx(1.0).epsilon(1e-6));
  // the interaction inherits the property through the product structure
  CHECK(geomean_pinv_diag(m.R_delta.matrix) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("hyperparameter packing round trips and checks lengths") {
  LatentModel m = build_latent_model(path_graph(3), base_config(3, Method::Kriging));
  CHECK(theta_dim(m) == 3);
  Hyperparameters h;
  h.tau_alpha = 12.0;
  h.tau_gamma = 0.25;
  h.tau_delta = 900.0;
  VectorXd th = theta_from(m, h);
  Hyperparameters back = hyper_from(m, th);
  CHECK(back.tau_alpha == doctest::Approx(12.0).epsilon(1e-14));
  CHECK(back.tau_gamma == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(back.tau_delta == doctest::Approx(900.0).epsilon(1e-14));
  CHECK_THROWS_AS(hyper_from(m, VectorXd::Zero(4)), DimensionMismatch);

  ModelConfig nb = base_config(3, Method::Kriging);
  nb.family = Family::NegBinom;
  LatentModel mnb = build_latent_model(path_graph(3), nb);
  CHECK(theta_dim(mnb) == 4);
  h.dispersion = 7.0;
  CHECK(hyper_from(mnb, theta_from(mnb, h)).dispersion == doctest::Approx(7.0).epsilon(1e-14));
}

TEST_CASE("model construction validates shapes") {
  ModelConfig cfg = base_config(3, Method::Kriging);
  cfg.covariates = MatrixXd::Ones(7, 1);  // grid has 3*4 = 12 cells
  CHECK_THROWS_AS(build_latent_model(path_graph(4), cfg), DimensionMismatch);
  ModelConfig bad = base_config(3, Method::Kriging);
  bad.temporal_order = 3;
  CHECK_THROWS_AS(build_latent_model(path_graph(4), bad), Error);
  LatentModel m = build_latent_model(path_graph(4), base_config(3, Method::Kriging));
  Hyperparameters h;
  h.tau_alpha = -1.0;
  CHECK_THROWS_AS(prior_precision(m, h), Error);
}
