#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hymik/constraints.hpp"
#include "hymik/likelihood.hpp"
#include "hymik/model.hpp"
#include "hymik/sparse.hpp"
#include "hymik/timing.hpp"

namespace hymik {

// Constrained Gaussian approximation of the latent field at fixed
// hyperparameters: Newton iterations on the joint log density with a kriging
// correction applied after every solve, so each iterate is feasible.
//
// The pair method is solved in w = x - Z x* coordinates (the raw joint
// precision spans ~kappa/eps in scale and cannot be factorized reliably);
// chol, krig and their W rows live in those coordinates, while x_hat is
// mapped back to the original ones.
struct GaussianApprox {
  VectorXd x_hat;     // mode, original coordinates
  VectorXd eta_cell;  // linear predictor at the mode, one per space-time cell
  std::optional<CholeskyFactor> chol;  // curvature factor at the mode
  KrigingOp krig;                      // correction operator on that factor
  double gram_logdet = 0.0;  // posterior Gram log det of the evidence rows
  double log_joint = 0.0;    // sum g(eta) - x' Q_prior x / 2 at the mode
  bool converged = false;
  int iterations = 0;  // productive Newton steps (max |delta eta| >= tol)
};

// log prior density of theta: independent log-gamma(1, 5e-5) on each log
// precision, flat on the log dispersion when present.
double log_hyperprior(const LatentModel& m, const VectorXd& theta);

// Laplace evaluation engine bound to one model and data set. Reuses the
// symbolic factorization and warm-starts each Newton run from the previous
// mode; log posterior values are memoized on the exact bits of theta.
class Posterior {
 public:
  Posterior(const LatentModel& m, const ObservationSet& obs, PhaseTimer* timer = nullptr);

  GaussianApprox gaussian_approximation(const Hyperparameters& h);

  // log p(theta | y) up to a constant, with the structure-matrix content of
  // the intrinsic normalizers omitted (restored post hoc by the corrected
  // marginal likelihood). Pass out to keep the Gaussian approximation.
  double log_posterior_theta(const VectorXd& theta, GaussianApprox* out = nullptr);

  int evals() const { return evals_; }
  const LatentModel& model() const { return m_; }
  const ObservationSet& observations() const { return obs_; }

 private:
  const LatentModel& m_;
  const ObservationSet& obs_;
  PhaseTimer* timer_;
  RepeatedCholesky chol_;
  VectorXd warm_;
  bool have_warm_ = false;
  std::map<std::vector<std::uint64_t>, double> memo_;
  int evals_ = 0;
};

struct ThetaPoint {
  VectorXd theta;
  double lp = 0.0;
  double weight = 0.0;
};

struct Exploration {
  VectorXd theta_mode;
  double lp_mode = 0.0;
  MatrixXd neg_hessian;  // finite-difference -H at the mode, clamped
  MatrixXd scale;        // S with S S^T = neg_hessian^-1
  std::vector<ThetaPoint> grid;  // kept design points, weights sum to one
  double evidence_raw = 0.0;     // Laplace over theta at the mode
  int evals = 0;
  std::vector<std::string> warnings;
};

// BFGS ascent with forward-difference gradients, then a central-composite
// design around the mode scaled by the finite-difference curvature. Throws
// OptimizerStalled after 200 posterior evaluations in the ascent phase.
Exploration explore_hyperparameters(Posterior& post);

struct HyperSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
};

struct FitResult {
  Method method = Method::Kriging;
  VectorXd latent_mean;  // reported latent prefix, mixture over the grid
  VectorXd latent_sd;
  std::vector<HyperSummary> hyper;  // natural-scale grid-mixture summaries
  double avg_marginal_loglik = 0.0;
  double evidence_raw = 0.0;
  VectorXd theta_mode;
  bool converged = true;
  bool constraints_ok = true;
  int theta_evals = 0;
  int clamped_variances = 0;
  std::vector<std::string> warnings;
  std::map<std::string, double> phase_seconds;
  double total_seconds = 0.0;
};

// Full pipeline: exploration, grid mixture of Gaussian marginals, hyper
// summaries, corrected average marginal log likelihood, constraint check.
FitResult fit_model(const LatentModel& m, const ObservationSet& obs, PhaseTimer* timer = nullptr);

}  // namespace hymik
