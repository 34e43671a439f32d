#pragma once

#include "hymik/constraints.hpp"
#include "hymik/gmrf.hpp"
#include "hymik/likelihood.hpp"

namespace hymik {

enum class Method { Kriging, Hymik };

// Precisions on the natural scale; optimization happens on logs.
struct Hyperparameters {
  double tau_alpha = 1.0;
  double tau_gamma = 1.0;
  double tau_delta = 1.0;
  double dispersion = 1.0;  // negative-binomial size, unused elsewhere
};

// Latent vector layout: [intercept | fixed effects | temporal | spatial |
// interaction (| interaction copy for the projected pair)].
struct BlockLayout {
  int n_beta = 0;
  int n_T = 0;
  int n_S = 0;
  bool pair = false;

  int mu() const { return 0; }
  int beta() const { return 1; }
  int alpha() const { return 1 + n_beta; }
  int gamma() const { return alpha() + n_T; }
  int delta() const { return gamma() + n_S; }  // x block when paired
  int delta_star() const { return delta() + n_T * n_S; }
  int n_delta() const { return n_T * n_S; }
  int n_fixed() const { return 1 + n_beta; }
  // entries reported to the user (excludes the pair's auxiliary copy)
  int n_reported() const { return delta() + n_delta(); }
  int total() const { return delta() + (pair ? 2 : 1) * n_delta(); }
};

struct ModelConfig {
  int n_T = 0;
  int temporal_order = 1;
  Family family = Family::Poisson;
  ConstraintLabel constraints = ConstraintLabel::GC;
  Method method = Method::Kriging;
  SplitPolicy split_policy = SplitPolicy::Auto;
  bool scale = false;          // scale structure matrices before fitting
  bool raw_krig_set = false;   // feed the overdetermined interaction set to kriging
  MatrixXd covariates;         // n_cells x p, optional (0 columns)
  double gaussian_tau = 1.0;   // internal Gaussian family only
};

struct LatentModel {
  ModelConfig cfg;
  BlockLayout layout;

  StructureMatrix R_alpha, R_gamma, R_delta;
  double eps_alpha = 0.0, eps_gamma = 0.0, eps_delta = 0.0;

  ConstraintSet delta_raw;      // as stacked
  ConstraintSet delta_reduced;  // full rank
  HymikSplit split;             // pair method only

  SpMat design;  // one row per cell, time-major

  // Interaction rows fed to the kriging step.  Standard method: the reduced
  // (or raw, when requested) set.  Pair method: the split's residual rows,
  // minus any row the projection already enforces — a row whose content lies
  // in span(A1) would contribute a Gram pivot of order 1/kappa made entirely
  // of cancellation noise.
  SpMat krig_delta;

  SpMat A_main;   // main-effect constraint rows at full latent width
  SpMat A_krig;   // A_main + krig_delta rows, kriged every Newton iteration
  SpMat A_check;  // mains + reduced interaction set, for satisfaction checks

  // Pair method only: the same objects expressed in w = x - Z x* coordinates,
  // where the tie block of the prior is exactly diagonal.  The raw pair
  // precision spans ~kappa/eps in scale, so its determinant content on the
  // eps directions drowns in rounding; every log-determinant is taken in
  // these separated coordinates instead.
  SpMat design_t;
  SpMat A_krig_t;
  SpMat P_pair_ident;  // identity on the tied copy, lifted to full width

  // prior precision pieces: Q(tau) = P_fixed + tau_a P_alpha + tau_g P_gamma
  //                                  + tau_d P_delta + kappa(tau_d) P_tie
  SpMat P_fixed, P_alpha, P_gamma, P_delta, P_tie;

  // cached evidence bookkeeping
  VectorXd diag_R_delta;            // diagonal of R_delta, for the tie weight
  double logdet_gram_const = 0.0;   // sum_b 0.5 log|A_b A_b^T| over kriged blocks (mains
                                    // + interaction for the standard method)
  double gram_eps_coeff = 0.0;      // sum_b -(K_b/2) log eps_b over those blocks
  MatrixXd pair_gram_a2;            // B B^T over B = krig_delta rows (pair method)
  MatrixXd pair_gram_za2;           // B Z B^T over the same rows
  VectorXd pair_eig_s;              // eigenvalues of B Z B^T, ascending
  MatrixXd pair_eig_M;              // B B^T rotated into that eigenbasis
  double structure_logdet = 0.0;    // sum_b 0.5 log|R_b|_+ over intrinsic blocks

  int n_latent() const { return layout.total(); }
  int n_cells() const { return layout.n_delta(); }
};

LatentModel build_latent_model(const Graph& g, const ModelConfig& cfg);

// Block-diagonal prior precision at the given hyperparameters (ridge included).
SpMat prior_precision(const LatentModel& m, const Hyperparameters& h);

// The same prior in w = x - Z x* coordinates (pair method only): the tie
// block collapses to kappa I and no kappa-scale product ever touches Z, so
// the assembled matrix is numerically block diagonal across scales.
SpMat transformed_prior(const LatentModel& m, const Hyperparameters& h);

// Tie precision for the projected pair; grows with the block's scale so the
// x = Z x* identity stays uniformly stiff.
double kappa_of(const LatentModel& m, double tau_delta);

// log det of the pair prior Gram B (kappa^-1 I + Z Q_eps^-1 Z) B^T over the
// kriged rows B = krig_delta, i.e. B B^T / kappa + B Z B^T / eps_delta,
// evaluated in the eigenbasis of the second term so the two widely separated
// scales do not mix.
double pair_gram_logdet(const LatentModel& m, double kappa);

// One design row per observation (replicates repeat their cell's row).
SpMat observation_design(const LatentModel& m, const ObservationSet& obs);

// log-hyperparameter vector: (log tau_alpha, log tau_gamma, log tau_delta
// [, log dispersion for the negative binomial]).
int theta_dim(const LatentModel& m);
VectorXd theta_from(const LatentModel& m, const Hyperparameters& h);
Hyperparameters hyper_from(const LatentModel& m, const VectorXd& theta);

}  // namespace hymik
