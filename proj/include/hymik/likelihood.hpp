#pragma once

#include <vector>

#include "hymik/errors.hpp"
#include "hymik/sparse.hpp"

namespace hymik {

enum class Family { Poisson, NegBinom, GaussianInternal };

// One observed count (or, for the internal Gaussian family, one real value)
// attached to a space-time cell; replicates repeat the cell index.
struct Observation {
  int cell = 0;  // time-major: t * n_S + s
  double y = 0.0;
  double E = 1.0;  // exposure / offset multiplier on the mean
};

struct ObservationSet {
  int n_T = 0;
  int n_S = 0;
  Family family = Family::Poisson;
  std::vector<Observation> obs;
  double gaussian_tau = 1.0;  // observation precision, internal family only

  int size() const { return static_cast<int>(obs.size()); }
};

// Throws NegativeCount / Error on invalid counts, exposures, or cell indices.
void validate(const ObservationSet& obs);

// Log-likelihood value and the coefficients of its quadratic expansion at eta:
// g(h) ~= g(eta) + b*h - 0.5*c*h^2 + const, so b = g'(eta) + c*eta and c is
// the negative second derivative (floored at 1e-12).
struct LikTerms {
  VectorXd g;
  VectorXd b;
  VectorXd c;
};

// eta has one entry per observation. phi is the negative-binomial size
// (ignored elsewhere). g drops the eta-independent constants; see
// loglik_constant for those.
LikTerms loglik_terms(const ObservationSet& obs, const VectorXd& eta, double phi);

// The eta-independent part of the exact log-likelihood (per-observation
// normalizing constants; depends on phi for the negative binomial).
double loglik_constant(const ObservationSet& obs, double phi);

}  // namespace hymik
