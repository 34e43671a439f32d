#include "hymik/likelihood.hpp"

#include <cmath>
#include <string>

namespace hymik {

namespace {
constexpr double kCurvatureFloor = 1e-12;
}

void validate(const ObservationSet& obs) {
  if (obs.n_T < 1 || obs.n_S < 1) throw Error("observation set needs positive grid dimensions");
  const int ncell = obs.n_T * obs.n_S;
  const bool counts = (obs.family != Family::GaussianInternal);
  for (size_t i = 0; i < obs.obs.size(); ++i) {
    const Observation& o = obs.obs[i];
    if (o.cell < 0 || o.cell >= ncell)
      throw Error("observation " + std::to_string(i) + " addresses cell " + std::to_string(o.cell) +
                  " outside the " + std::to_string(ncell) + "-cell grid");
    if (!std::isfinite(o.y) || !std::isfinite(o.E))
      throw Error("observation " + std::to_string(i) + " is not finite");
    if (counts) {
      if (o.y < 0.0)
        throw NegativeCount("observation " + std::to_string(i) + " has count " + std::to_string(o.y));
      if (o.y != std::floor(o.y))
        throw Error("observation " + std::to_string(i) + " has non-integral count");
      if (o.E <= 0.0)
        throw Error("observation " + std::to_string(i) + " has non-positive exposure");
    }
  }
  if (obs.family == Family::GaussianInternal && obs.gaussian_tau <= 0.0)
    throw Error("gaussian observation precision must be positive");
}

LikTerms loglik_terms(const ObservationSet& obs, const VectorXd& eta, double phi) {
  const int m = obs.size();
  if (eta.size() != m) throw DimensionMismatch("eta length does not match the observation count");
  for (int i = 0; i < m; ++i)
    if (!std::isfinite(eta[i]))
      throw NonFiniteEta("linear predictor entry " + std::to_string(i) + " is not finite");
  if (obs.family == Family::NegBinom && !(phi > 0.0 && std::isfinite(phi)))
    throw InvalidDispersion("negative-binomial size must be positive and finite");

  LikTerms out;
  out.g.resize(m);
  out.b.resize(m);
  out.c.resize(m);
  switch (obs.family) {
    case Family::Poisson:
      for (int i = 0; i < m; ++i) {
        const double mu = obs.obs[i].E * std::exp(eta[i]);
        const double deriv = obs.obs[i].y - mu;
        const double c = std::max(mu, kCurvatureFloor);
        out.g[i] = obs.obs[i].y * eta[i] - mu;
        out.c[i] = c;
        out.b[i] = deriv + c * eta[i];
      }
      break;
    case Family::NegBinom:
      for (int i = 0; i < m; ++i) {
        const double y = obs.obs[i].y;
        const double mu = obs.obs[i].E * std::exp(eta[i]);
        const double deriv = y - (y + phi) * mu / (mu + phi);
        const double c = std::max((y + phi) * phi * mu / ((mu + phi) * (mu + phi)), kCurvatureFloor);
        out.g[i] = y * std::log(mu) - (y + phi) * std::log(mu + phi);
        out.c[i] = c;
        out.b[i] = deriv + c * eta[i];
      }
      break;
    case Family::GaussianInternal: {
      const double tau = obs.gaussian_tau;
      for (int i = 0; i < m; ++i) {
        const double r = obs.obs[i].y - eta[i];
        out.g[i] = -0.5 * tau * r * r;
        out.c[i] = tau;
        out.b[i] = tau * r + tau * eta[i];
      }
      break;
    }
  }
  return out;
}

double loglik_constant(const ObservationSet& obs, double phi) {
  double c = 0.0;
  switch (obs.family) {
    case Family::Poisson:
      for (const Observation& o : obs.obs) {
        if (o.y > 0.0) c += o.y * std::log(o.E);
        c -= std::lgamma(o.y + 1.0);
      }
      break;
    case Family::NegBinom:
      if (!(phi > 0.0 && std::isfinite(phi)))
        throw InvalidDispersion("negative-binomial size must be positive and finite");
      for (const Observation& o : obs.obs)
        c += std::lgamma(o.y + phi) - std::lgamma(phi) - std::lgamma(o.y + 1.0) +
             phi * std::log(phi);
      break;
    case Family::GaussianInternal:
      c = 0.5 * obs.size() *
          (std::log(obs.gaussian_tau) - std::log(2.0 * 3.14159265358979323846));
      break;
  }
  return c;
}

}  // namespace hymik
