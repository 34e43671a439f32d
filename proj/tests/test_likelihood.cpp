#include "doctest.h"
#include "hymik/likelihood.hpp"
#include "oracles.hpp"

#include <cmath>
#include <functional>

using namespace hymik;

namespace {

ObservationSet single(Family fam, double y, double E, double tau = 1.0) {
  ObservationSet o;
  o.n_T = 1;
  o.n_S = 1;
  o.family = fam;
  o.obs = {{0, y, E}};
  o.gaussian_tau = tau;
  return o;
}

double fd_deriv(const std::function<double(double)>& f, double x, double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

double fd_curv(const std::function<double(double)>& f, double x, double h = 1e-4) {
  return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
}

}  // namespace

TEST_CASE("poisson terms: pinned values") {
  {
    auto o = single(Family::Poisson, 2.0, 1.0);
    VectorXd eta(1);
    eta << 0.0;
    auto t = loglik_terms(o, eta, 0.0);
    CHECK(t.b[0] - t.c[0] * eta[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(t.c[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(t.b[0] == doctest::Approx(1.0).epsilon(1e-14));
  }
  {
    // per-cell mode eta = log(y/E): derivative vanishes
    auto o = single(Family::Poisson, 4.0, 2.0);
    VectorXd eta(1);
    eta << std::log(2.0);
    auto t = loglik_terms(o, eta, 0.0);
    CHECK(t.b[0] - t.c[0] * eta[0] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(t.c[0] == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(t.b[0] == doctest::Approx(4.0 * std::log(2.0)).epsilon(1e-14));
  }
}

TEST_CASE("negative binomial terms match finite differences") {
  auto o = single(Family::NegBinom, 3.0, 1.0);
  const double phi = 2.0;
  auto g_of = [&](double e) {
    VectorXd eta(1);
    eta << e;
    return loglik_terms(o, eta, phi).g[0];
  };
  VectorXd eta(1);
  eta << 0.0;
  auto t = loglik_terms(o, eta, phi);
  CHECK(t.b[0] - t.c[0] * eta[0] == doctest::Approx(fd_deriv(g_of, 0.0)).epsilon(1e-6));
  CHECK(t.c[0] == doctest::Approx(-fd_curv(g_of, 0.0)).epsilon(1e-6));
}

TEST_CASE("derivative consistency and curvature across a grid") {
  const double ys[] = {0.0, 1.0, 7.0, 40.0};
  const double Es[] = {0.5, 1.0, 10.0};
  const double etas[] = {-2.0, -0.3, 0.0, 1.2, 3.0};
  const double phis[] = {0.7, 2.0, 50.0};
  for (Family fam : {Family::Poisson, Family::NegBinom})
    for (double y : ys)
      for (double E : Es)
        for (double e : etas) {
          for (double phi : phis) {
            auto o = single(fam, y, E);
            auto g_of = [&](double x) {
              VectorXd v(1);
              v << x;
              return loglik_terms(o, v, phi).g[0];
            };
            VectorXd v(1);
            v << e;
            auto t = loglik_terms(o, v, phi);
            const double deriv = t.b[0] - t.c[0] * e;
            const double fd = fd_deriv(g_of, e);
            CHECK(deriv == doctest::Approx(fd).epsilon(1e-6).scale(1.0 + std::abs(fd)));
            CHECK(t.c[0] > 0.0);
            if (fam == Family::Poisson) break;  // phi unused
          }
        }
}

TEST_CASE("negative binomial approaches poisson for large size") {
  const double y = 5.0, E = 2.0, eta = 0.7;
  auto op = single(Family::Poisson, y, E);
  auto on = single(Family::NegBinom, y, E);
  VectorXd v(1);
  v << eta;
  auto tp = loglik_terms(op, v, 0.0);
  auto tn = loglik_terms(on, v, 1e8);
  CHECK(tn.b[0] - tn.c[0] * eta ==
        doctest::Approx(tp.b[0] - tp.c[0] * eta).epsilon(1e-4));
  CHECK(tn.c[0] == doctest::Approx(tp.c[0]).epsilon(1e-4));
}

TEST_CASE("full log-likelihood including constants") {
  {
    // poisson mass function via lgamma
    auto o = single(Family::Poisson, 3.0, 2.0);
    VectorXd v(1);
    v << 0.4;
    const double lambda = 2.0 * std::exp(0.4);
    const double want = 3.0 * std::log(lambda) - lambda - std::lgamma(4.0);
    auto t = loglik_terms(o, v, 0.0);
    CHECK(t.g[0] + loglik_constant(o, 0.0) == doctest::Approx(want).epsilon(1e-12));
  }
  {
    // negative binomial mass function
    const double y = 4.0, E = 1.5, eta = -0.2, phi = 3.0;
    auto o = single(Family::NegBinom, y, E);
    VectorXd v(1);
    v << eta;
    const double mu = E * std::exp(eta);
    const double want = std::lgamma(y + phi) - std::lgamma(phi) - std::lgamma(y + 1.0) +
                        phi * std::log(phi / (mu + phi)) + y * std::log(mu / (mu + phi));
    auto t = loglik_terms(o, v, phi);
    CHECK(t.g[0] + loglik_constant(o, phi) == doctest::Approx(want).epsilon(1e-12));
  }
  {
    // internal gaussian density
    const double y = 1.3, eta = 0.8, tau = 2.5;
    auto o = single(Family::GaussianInternal, y, 1.0, tau);
    VectorXd v(1);
    v << eta;
    const double want =
        0.5 * std::log(tau / (2.0 * M_PI)) - 0.5 * tau * (y - eta) * (y - eta);
    auto t = loglik_terms(o, v, 0.0);
    CHECK(t.g[0] + loglik_constant(o, 0.0) == doctest::Approx(want).epsilon(1e-12));
    CHECK(t.c[0] == tau);
  }
}

TEST_CASE("observation validation and error taxonomy") {
  auto o = single(Family::Poisson, 2.0, 1.0);
  CHECK_NOTHROW(validate(o));
  o.obs[0].y = -1.0;
  CHECK_THROWS_AS(validate(o), NegativeCount);
  o.obs[0].y = 1.5;
  CHECK_THROWS_AS(validate(o), Error);
  o.obs[0].y = 2.0;
  o.obs[0].E = 0.0;
  CHECK_THROWS_AS(validate(o), Error);
  o.obs[0].E = 1.0;
  o.obs[0].cell = 7;
  CHECK_THROWS_AS(validate(o), Error);

  auto ok = single(Family::Poisson, 2.0, 1.0);
  VectorXd bad(1);
  bad << std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(loglik_terms(ok, bad, 0.0), NonFiniteEta);

  auto nb = single(Family::NegBinom, 2.0, 1.0);
  VectorXd fine(1);
  fine << 0.0;
  CHECK_THROWS_AS(loglik_terms(nb, fine, -1.0), InvalidDispersion);
  CHECK_THROWS_AS(loglik_terms(nb, fine, 0.0), InvalidDispersion);

  VectorXd wrong(2);
  wrong << 0.0, 0.0;
  CHECK_THROWS_AS(loglik_terms(ok, wrong, 0.0), DimensionMismatch);
}
