#include "hymik/inference.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>

namespace hymik {

namespace {

constexpr double kHyperRate = 5e-5;      // log-gamma rate on each log precision
constexpr double kNewtonTol = 1e-6;      // max |delta eta| convergence
constexpr int kNewtonMax = 50;
constexpr int kMaxHalvings = 10;
constexpr double kGradStep = 1e-3;       // forward-difference gradient
constexpr double kAscentTol = 1e-4;      // stop when |delta lp| falls below
constexpr int kMaxEvals = 200;           // ascent-phase evaluation budget
constexpr double kHessStep = 0.05;       // central-difference Hessian
constexpr double kEigenFloor = 1e-4;     // curvature clamp in theta space
constexpr double kCcdRadius = 0.75;      // standardized design radius
constexpr double kKeepWindow = 6.0;      // drop points this far below the max
constexpr int kExactDiagLimit = 20000;   // Takahashi size cutoff
constexpr int kDiagSamples = 600;
constexpr double kLog2Pi = 1.8378770664093454836;

// RAII phase scope that is inert when no timer is attached
struct MaybeScope {
  std::optional<PhaseTimer::Scope> s;
  MaybeScope(PhaseTimer* t, const char* name) {
    if (t) s.emplace(*t, name);
  }
};

std::vector<std::uint64_t> bit_key(const VectorXd& theta) {
  std::vector<std::uint64_t> key(theta.size());
  std::memcpy(key.data(), theta.data(), sizeof(double) * theta.size());
  return key;
}

VectorXd eta_per_obs(const ObservationSet& obs, const VectorXd& eta_cell) {
  VectorXd e(static_cast<Eigen::Index>(obs.obs.size()));
  for (size_t i = 0; i < obs.obs.size(); ++i) e[static_cast<Eigen::Index>(i)] = eta_cell[obs.obs[i].cell];
  return e;
}

}  // namespace

double log_hyperprior(const LatentModel& m, const VectorXd& theta) {
  if (theta.size() != theta_dim(m)) throw DimensionMismatch("hyperparameter vector length");
  double lp = 0.0;
  for (int i = 0; i < 3; ++i)
    lp += theta[i] - kHyperRate * std::exp(theta[i]) + std::log(kHyperRate);
  return lp;  // flat on the log dispersion
}

Posterior::Posterior(const LatentModel& m, const ObservationSet& obs, PhaseTimer* timer)
    : m_(m), obs_(obs), timer_(timer) {
  validate(obs_);
  if (obs_.n_T != m_.layout.n_T || obs_.n_S != m_.layout.n_S || obs_.family != m_.cfg.family)
    throw DimensionMismatch("observation set does not match the model");
}

GaussianApprox Posterior::gaussian_approximation(const Hyperparameters& h) {
  const BlockLayout& lay = m_.layout;
  const int n = lay.total();
  const int n_cells = lay.n_delta();
  // The pair runs in w = x - Z x* coordinates throughout: the raw joint
  // precision spans ~kappa/eps in scale, so its factor pivots on the ridge
  // directions drown in rounding (and can even turn negative), while the
  // separated assembly never multiplies kappa into Z. The quadratic form,
  // the constraints, and the per-cell linear predictor are all invariant.
  const SpMat& design = lay.pair ? m_.design_t : m_.design;
  const SpMat& A_krig = lay.pair ? m_.A_krig_t : m_.A_krig;
  const SpMat Qp = lay.pair ? transformed_prior(m_, h) : prior_precision(m_, h);
  const bool redundant_set = (m_.cfg.method == Method::Kriging && m_.cfg.raw_krig_set);

  GaussianApprox ga;
  VectorXd x = (have_warm_ && warm_.size() == n) ? warm_ : VectorXd::Zero(n);

  VectorXd eta_cell = design * x;
  LikTerms terms = loglik_terms(obs_, eta_per_obs(obs_, eta_cell), h.dispersion);
  double f = terms.g.sum() - 0.5 * x.dot(Qp * x);

  int productive = 0;
  for (int iter = 0; iter < kNewtonMax; ++iter) {
    VectorXd b_cell = VectorXd::Zero(n_cells);
    VectorXd c_cell = VectorXd::Zero(n_cells);
    for (size_t i = 0; i < obs_.obs.size(); ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(i);
      b_cell[obs_.obs[i].cell] += terms.b[r];
      c_cell[obs_.obs[i].cell] += terms.c[r];
    }

    VectorXd x_prop;
    {
      MaybeScope sc(timer_, "factorization");
      SpMat Qt = Qp + SpMat(design.transpose() * c_cell.asDiagonal() * design);
      if (!chol_.analyzed()) chol_.analyze(Qt);
      ga.chol = chol_.factorize(Qt);
      x_prop = ga.chol->solve(design.transpose() * b_cell);
    }
    VectorXd x_new;
    {
      MaybeScope sc(timer_, "kriging_correction");
      ga.krig = build_kriging_op(A_krig, *ga.chol, redundant_set);
      x_new = ga.krig.apply(x_prop);
    }

    // damped step: feasibility is preserved by convex combination
    double t = 1.0;
    VectorXd x_try, eta_try;
    LikTerms terms_try;
    double f_try = f;
    for (int halved = 0; halved <= kMaxHalvings; ++halved) {
      x_try = x + t * (x_new - x);
      eta_try = design * x_try;
      terms_try = loglik_terms(obs_, eta_per_obs(obs_, eta_try), h.dispersion);
      f_try = terms_try.g.sum() - 0.5 * x_try.dot(Qp * x_try);
      if (f_try >= f - 1e-12 * (1.0 + std::abs(f))) break;
      t *= 0.5;
    }
    const double deta = (eta_try - eta_cell).cwiseAbs().maxCoeff();
    x = x_try;
    eta_cell = eta_try;
    terms = terms_try;
    f = f_try;
    if (deta < kNewtonTol) {
      ga.converged = true;
      break;
    }
    ++productive;
  }

  warm_ = x;
  have_warm_ = true;
  if (lay.pair) {
    // report the mode in the original coordinates: x = w + Z x*
    x.segment(lay.delta(), lay.n_delta()) +=
        m_.split.Z * x.segment(lay.delta_star(), lay.n_delta());
  }
  ga.x_hat = x;
  ga.eta_cell = eta_cell;
  ga.log_joint = f;
  ga.iterations = productive;
  if (redundant_set) {
    // corrections may use the redundant row set, but the evidence Gram must
    // stay full rank: rebuild it on the reduced rows at the mode
    MaybeScope sc(timer_, "kriging_correction");
    ga.gram_logdet = build_kriging_op(m_.A_check, *ga.chol).logdet_gram;
  } else {
    ga.gram_logdet = ga.krig.logdet_gram;
  }
  return ga;
}

double Posterior::log_posterior_theta(const VectorXd& theta, GaussianApprox* out) {
  // far outside the representable precision range: treat as impossible so
  // line searches back off instead of overflowing downstream
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    if (!std::isfinite(theta[i]) || std::abs(theta[i]) > 35.0)
      return -std::numeric_limits<double>::infinity();
  const auto key = bit_key(theta);
  if (!out) {
    auto hit = memo_.find(key);
    if (hit != memo_.end()) return hit->second;
  }
  const Hyperparameters h = hyper_from(m_, theta);
  GaussianApprox ga = gaussian_approximation(h);
  ++evals_;

  const BlockLayout& lay = m_.layout;
  double lp = log_hyperprior(m_, theta);
  lp += 0.5 * lay.n_fixed() * std::log(1e-3);
  const int ka = m_.R_alpha.rank_deficiency;
  const int kg = m_.R_gamma.rank_deficiency;
  const int kd = m_.R_delta.rank_deficiency;
  lp += 0.5 * (lay.n_T - ka) * theta[0] + 0.5 * ka * std::log(m_.eps_alpha);
  lp += 0.5 * (lay.n_S - kg) * theta[1] + 0.5 * kg * std::log(m_.eps_gamma);
  lp += 0.5 * (lay.n_delta() - kd) * theta[2] + 0.5 * kd * std::log(m_.eps_delta);
  lp += m_.logdet_gram_const + m_.gram_eps_coeff;
  if (lay.pair) {
    const double kap = kappa_of(m_, h.tau_delta);
    lp += 0.5 * lay.n_delta() * std::log(kap);
    lp += 0.5 * pair_gram_logdet(m_, kap);
  }
  lp += ga.log_joint + loglik_constant(obs_, h.dispersion);
  lp -= 0.5 * ga.chol->log_det();
  lp -= 0.5 * ga.gram_logdet;

  memo_[key] = lp;
  if (out) *out = std::move(ga);
  return lp;
}

namespace {

VectorXd forward_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x,
                          double fx) {
  VectorXd g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    VectorXd xp = x;
    xp[i] += kGradStep;
    g[i] = (f(xp) - fx) / kGradStep;
  }
  return g;
}

}  // namespace

Exploration explore_hyperparameters(Posterior& post) {
  const LatentModel& m = post.model();
  const int dim = theta_dim(m);
  Exploration ex;

  auto lp_capped = [&](const VectorXd& t) {
    if (post.evals() >= kMaxEvals)
      throw OptimizerStalled("hyperparameter ascent exceeded " + std::to_string(kMaxEvals) +
                             " posterior evaluations");
    return post.log_posterior_theta(t);
  };
  std::function<double(const VectorXd&)> lp_capped_fn = lp_capped;

  // ascent on lp == descent on -lp with a BFGS inverse-curvature estimate
  VectorXd th = VectorXd::Constant(dim, 4.0);
  if (dim == 4) th[3] = 0.0;
  double f0 = lp_capped(th);
  VectorXd g = forward_gradient(lp_capped_fn, th, f0);
  MatrixXd B = MatrixXd::Identity(dim, dim);  // inverse Hessian of -lp
  for (int it = 0; it < 100; ++it) {
    VectorXd p = B * g;  // ascent direction
    if (p.dot(g) <= 0.0) {
      B.setIdentity();
      p = g;
    }
    double a = 1.0;
    double fa = f0;
    bool improved = false;
    for (int ls = 0; ls < 30; ++ls) {
      fa = lp_capped(th + a * p);
      if (fa >= f0 + 1e-4 * a * p.dot(g)) {
        improved = true;
        break;
      }
      a *= 0.5;
    }
    if (!improved) break;
    const VectorXd th_new = th + a * p;
    const VectorXd g_new = forward_gradient(lp_capped_fn, th_new, fa);
    const VectorXd s = th_new - th;
    const VectorXd y = g - g_new;  // gradient change of -lp
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      const MatrixXd I = MatrixXd::Identity(dim, dim);
      const double rho = 1.0 / sy;
      B = (I - rho * s * y.transpose()) * B * (I - rho * y * s.transpose()) +
          rho * s * s.transpose();
    }
    const double gain = fa - f0;
    th = th_new;
    f0 = fa;
    g = g_new;
    if (gain < kAscentTol) break;
  }
  ex.theta_mode = th;
  ex.lp_mode = f0;

  // central-difference Hessian (no eval cap: bounded by construction)
  auto lp = [&](const VectorXd& t) { return post.log_posterior_theta(t); };
  MatrixXd H(dim, dim);
  const double h2 = kHessStep * kHessStep;
  for (int i = 0; i < dim; ++i) {
    VectorXd tp = th, tm = th;
    tp[i] += kHessStep;
    tm[i] -= kHessStep;
    H(i, i) = (lp(tp) + lp(tm) - 2.0 * f0) / h2;
  }
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j) {
      VectorXd tpp = th, tpm = th, tmp = th, tmm = th;
      tpp[i] += kHessStep;
      tpp[j] += kHessStep;
      tpm[i] += kHessStep;
      tpm[j] -= kHessStep;
      tmp[i] -= kHessStep;
      tmp[j] += kHessStep;
      tmm[i] -= kHessStep;
      tmm[j] -= kHessStep;
      H(i, j) = H(j, i) = (lp(tpp) - lp(tpm) - lp(tmp) + lp(tmm)) / (4.0 * h2);
    }

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(MatrixXd(-H));
  VectorXd lam = es.eigenvalues();
  for (int i = 0; i < dim; ++i)
    if (lam[i] < kEigenFloor) {
      lam[i] = kEigenFloor;
      ex.warnings.push_back("curvature eigenvalue clamped to " + std::to_string(kEigenFloor) +
                            " in the hyperparameter Hessian");
    }
  ex.neg_hessian = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
  ex.scale = es.eigenvectors() * lam.cwiseInverse().cwiseSqrt().asDiagonal();
  ex.evidence_raw = f0 + 0.5 * dim * kLog2Pi - 0.5 * lam.array().log().sum();

  // central composite design: center, 2*dim axial points, 2^dim corners
  std::vector<VectorXd> zs;
  zs.push_back(VectorXd::Zero(dim));
  for (int i = 0; i < dim; ++i)
    for (double sgn : {1.0, -1.0}) {
      VectorXd z = VectorXd::Zero(dim);
      z[i] = sgn * kCcdRadius;
      zs.push_back(z);
    }
  const double corner = kCcdRadius / std::sqrt(static_cast<double>(dim));
  for (int mask = 0; mask < (1 << dim); ++mask) {
    VectorXd z(dim);
    for (int i = 0; i < dim; ++i) z[i] = (mask >> i & 1) ? corner : -corner;
    zs.push_back(z);
  }

  std::vector<ThetaPoint> pts;
  double best = -std::numeric_limits<double>::infinity();
  for (const VectorXd& z : zs) {
    ThetaPoint pt;
    pt.theta = th + ex.scale * z;
    pt.lp = lp(pt.theta);
    best = std::max(best, pt.lp);
    pts.push_back(std::move(pt));
  }
  double wsum = 0.0;
  for (ThetaPoint& pt : pts) {
    if (pt.lp < best - kKeepWindow) continue;
    pt.weight = std::exp(pt.lp - best);
    wsum += pt.weight;
    ex.grid.push_back(pt);
  }
  for (ThetaPoint& pt : ex.grid) pt.weight /= wsum;
  ex.evals = post.evals();
  return ex;
}

namespace {

// Constrained marginal variances of the reported coordinates. For the pair
// method the factor lives in w = x - Z x* coordinates; with M the map that
// reads the reported entries of x = w + Z x*, the variances are
// diag(M Sigma M^T) - diag((M W) G^-1 (M W)^T). Every off-diagonal entry the
// map touches pairs coordinates that interact through the design, so the
// selected inverse carries it exactly.
VectorXd reported_variances(const LatentModel& m, const GaussianApprox& ga, bool* sampled) {
  const BlockLayout& lay = m.layout;
  const int n_rep = lay.n_reported();
  if (!lay.pair) {
    VectorXd dq;
    if (lay.total() <= kExactDiagLimit) {
      dq = ga.chol->inverse_diag_selected();
    } else {
      double rel_se = 0.0;
      dq = ga.chol->inverse_diag_sampled(977, kDiagSamples, &rel_se);
      *sampled = true;
    }
    return (dq - ga.krig.variance_downdate()).head(n_rep);
  }

  const int nd = lay.n_delta();
  using RowSp = Eigen::SparseMatrix<double, Eigen::RowMajor>;
  const RowSp Zr(m.split.Z);

  VectorXd dq(n_rep);
  if (lay.total() <= kExactDiagLimit) {
    const SpMat S = ga.chol->selected_inverse();
    for (int i = 0; i < lay.delta(); ++i) dq[i] = S.coeff(i, i);
    for (int i = 0; i < nd; ++i) {
      const int wi = lay.delta() + i;
      double acc = S.coeff(wi, wi);
      for (RowSp::InnerIterator a(Zr, i); a; ++a) {
        const Eigen::Index xa = lay.delta_star() + a.col();
        acc += 2.0 * a.value() * S.coeff(wi, xa);
        for (RowSp::InnerIterator b(Zr, i); b; ++b)
          acc += a.value() * b.value() * S.coeff(xa, lay.delta_star() + b.col());
      }
      dq[wi] = acc;
    }
  } else {
    MatrixXd draws = ga.chol->sample(VectorXd::Zero(lay.total()), 977, kDiagSamples);
    MatrixXd mapped = draws.topRows(n_rep);
    mapped.middleRows(lay.delta(), nd) += Zr * draws.bottomRows(nd);
    dq = mapped.array().square().rowwise().mean();
    *sampled = true;
  }

  if (ga.krig.k() == 0) return dq;
  MatrixXd V = ga.krig.W.topRows(n_rep);
  V.middleRows(lay.delta(), nd) += Zr * ga.krig.W.bottomRows(nd);
  return dq - ga.krig.variance_downdate(V);
}

}  // namespace

FitResult fit_model(const LatentModel& m, const ObservationSet& obs, PhaseTimer* timer) {
  PhaseTimer local;
  PhaseTimer& T = timer ? *timer : local;
  T.start();
  FitResult res;
  res.method = m.cfg.method;

  Posterior post(m, obs, &T);
  Exploration ex;
  {
    auto sc = T.phase("exploration");
    ex = explore_hyperparameters(post);
  }
  res.theta_mode = ex.theta_mode;
  res.evidence_raw = ex.evidence_raw;
  res.avg_marginal_loglik =
      (ex.evidence_raw + m.structure_logdet) / static_cast<double>(obs.size());
  res.warnings = ex.warnings;

  const int n_rep = m.layout.n_reported();
  VectorXd mix_mean = VectorXd::Zero(n_rep);
  VectorXd mix_second = VectorXd::Zero(n_rep);  // sum w (v + mean^2)
  bool all_converged = true;
  bool sampled_diag = false;
  for (const ThetaPoint& pt : ex.grid) {
    GaussianApprox ga;
    {
      auto sc = T.phase("exploration");
      post.log_posterior_theta(pt.theta, &ga);
    }
    all_converged = all_converged && ga.converged;
    VectorXd v;
    {
      auto sc = T.phase("variance");
      v = reported_variances(m, ga, &sampled_diag);
    }
    mix_mean += pt.weight * ga.x_hat.head(n_rep);
    mix_second +=
        pt.weight * (v + ga.x_hat.head(n_rep).cwiseProduct(ga.x_hat.head(n_rep)));
  }
  if (sampled_diag)
    res.warnings.push_back("latent variances estimated by sampling (dimension above " +
                           std::to_string(kExactDiagLimit) + "); expect ~6% relative noise");

  VectorXd var = mix_second - mix_mean.cwiseProduct(mix_mean);
  for (int i = 0; i < n_rep; ++i)
    if (var[i] < 0.0) {
      var[i] = 0.0;
      ++res.clamped_variances;
    }
  if (res.clamped_variances > 0)
    res.warnings.push_back(std::to_string(res.clamped_variances) +
                           " mixture variances clamped at zero");
  res.latent_mean = mix_mean;
  res.latent_sd = var.cwiseSqrt();

  const char* names[] = {"tau_alpha", "tau_gamma", "tau_delta", "dispersion"};
  for (int i = 0; i < theta_dim(m); ++i) {
    HyperSummary hs;
    hs.name = names[i];
    double m1 = 0.0, m2 = 0.0;
    for (const ThetaPoint& pt : ex.grid) {
      const double v = std::exp(pt.theta[i]);
      m1 += pt.weight * v;
      m2 += pt.weight * v * v;
    }
    hs.mean = m1;
    hs.sd = std::sqrt(std::max(0.0, m2 - m1 * m1));
    res.hyper.push_back(hs);
  }
  if (theta_dim(m) == 4) {
    HyperSummary hs;
    hs.name = "inv_dispersion";
    double m1 = 0.0, m2 = 0.0;
    for (const ThetaPoint& pt : ex.grid) {
      const double v = std::exp(-pt.theta[3]);
      m1 += pt.weight * v;
      m2 += pt.weight * v * v;
    }
    hs.mean = m1;
    hs.sd = std::sqrt(std::max(0.0, m2 - m1 * m1));
    res.hyper.push_back(hs);
  }

  VectorXd padded = VectorXd::Zero(m.layout.total());
  padded.head(n_rep) = mix_mean;
  const double viol = VectorXd(m.A_check * padded).cwiseAbs().maxCoeff();
  res.constraints_ok = viol <= 1e-6 * (1.0 + mix_mean.cwiseAbs().maxCoeff());
  if (!res.constraints_ok)
    res.warnings.push_back("posterior means violate the constraint set (max " +
                           std::to_string(viol) + ")");
  res.converged = all_converged;
  if (!all_converged) res.warnings.push_back("Newton iterations did not converge at every grid point");
  res.theta_evals = post.evals();

  T.stop();
  res.phase_seconds = T.phase_seconds();
  res.total_seconds = T.total_seconds();
  return res;
}

}  // namespace hymik
