#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "hymik/io.hpp"
#include "hymik/simulate.hpp"
#include "json.hpp"
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

SpMat sum_row(int n) {
  SpMat A(1, n);
  for (int j = 0; j < n; ++j) A.insert(0, j) = 1.0;
  A.makeCompressed();
  return A;
}

ConstraintSet sum_constraint(int n) {
  ConstraintSet c;
  c.A = sum_row(n);
  c.full_rank = true;
  return c;
}

std::filesystem::path tmp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "hymik_io_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

SimulationConfig small_sim(unsigned seed) {
  SimulationConfig cfg;
  cfg.graph = path_graph(6);
  cfg.n_T = 4;
  cfg.temporal_order = 2;
  cfg.n_replicates = 30;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

// --- constrained effect sampling -------------------------------------------

TEST_CASE("constrained samples sit on the surface, one by one") {
  StructureMatrix R = scale_structure(build_rw_structure(5, 1), sum_row(5));
  ConstraintSet c = sum_constraint(5);
  for (int i = 0; i < 10000; ++i) {
    VectorXd x = sample_constrained_effect(R, 1.0, c, 1000 + i);
    REQUIRE(std::abs(x.sum()) <= 1e-8);
  }
}

TEST_CASE("sampler covariance matches the dense conditional formula") {
  const int n = 5;
  StructureMatrix R = scale_structure(build_rw_structure(n, 1), sum_row(n));
  ConstraintSet c = sum_constraint(n);
  const double eps = 1e-6 * geomean_diag(R.matrix);

  // dense oracle: Sigma - Sigma A^T (A Sigma A^T)^-1 A Sigma
  oracle::DMat Q = oracle::from_eigen(
      MatrixXd(MatrixXd(R.matrix) + eps * MatrixXd::Identity(n, n)));
  oracle::DMat S = oracle::ge_inverse(Q);
  oracle::DMat A(1, n);
  for (int j = 0; j < n; ++j) A.at(0, j) = 1.0;
  oracle::DMat SA = oracle::matmul(S, oracle::transpose(A));
  oracle::DMat G = oracle::matmul(A, SA);
  oracle::DMat Ginv = oracle::ge_inverse(G);
  oracle::DMat red = oracle::matmul(oracle::matmul(SA, Ginv), oracle::transpose(SA));

  const int N = 20000;
  MatrixXd acc = MatrixXd::Zero(n, n);
  for (int i = 0; i < N; ++i) {
    VectorXd x = sample_constrained_effect(R, 1.0, c, 50000 + i);
    acc += x * x.transpose();
  }
  acc /= static_cast<double>(N);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double want = S.at(i, j) - red.at(i, j);
      const double sd =
          std::sqrt(((S.at(i, i) - red.at(i, i)) * (S.at(j, j) - red.at(j, j)) + want * want) /
                    N);
      CHECK(std::abs(acc(i, j) - want) <= 3.0 * sd + 1e-12);
    }
}

TEST_CASE("quadrupling the precision quarters the sample variance") {
  const int n = 5;
  StructureMatrix R = scale_structure(build_rw_structure(n, 1), sum_row(n));
  ConstraintSet c = sum_constraint(n);
  const int N = 10000;
  VectorXd v1 = VectorXd::Zero(n), v4 = VectorXd::Zero(n);
  for (int i = 0; i < N; ++i) {
    v1 += sample_constrained_effect(R, 1.0, c, 90000 + i).cwiseAbs2();
    v4 += sample_constrained_effect(R, 4.0, c, 90000 + i).cwiseAbs2();
  }
  for (int j = 0; j < n; ++j) {
    // identical seeds: the tau = 4 draw is the tau = 1 draw halved, so the
    // ratio is exact up to the (tiny) tau-dependence of the eps ridge
    CHECK(v4[j] / v1[j] == doctest::Approx(0.25).epsilon(1e-4));
  }
}

// --- dataset simulation -----------------------------------------------------

TEST_CASE("simulated effects satisfy their constraint sets") {
  SimulatedData d = simulate_dataset(small_sim(7));
  const int n_T = 4, n_S = 6;
  CHECK(std::abs(d.alpha.sum()) <= 1e-8);
  double trend = 0.0;
  for (int t = 0; t < n_T; ++t) trend += (t + 1) * d.alpha[t];
  CHECK(std::abs(trend) <= 1e-8);
  CHECK(std::abs(d.gamma.sum()) <= 1e-8);
  ConstraintSet raw = build_sc_constraints(n_T, n_S);
  CHECK(VectorXd(raw.A * d.delta).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("simulated dataset shape and determinism") {
  SimulatedData a = simulate_dataset(small_sim(11));
  SimulatedData b = simulate_dataset(small_sim(11));
  SimulatedData other = simulate_dataset(small_sim(12));
  CHECK(a.obs.size() == 4 * 6 * 30);
  CHECK(a.obs.n_T == 4);
  CHECK(a.obs.n_S == 6);
  CHECK(a.obs.family == Family::Poisson);
  REQUIRE(b.obs.size() == a.obs.size());
  bool same = true, differs = false;
  for (int i = 0; i < a.obs.size(); ++i) {
    same = same && a.obs.obs[i].y == b.obs.obs[i].y && a.obs.obs[i].cell == b.obs.obs[i].cell;
    differs = differs || a.obs.obs[i].y != other.obs.obs[i].y;
  }
  CHECK(same);
  CHECK(differs);
  CHECK(a.alpha == b.alpha);
  CHECK(a.seed == 11);
}

TEST_CASE("replicate means track the simulated intensity") {
  SimulatedData d = simulate_dataset(small_sim(23));
  const int n_S = 6;
  std::vector<double> sum(4 * 6, 0.0);
  std::vector<int> cnt(4 * 6, 0);
  for (const Observation& o : d.obs.obs) {
    sum[static_cast<size_t>(o.cell)] += o.y;
    ++cnt[static_cast<size_t>(o.cell)];
  }
  for (int cell = 0; cell < 4 * 6; ++cell) {
    REQUIRE(cnt[cell] == 30);
    const double lambda =
        std::exp(d.intercept + d.alpha[cell / n_S] + d.gamma[cell % n_S] + d.delta[cell]);
    CHECK(std::abs(sum[cell] / 30.0 - lambda) <= 4.0 * std::sqrt(lambda / 30.0));
  }
}

// --- counts CSV -------------------------------------------------------------

TEST_CASE("counts CSV round trips byte for byte") {
  SimulationConfig cfg = small_sim(31);
  cfg.n_replicates = 3;
  SimulatedData d = simulate_dataset(cfg);
  const auto p1 = tmp_file("counts_a.csv");
  const auto p2 = tmp_file("counts_b.csv");
  write_counts_csv(p1.string(), d.obs);
  ObservationSet back = load_counts(p1.string());
  REQUIRE(back.size() == d.obs.size());
  CHECK(back.n_T == d.obs.n_T);
  CHECK(back.n_S == d.obs.n_S);
  for (int i = 0; i < back.size(); ++i) {
    CHECK(back.obs[i].cell == d.obs.obs[i].cell);
    CHECK(back.obs[i].y == d.obs.obs[i].y);
    CHECK(back.obs[i].E == d.obs.obs[i].E);
  }
  write_counts_csv(p2.string(), back);
  CHECK(read_text_file(p1.string()) == read_text_file(p2.string()));
  // replicated cells carry the replicate column
  CHECK(read_text_file(p1.string()).substr(0, 37) == "time,region,count,exposure,replicate\n");
}

TEST_CASE("counts loader rejects malformed input") {
  const auto p = tmp_file("bad.csv");

  write_text_file(p.string(), "t,region,count,exposure\n1,0,1,1\n");
  CHECK_THROWS_AS(load_counts(p.string()), ParseError);

  write_text_file(p.string(), "time,region,count,exposure\n1,0,-3,1\n");
  CHECK_THROWS_AS(load_counts(p.string()), NegativeCount);

  write_text_file(p.string(), "time,region,count,exposure\n1,0,1,1\n1,1,abc,1\n");
  try {
    load_counts(p.string());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 3);
  }

  write_text_file(p.string(),
                  "time,region,count,exposure\n1,0,1,1\n1,1,1,1\n2,0,1,1\n");
  CHECK_THROWS_AS(load_counts(p.string()), MissingCell);

  write_text_file(p.string(), "time,region,count,exposure\n1,0,1,0\n");
  CHECK_THROWS_AS(load_counts(p.string()), ParseError);
}

TEST_CASE("cumulative series become clamped increments") {
  const auto p = tmp_file("cum.csv");
  write_text_file(p.string(),
                  "time,region,count,exposure\n1,0,3,1\n2,0,5,1\n3,0,4,1\n");
  ObservationSet obs = load_counts(p.string(), true);
  REQUIRE(obs.size() == 3);
  CHECK(obs.obs[0].y == 3.0);
  CHECK(obs.obs[1].y == 2.0);
  CHECK(obs.obs[2].y == 0.0);
  // without the flag the totals come through untouched
  ObservationSet raw = load_counts(p.string(), false);
  CHECK(raw.obs[2].y == 4.0);
}

// --- report documents -------------------------------------------------------

TEST_CASE("report documents reserialize byte for byte") {
  FitResult fit;
  fit.method = Method::Hymik;
  fit.latent_mean = (VectorXd(3) << M_PI, -1.0 / 3.0, 4.795e-13).finished();
  fit.latent_sd = (VectorXd(3) << 0.1, std::sqrt(2.0), 7.0).finished();
  fit.hyper = {{"tau_alpha", 50.661234567890123, 2.25}, {"tau_gamma", 9.8, 0.4}};
  fit.avg_marginal_loglik = -3.0528544982938472;
  fit.warnings = {"latent variances estimated by sampling"};
  CompareSummary cmp;
  cmp.present = true;
  cmp.scatter_csv = "out.scatter.csv";
  cmp.other_method = "kriging";
  cmp.correlation = 0.99981726354819203;
  cmp.max_abs_diff = 0.0123456789012345678;

  const std::vector<std::pair<std::string, std::string>> config = {
      {"data", "d.csv"}, {"graph", "g.graph"}, {"seed", "7"}};
  const std::string text = render_report(config, fit, "out.timings.json", cmp);
  const auto p = tmp_file("report.json");
  write_text_file(p.string(), text);
  const std::string back = read_text_file(p.string());
  CHECK(back == text);
  CHECK(reserialize_report(back) == text);

  // values survive the trip exactly
  auto j = nlohmann::ordered_json::parse(back);
  CHECK(j["latent"]["means"][0].get<double>() == M_PI);
  CHECK(j["hyper"][0]["mean"].get<double>() == 50.661234567890123);
  CHECK(j["compare"]["correlation"].get<double>() == 0.99981726354819203);
  CHECK(j["method"] == "hymik");

  // plain fits keep the fixed schema with an empty compare slot
  const std::string plain = render_report(config, fit, "out.timings.json");
  auto jp = nlohmann::ordered_json::parse(plain);
  CHECK(jp["compare"].is_null());
  CHECK(reserialize_report(plain) == plain);

  const std::string err = render_error("MissingCell", "no observation for cell (t=2, s=1)");
  auto je = nlohmann::ordered_json::parse(err);
  CHECK(je["error"]["type"] == "MissingCell");
}

TEST_CASE("truth sidecar carries the generating state") {
  SimulationConfig cfg = small_sim(41);
  cfg.n_replicates = 2;
  SimulatedData d = simulate_dataset(cfg);
  const auto p = tmp_file("truth.json");
  write_truth_json(p.string(), d);
  auto j = nlohmann::ordered_json::parse(read_text_file(p.string()));
  CHECK(j["intercept"].get<double>() == d.intercept);
  CHECK(j["seed"].get<std::uint64_t>() == 41);
  CHECK(j["taus"]["tau_delta"].get<double>() == 17.0);
  REQUIRE(j["alpha"].size() == 4);
  REQUIRE(j["delta"].size() == 24);
  for (int t = 0; t < 4; ++t) CHECK(j["alpha"][t].get<double>() == d.alpha[t]);
}
