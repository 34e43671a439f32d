#include <algorithm>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "hymik/gmrf.hpp"
#include "hymik/inference.hpp"
#include "hymik/io.hpp"
#include "hymik/parallel.hpp"
#include "hymik/simulate.hpp"

namespace {

using namespace hymik;

struct FitArgs {
  std::string data, graph, out;
  std::string family = "poisson";
  std::string constraints = "gc";
  std::string method = "kriging";
  std::string split = "auto";
  std::string krig_set = "reduced";
  int order = 1;
  bool scale = false;
  bool compare = false;
  bool cumulative = false;
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = env variable / hardware default
};

struct SimArgs {
  std::string graph, out;
  int n_T = 0;
  int order = 2;
  int replicates = 30;
  std::uint64_t seed = 1;
  double intercept = 1.5;
  double tau_alpha = 50.0, tau_gamma = 10.0, tau_delta = 17.0;
};

void add_fit_options(CLI::App* cmd, FitArgs& a) {
  cmd->add_option("--data", a.data, "counts CSV (time,region,count,exposure[,replicate])")
      ->required();
  cmd->add_option("--graph", a.graph, "adjacency file")->required();
  cmd->add_option("--family", a.family)->check(CLI::IsMember({"poisson", "negbinom"}));
  cmd->add_option("--constraints", a.constraints)->check(CLI::IsMember({"gc", "sc"}));
  cmd->add_option("--method", a.method)->check(CLI::IsMember({"kriging", "hymik"}));
  cmd->add_option("--split", a.split, "constraint block absorbed by the projection")
      ->check(CLI::IsMember({"auto", "spatial", "temporal"}));
  cmd->add_option("--krig-set", a.krig_set, "interaction rows handed to the correction")
      ->check(CLI::IsMember({"reduced", "raw"}));
  cmd->add_option("--order", a.order, "temporal walk order")->check(CLI::IsMember({1, 2}));
  cmd->add_flag("--scale", a.scale, "scale structure matrices to unit geometric mean variance");
  cmd->add_flag("--compare", a.compare, "also fit the other method and emit paired means");
  cmd->add_flag("--cumulative", a.cumulative,
                "difference running totals into per-step counts (negatives clamped)");
  cmd->add_option("--seed", a.seed);
  cmd->add_option("--threads", a.threads, "worker threads (flag beats HYMIK_THREADS)");
  cmd->add_option("--out", a.out, "report path; timings go to <out>.timings.json")->required();
}

ModelConfig model_config(const FitArgs& a, const ObservationSet& obs, Method method) {
  ModelConfig cfg;
  cfg.n_T = obs.n_T;
  cfg.temporal_order = a.order;
  cfg.family = a.family == "negbinom" ? Family::NegBinom : Family::Poisson;
  cfg.constraints = a.constraints == "sc" ? ConstraintLabel::SC : ConstraintLabel::GC;
  cfg.method = method;
  cfg.split_policy = a.split == "spatial"    ? SplitPolicy::SpatialFirst
                     : a.split == "temporal" ? SplitPolicy::TemporalFirst
                                             : SplitPolicy::Auto;
  cfg.scale = a.scale;
  cfg.raw_krig_set = a.krig_set == "raw";
  return cfg;
}

std::vector<std::pair<std::string, std::string>> echo_config(const FitArgs& a) {
  return {{"data", a.data},
          {"graph", a.graph},
          {"family", a.family},
          {"constraints", a.constraints},
          {"method", a.method},
          {"split", a.split},
          {"krig_set", a.krig_set},
          {"order", std::to_string(a.order)},
          {"scale", a.scale ? "true" : "false"},
          {"compare", a.compare ? "true" : "false"},
          {"cumulative", a.cumulative ? "true" : "false"},
          {"seed", std::to_string(a.seed)},
          {"threads", std::to_string(thread_count())},
          {"out", a.out}};
}

// paired interaction means: scatter CSV plus the agreement summary
CompareSummary compare_block(const std::string& scatter_path, const LatentModel& m,
                             const FitResult& primary, const FitResult& other,
                             const std::string& other_name) {
  const int d0 = m.layout.delta();
  const int nd = m.layout.n_delta();
  VectorXd a = primary.latent_mean.segment(d0, nd);
  VectorXd b = other.latent_mean.segment(d0, nd);

  std::string csv = "cell," + std::string(primary.method == Method::Hymik ? "hymik" : "kriging") +
                    "," + other_name + "\n";
  for (int i = 0; i < nd; ++i) {
    csv += std::to_string(i) + ",";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", a[i], b[i]);
    csv += buf;
  }
  write_text_file(scatter_path, csv);

  const VectorXd ca = a.array() - a.mean();
  const VectorXd cb = b.array() - b.mean();
  CompareSummary cmp;
  cmp.present = true;
  cmp.scatter_csv = scatter_path;
  cmp.other_method = other_name;
  cmp.correlation = ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
  cmp.max_abs_diff = (a - b).cwiseAbs().maxCoeff();
  return cmp;
}

int run_fit(const FitArgs& a, bool bench) {
  if (a.threads >= 1) set_thread_count(a.threads);
  const Graph g = load_graph(a.graph);
  ObservationSet obs = load_counts(a.data, a.cumulative);
  if (obs.n_S != g.n_nodes)
    throw DimensionMismatch("data covers " + std::to_string(obs.n_S) + " regions but the graph has " +
                            std::to_string(g.n_nodes) + " nodes");
  obs.family = a.family == "negbinom" ? Family::NegBinom : Family::Poisson;

  const Method primary = a.method == "hymik" ? Method::Hymik : Method::Kriging;
  const Method secondary = primary == Method::Hymik ? Method::Kriging : Method::Hymik;
  const bool both = a.compare || bench;

  // bench protocol: one discarded warm-up, then the median-total run of three
  auto run_method = [&](Method method) {
    LatentModel m = build_latent_model(g, model_config(a, obs, method));
    if (!bench) return std::make_pair(fit_model(m, obs), std::move(m));
    fit_model(m, obs);
    std::vector<FitResult> runs;
    for (int r = 0; r < 3; ++r) runs.push_back(fit_model(m, obs));
    std::sort(runs.begin(), runs.end(),
              [](const FitResult& x, const FitResult& y) { return x.total_seconds < y.total_seconds; });
    return std::make_pair(std::move(runs[1]), std::move(m));
  };

  auto [fit, model] = run_method(primary);
  CompareSummary cmp;
  std::vector<std::pair<std::string, const FitResult*>> timed;
  FitResult other;
  if (both) {
    other = run_method(secondary).first;
    cmp = compare_block(a.out + ".scatter.csv", model, fit, other,
                        secondary == Method::Hymik ? "hymik" : "kriging");
    // factor = standard kriging time over hybrid time, independent of order
    const FitResult* krig = primary == Method::Kriging ? &fit : &other;
    const FitResult* hym = primary == Method::Hymik ? &fit : &other;
    timed = {{"kriging", krig}, {"hymik", hym}};
  } else {
    timed = {{a.method, &fit}};
  }

  const std::string timings_name = a.out + ".timings.json";
  write_text_file(a.out, render_report(echo_config(a), fit, timings_name, cmp));
  write_text_file(timings_name, render_timings(timed));

  std::printf("%s: %s in %.2f s, evidence %.4f, report %s\n", a.method.c_str(),
              fit.converged ? "converged" : "NOT CONVERGED", fit.total_seconds,
              fit.avg_marginal_loglik, a.out.c_str());
  if (both && timed.size() == 2)
    std::printf("computational factor (kriging/hymik): %.2f\n",
                timed[0].second->total_seconds / timed[1].second->total_seconds);
  for (const std::string& w : fit.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

  const bool ok = fit.converged && fit.constraints_ok &&
                  (!both || (other.converged && other.constraints_ok));
  return ok ? 0 : 1;
}

int run_simulate(const SimArgs& a) {
  SimulationConfig cfg;
  cfg.graph = load_graph(a.graph);
  cfg.n_T = a.n_T;
  cfg.temporal_order = a.order;
  cfg.taus = {a.tau_alpha, a.tau_gamma, a.tau_delta, 1.0};
  cfg.intercept = a.intercept;
  cfg.n_replicates = a.replicates;
  cfg.seed = a.seed;
  SimulatedData d = simulate_dataset(cfg);
  write_counts_csv(a.out, d.obs);
  write_truth_json(a.out + ".truth.json", d);
  std::printf("wrote %d observations (%d x %d x %d) to %s\n", d.obs.size(), cfg.n_T,
              cfg.graph.n_nodes, cfg.n_replicates, a.out.c_str());
  return 0;
}

template <class E>
bool report_error(const std::string& out, const char* type, const E& e) {
  std::fprintf(stderr, "error: %s\n", e.what());
  if (!out.empty()) {
    try {
      write_text_file(out, render_error(type, e.what()));
    } catch (const std::exception&) {
      return false;
    }
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"space-time count models with constrained latent Gaussian fields"};
  app.require_subcommand(1);

  FitArgs fit_args;
  CLI::App* fit_cmd = app.add_subcommand("fit", "fit one model and write a report");
  add_fit_options(fit_cmd, fit_args);

  FitArgs bench_args;
  CLI::App* bench_cmd =
      app.add_subcommand("bench", "fit both methods, median of 3 timed runs each");
  add_fit_options(bench_cmd, bench_args);

  SimArgs sim_args;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "write a synthetic dataset plus its truth");
  sim_cmd->add_option("--graph", sim_args.graph, "adjacency file")->required();
  sim_cmd->add_option("--nt", sim_args.n_T, "number of time points")->required();
  sim_cmd->add_option("--order", sim_args.order, "temporal walk order")
      ->check(CLI::IsMember({1, 2}));
  sim_cmd->add_option("--replicates", sim_args.replicates)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", sim_args.seed);
  sim_cmd->add_option("--intercept", sim_args.intercept);
  sim_cmd->add_option("--tau-alpha", sim_args.tau_alpha)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--tau-gamma", sim_args.tau_gamma)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--tau-delta", sim_args.tau_delta)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--out", sim_args.out, "counts CSV path; truth goes to <out>.truth.json")
      ->required();

  CLI11_PARSE(app, argc, argv);

  const std::string out = fit_cmd->parsed()     ? fit_args.out
                          : bench_cmd->parsed() ? bench_args.out
                                                : std::string();
  try {
    if (fit_cmd->parsed()) return run_fit(fit_args, false);
    if (bench_cmd->parsed()) return run_fit(bench_args, true);
    return run_simulate(sim_args);
  } catch (const ParseError& e) {
    report_error(out, "ParseError", e);
  } catch (const MissingCell& e) {
    report_error(out, "MissingCell", e);
  } catch (const NegativeCount& e) {
    report_error(out, "NegativeCount", e);
  } catch (const AsymmetricAdjacency& e) {
    report_error(out, "AsymmetricAdjacency", e);
  } catch (const DimensionMismatch& e) {
    report_error(out, "DimensionMismatch", e);
  } catch (const PolicyInfeasible& e) {
    report_error(out, "PolicyInfeasible", e);
  } catch (const OptimizerStalled& e) {
    report_error(out, "OptimizerStalled", e);
  } catch (const NotPositiveDefinite& e) {
    report_error(out, "NotPositiveDefinite", e);
  } catch (const Error& e) {
    report_error(out, "Error", e);
  } catch (const std::exception& e) {
    report_error(out, "Internal", e);
  }
  return 2;
}
