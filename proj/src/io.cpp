#include "hymik/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace hymik {

namespace {

using Json = nlohmann::ordered_json;

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r' && ch != ' ' && ch != '\t') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

long parse_long(const std::string& s, const char* what, long line_no) {
  size_t used = 0;
  long v = 0;
  try {
    v = std::stol(s, &used);
  } catch (const std::exception&) {
    throw ParseError(std::string("cannot parse ") + what + " '" + s + "'", line_no);
  }
  if (used != s.size())
    throw ParseError(std::string("trailing characters in ") + what + " '" + s + "'", line_no);
  return v;
}

double parse_double(const std::string& s, const char* what, long line_no) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ParseError(std::string("cannot parse ") + what + " '" + s + "'", line_no);
  }
  if (used != s.size() || !std::isfinite(v))
    throw ParseError(std::string("bad ") + what + " '" + s + "'", line_no);
  return v;
}

// integers print plain, everything else with the shortest round-trip form
std::string fmt_num(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    std::ostringstream os;
    os << static_cast<long long>(v);
    return os.str();
  }
  return Json(v).dump();
}

Json vec_json(const VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

}  // namespace

ObservationSet load_counts(const std::string& path, bool cumulative) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open counts file " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty counts file " + path, 1);
  std::vector<std::string> head = split_csv(line);
  const std::vector<std::string> want = {"time", "region", "count", "exposure"};
  const bool has_rep = head.size() == 5 && head[4] == "replicate";
  if (!(head.size() == 4 || has_rep) ||
      !std::equal(want.begin(), want.end(), head.begin()))
    throw ParseError("header must be time,region,count,exposure[,replicate]", 1);

  struct Row {
    int t, s;
    double y, E;
    long rep;
  };
  std::vector<Row> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> f = split_csv(line);
    if (f.size() != head.size())
      throw ParseError("expected " + std::to_string(head.size()) + " fields, got " +
                           std::to_string(f.size()),
                       line_no);
    Row r;
    r.t = static_cast<int>(parse_long(f[0], "time", line_no));
    r.s = static_cast<int>(parse_long(f[1], "region", line_no));
    r.y = parse_double(f[2], "count", line_no);
    r.E = parse_double(f[3], "exposure", line_no);
    r.rep = has_rep ? parse_long(f[4], "replicate", line_no) : 0;
    if (r.t < 1) throw ParseError("times are 1-based", line_no);
    if (r.s < 0) throw ParseError("regions are 0-based", line_no);
    if (r.y < 0.0)
      throw NegativeCount("negative count " + f[2] + " at line " + std::to_string(line_no));
    if (!(r.E > 0.0)) throw ParseError("exposure must be positive", line_no);
    rows.push_back(r);
  }
  if (rows.empty()) throw ParseError("no data rows in " + path, 1);

  int n_T = 0, n_S = 0;
  for (const Row& r : rows) {
    n_T = std::max(n_T, r.t);
    n_S = std::max(n_S, r.s + 1);
  }
  std::vector<char> seen(static_cast<size_t>(n_T) * n_S, 0);
  for (const Row& r : rows) seen[static_cast<size_t>(r.t - 1) * n_S + r.s] = 1;
  for (int t = 0; t < n_T; ++t)
    for (int s = 0; s < n_S; ++s)
      if (!seen[static_cast<size_t>(t) * n_S + s])
        throw MissingCell("no observation for cell (t=" + std::to_string(t + 1) +
                          ", s=" + std::to_string(s) + ")");

  if (cumulative) {
    // running totals to per-step counts, independently per region/replicate
    std::map<std::pair<int, long>, std::vector<size_t>> series;
    for (size_t i = 0; i < rows.size(); ++i) series[{rows[i].s, rows[i].rep}].push_back(i);
    for (auto& [key, idx] : series) {
      std::sort(idx.begin(), idx.end(),
                [&](size_t a, size_t b) { return rows[a].t < rows[b].t; });
      for (size_t j = 1; j < idx.size(); ++j)
        if (rows[idx[j]].t == rows[idx[j - 1]].t)
          throw ParseError("duplicate time " + std::to_string(rows[idx[j]].t) +
                           " in the cumulative series of region " + std::to_string(key.first));
      double prev = 0.0;
      for (size_t j = 0; j < idx.size(); ++j) {
        const double total = rows[idx[j]].y;
        rows[idx[j]].y = std::max(0.0, total - prev);
        prev = total;
      }
    }
  }

  ObservationSet obs;
  obs.n_T = n_T;
  obs.n_S = n_S;
  obs.family = Family::Poisson;
  obs.obs.reserve(rows.size());
  for (const Row& r : rows) obs.obs.push_back({(r.t - 1) * n_S + r.s, r.y, r.E});
  validate(obs);
  return obs;
}

void write_counts_csv(const std::string& path, const ObservationSet& obs) {
  std::vector<int> per_cell(static_cast<size_t>(obs.n_T) * obs.n_S, 0);
  for (const Observation& o : obs.obs) ++per_cell[static_cast<size_t>(o.cell)];
  const bool reps = *std::max_element(per_cell.begin(), per_cell.end()) > 1;

  std::ostringstream out;
  out << "time,region,count,exposure" << (reps ? ",replicate\n" : "\n");
  std::vector<int> next_rep(per_cell.size(), 0);
  for (const Observation& o : obs.obs) {
    out << (o.cell / obs.n_S + 1) << ',' << (o.cell % obs.n_S) << ',' << fmt_num(o.y) << ','
        << fmt_num(o.E);
    if (reps) out << ',' << next_rep[static_cast<size_t>(o.cell)]++;
    out << '\n';
  }
  write_text_file(path, out.str());
}

void write_truth_json(const std::string& path, const SimulatedData& d) {
  Json j;
  j["intercept"] = d.intercept;
  j["taus"] = {{"tau_alpha", d.taus.tau_alpha},
               {"tau_gamma", d.taus.tau_gamma},
               {"tau_delta", d.taus.tau_delta}};
  j["seed"] = d.seed;
  j["alpha"] = vec_json(d.alpha);
  j["gamma"] = vec_json(d.gamma);
  j["delta"] = vec_json(d.delta);
  write_text_file(path, j.dump(2) + "\n");
}

std::string render_report(const std::vector<std::pair<std::string, std::string>>& config,
                          const FitResult& fit, const std::string& timings_name,
                          const CompareSummary& cmp) {
  Json j;
  Json cfg = Json::object();
  for (const auto& [key, value] : config) cfg[key] = value;
  j["config"] = cfg;
  Json hyper = Json::array();
  for (const HyperSummary& h : fit.hyper)
    hyper.push_back({{"name", h.name}, {"mean", h.mean}, {"sd", h.sd}});
  j["hyper"] = hyper;
  j["latent"] = {{"means", vec_json(fit.latent_mean)}, {"sds", vec_json(fit.latent_sd)}};
  j["avg_marginal_loglik"] = fit.avg_marginal_loglik;
  j["timings"] = timings_name;
  j["method"] = fit.method == Method::Hymik ? "hymik" : "kriging";
  j["warnings"] = fit.warnings;
  if (cmp.present) {
    j["compare"] = {{"scatter_csv", cmp.scatter_csv},
                    {"other_method", cmp.other_method},
                    {"correlation", cmp.correlation},
                    {"max_abs_diff", cmp.max_abs_diff}};
  } else {
    j["compare"] = nullptr;
  }
  return j.dump(2) + "\n";
}

std::string render_error(const std::string& type, const std::string& message) {
  Json j;
  j["error"] = {{"type", type}, {"message", message}};
  return j.dump(2) + "\n";
}

std::string render_timings(const std::vector<std::pair<std::string, const FitResult*>>& fits) {
  Json j;
  Json runs = Json::array();
  for (const auto& [label, fit] : fits) {
    Json phases = Json::object();
    for (const auto& [name, sec] : fit->phase_seconds) phases[name] = sec;
    runs.push_back(
        {{"label", label}, {"total_seconds", fit->total_seconds}, {"phases", phases}});
  }
  j["runs"] = runs;
  if (fits.size() == 2 && fits[1].second->total_seconds > 0.0)
    j["computational_factor"] = fits[0].second->total_seconds / fits[1].second->total_seconds;
  return j.dump(2) + "\n";
}

std::string reserialize_report(const std::string& text) {
  return Json::parse(text).dump(2) + "\n";
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("write failed for " + path);
}

}  // namespace hymik
