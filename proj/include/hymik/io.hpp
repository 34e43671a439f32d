#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hymik/inference.hpp"
#include "hymik/simulate.hpp"

namespace hymik {

// CSV with header time,region,count,exposure (optional trailing replicate
// column); times 1-based and dense, regions 0-based. Every (time, region)
// cell must appear at least once. cumulative = true turns each region's (and
// replicate's) series of running totals into per-step counts, clamping
// negative increments to zero.
ObservationSet load_counts(const std::string& path, bool cumulative = false);

// One row per observation in set order; the replicate column is emitted only
// when some cell carries more than one observation.
void write_counts_csv(const std::string& path, const ObservationSet& obs);

// Ground-truth sidecar for a simulated dataset: intercept, precisions, seed,
// and the three effect vectors.
void write_truth_json(const std::string& path, const SimulatedData& d);

// Deterministic scatter/compare content of a two-method run: paired
// interaction means plus their agreement summaries. Wall clock never enters.
struct CompareSummary {
  std::string scatter_csv;     // cell,<first>,<second> paired interaction means
  std::string other_method;    // the method the primary fit was compared against
  double correlation = 0.0;    // Pearson over paired interaction means
  double max_abs_diff = 0.0;
  bool present = false;
};

// Fixed-schema report document {config, hyper, latent, avg_marginal_loglik,
// timings, method, warnings, compare}. Floats use the shortest representation
// that round-trips, so the text is a pure function of the fit values; the
// timings value is the sidecar filename (wall clock is not reproducible and
// lives there instead).
std::string render_report(const std::vector<std::pair<std::string, std::string>>& config,
                          const FitResult& fit, const std::string& timings_name,
                          const CompareSummary& cmp = {});

// {error: {type, message}} for failed runs, same serialization rules.
std::string render_error(const std::string& type, const std::string& message);

// Wall-clock sidecar: per-phase and total seconds for each labeled fit, plus
// the ratio of the first total over the second when two fits are given.
std::string render_timings(const std::vector<std::pair<std::string, const FitResult*>>& fits);

// Parse and re-emit a report; byte-identical for any document produced here.
std::string reserialize_report(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace hymik
