#pragma once

#include "vou/admission.hpp"
#include "vou/netsim.hpp"
#include "vou/scenarios.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vou {

/// One experiment: a sweep grid over policies and parameters, executed for
/// every seed, aggregated per grid cell.
struct ExperimentSpec {
  std::string name = "experiment";
  std::string scenario = "two_hop_local";
  std::vector<PolicyKind> policies;
  std::vector<std::uint64_t> seeds;
  std::vector<double> lambdas = {1.0};
  std::vector<int> t_prs = {10};
  std::vector<int> loop_counts = {3};
  std::vector<double> proc_delays_ms = {0.0};
  bool adapt_threshold = false;
  Step duration_steps = 8000;
  std::string out_dir = "results";
  ScenarioParams scenario_params;
  int workers = 0;  // 0: one per hardware thread

  void validate() const;  // throws std::invalid_argument
};

/// Parses the sectioned key=value configuration file ([experiment] +
/// optional [scenario] overrides). See the README for the schema.
ExperimentSpec load_experiment(const std::string& path);

struct RawRow {
  std::string scenario;
  std::string policy;
  double lambda = 0.0;
  int t_pr = 0;
  int loops = 0;
  std::uint64_t seed = 0;
  int window_q = 0;
  double lqg_cost = 0.0;
};

struct AggregateRow {
  std::string scenario;
  std::string policy;
  double lambda = 0.0;
  int t_pr = 0;
  int loops = 0;
  int seed_count = 0;
  double mean_lqg = 0.0;
  double median_lqg = 0.0;
  double ci95_lo = 0.0;
  double ci95_hi = 0.0;
  double mean_aoi = 0.0;          // steps, averaged over loops and seeds
  double admission_rate_hz = 0.0;
  double mean_decision_us = 0.0;
};

struct ExperimentResult {
  std::vector<RawRow> raw;
  std::vector<AggregateRow> aggregate;
};

/// Executes the sweep. Raw rows come out in deterministic grid order
/// regardless of the worker pool scheduling.
ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Re-derives the aggregate J statistics from raw rows (the pure fold used
/// by run_experiment; AoI/rate/decision-time columns are not derivable from
/// raw rows and stay zero).
std::vector<AggregateRow> aggregate_from_raw(std::span<const RawRow> raw);

void write_results(const ExperimentResult& result, const std::string& dir);
std::vector<RawRow> read_raw_csv(const std::string& path);
std::vector<AggregateRow> read_aggregate_csv(const std::string& path);

struct Comparison {
  AggregateRow best_a;
  AggregateRow best_b;
  double improvement = 0.0;  // (mean_b - mean_a) / mean_b
  bool ci_disjoint = false;
};

/// Compares two policies at their best (lowest mean) rows in the aggregate.
/// Throws std::invalid_argument when a policy is missing.
Comparison compare_policies(std::span<const AggregateRow> aggregate,
                            const std::string& policy_a, const std::string& policy_b);

/// Recomputes the aggregate from raw.csv in `dir` and checks it against
/// aggregate.csv (J statistics and row keys). Returns a diagnostic on
/// mismatch, nothing on success.
std::optional<std::string> verify_results(const std::string& dir);

}  // namespace vou
