#include "vou/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"value-of-update admission control experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string seeds_override;
  std::string out_override;
  auto* run_cmd = app.add_subcommand("run", "execute an experiment sweep");
  run_cmd->add_option("--config", config_path, "experiment configuration file")
      ->required();
  run_cmd->add_option("--seeds", seeds_override, "comma-separated seed override");
  run_cmd->add_option("--out", out_override, "output directory override");

  std::string agg_path, policy_a, policy_b;
  auto* compare_cmd = app.add_subcommand("compare", "compare two policies at their best lambda");
  compare_cmd->add_option("--in", agg_path, "aggregate.csv path")->required();
  compare_cmd->add_option("--a", policy_a, "first policy")->required();
  compare_cmd->add_option("--b", policy_b, "second policy")->required();

  std::string verify_dir;
  auto* verify_cmd = app.add_subcommand("verify", "re-derive aggregates from raw rows");
  verify_cmd->add_option("--in", verify_dir, "results directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      vou::ExperimentSpec spec = vou::load_experiment(config_path);
      if (!seeds_override.empty()) {
        spec.seeds.clear();
        std::string cur;
        for (char c : seeds_override + ",") {
          if (c == ',') {
            if (!cur.empty()) spec.seeds.push_back(std::stoull(cur));
            cur.clear();
          } else {
            cur += c;
          }
        }
        spec.validate();
      }
      if (!out_override.empty()) spec.out_dir = out_override;

      vou::ExperimentResult result = vou::run_experiment(spec);
      vou::write_results(result, spec.out_dir);
      std::printf("wrote %zu raw rows, %zu aggregate rows to %s\n", result.raw.size(),
                  result.aggregate.size(), spec.out_dir.c_str());
      return 0;
    }
    if (compare_cmd->parsed()) {
      auto aggregate = vou::read_aggregate_csv(agg_path);
      auto cmp = vou::compare_policies(aggregate, policy_a, policy_b);
      std::printf("%s best: mean=%.6g ci=[%.6g, %.6g] (lambda=%g, t_pr=%d)\n",
                  policy_a.c_str(), cmp.best_a.mean_lqg, cmp.best_a.ci95_lo,
                  cmp.best_a.ci95_hi, cmp.best_a.lambda, cmp.best_a.t_pr);
      std::printf("%s best: mean=%.6g ci=[%.6g, %.6g] (lambda=%g, t_pr=%d)\n",
                  policy_b.c_str(), cmp.best_b.mean_lqg, cmp.best_b.ci95_lo,
                  cmp.best_b.ci95_hi, cmp.best_b.lambda, cmp.best_b.t_pr);
      std::printf("improvement of %s over %s: %.1f%%, CI disjoint: %s\n",
                  policy_a.c_str(), policy_b.c_str(), 100.0 * cmp.improvement,
                  cmp.ci_disjoint ? "yes" : "no");
      return 0;
    }
    if (verify_cmd->parsed()) {
      auto issue = vou::verify_results(verify_dir);
      if (issue.has_value()) {
        std::fprintf(stderr, "verification failed: %s\n", issue->c_str());
        return 1;
      }
      std::printf("aggregates match the raw rows\n");
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
