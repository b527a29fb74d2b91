#include "vou/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace vou {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(s);
  while (std::getline(ss, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& s) { return std::stod(s); }
long to_long(const std::string& s) { return std::stol(s); }

bool to_bool(const std::string& s) {
  if (s == "on" || s == "true" || s == "1" || s == "yes") return true;
  if (s == "off" || s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("config: bad boolean value '" + s + "'");
}

struct Stats {
  double mean = 0.0, median = 0.0, lo = 0.0, hi = 0.0;
};

Stats summarize(std::vector<double> samples) {
  Stats st;
  const auto n = samples.size();
  if (n == 0) return st;
  double acc = 0.0;
  for (double v : samples) acc += v;
  st.mean = acc / static_cast<double>(n);
  std::sort(samples.begin(), samples.end());
  st.median = n % 2 == 1 ? samples[n / 2]
                         : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  double var = 0.0;
  for (double v : samples) var += (v - st.mean) * (v - st.mean);
  var = n > 1 ? var / static_cast<double>(n - 1) : 0.0;
  double half = 1.96 * std::sqrt(var / static_cast<double>(n));
  st.lo = st.mean - half;
  st.hi = st.mean + half;
  return st;
}

bool uses_lambda(PolicyKind kind) {
  return kind != PolicyKind::AcpRate && kind != PolicyKind::Periodic;
}

bool uses_horizon(PolicyKind kind) {
  return kind == PolicyKind::VouDyn || kind == PolicyKind::VouDynW;
}

struct Cell {
  PolicyKind policy;
  double lambda = 0.0;
  int t_pr = 0;
  int loops = 0;
  double proc_delay_ms = 0.0;
  std::string scenario_label;
};

struct RunOutput {
  std::array<double, 5> window_costs{};
  double mean_aoi = 0.0;
  double admission_rate = 0.0;
  double mean_decision_us = 0.0;
  bool ok = false;
  std::string error;
};

}  // namespace

void ExperimentSpec::validate() const {
  if (policies.empty()) throw std::invalid_argument("experiment: no policies");
  if (seeds.empty()) throw std::invalid_argument("experiment: no seeds");
  if (lambdas.empty()) throw std::invalid_argument("experiment: empty lambda grid");
  if (t_prs.empty()) throw std::invalid_argument("experiment: empty t_pr grid");
  if (loop_counts.empty()) throw std::invalid_argument("experiment: empty loop grid");
  if (proc_delays_ms.empty())
    throw std::invalid_argument("experiment: empty proc delay grid");
  if (duration_steps < 7001)
    throw std::invalid_argument(
        "experiment: duration_steps must cover the five cost windows (>= 7001)");
  for (int t : t_prs)
    if (t < 1) throw std::invalid_argument("experiment: t_pr must be >= 1");
  for (int l : loop_counts)
    if (l < 1) throw std::invalid_argument("experiment: loops must be >= 1");
}

ExperimentSpec load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);

  ExperimentSpec spec;
  spec.policies.clear();
  std::string section;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));

    auto bad = [&](const std::string& what) {
      return std::invalid_argument("config line " + std::to_string(line_no) + ": " +
                                   what);
    };

    if (section == "experiment" || section.empty()) {
      if (key == "name") spec.name = value;
      else if (key == "scenario") spec.scenario = value;
      else if (key == "policies") {
        for (const auto& p : split(value, ',')) {
          auto kind = parse_policy(p);
          if (!kind) throw bad("unknown policy '" + p + "'");
          spec.policies.push_back(*kind);
        }
      } else if (key == "seeds") {
        spec.seeds.clear();
        for (const auto& s : split(value, ','))
          spec.seeds.push_back(static_cast<std::uint64_t>(to_long(s)));
      } else if (key == "lambdas") {
        spec.lambdas.clear();
        for (const auto& s : split(value, ',')) spec.lambdas.push_back(to_double(s));
      } else if (key == "t_pr") {
        spec.t_prs.clear();
        for (const auto& s : split(value, ','))
          spec.t_prs.push_back(static_cast<int>(to_long(s)));
      } else if (key == "loops") {
        spec.loop_counts.clear();
        for (const auto& s : split(value, ','))
          spec.loop_counts.push_back(static_cast<int>(to_long(s)));
      } else if (key == "proc_delay_ms") {
        spec.proc_delays_ms.clear();
        for (const auto& s : split(value, ','))
          spec.proc_delays_ms.push_back(to_double(s));
      } else if (key == "adapt_threshold") spec.adapt_threshold = to_bool(value);
      else if (key == "duration_steps") spec.duration_steps = to_long(value);
      else if (key == "out_dir") spec.out_dir = value;
      else if (key == "workers") spec.workers = static_cast<int>(to_long(value));
      else throw bad("unknown experiment key '" + key + "'");
    } else if (section == "scenario") {
      auto& p = spec.scenario_params;
      if (key == "radio_fixed_ms") p.radio_fixed_ms = to_double(value);
      else if (key == "radio_exp_ms") p.radio_exp_ms = to_double(value);
      else if (key == "radio_loss") p.radio_loss = to_double(value);
      else if (key == "radio_queue") p.radio_queue = static_cast<std::size_t>(to_long(value));
      else if (key == "background_period_ms") p.background_period_ms = to_double(value);
      else if (key == "backbone_median_ms") p.backbone_median_ms = to_double(value);
      else if (key == "backbone_sigma") p.backbone_sigma = to_double(value);
      else if (key == "backbone_loss") p.backbone_loss = to_double(value);
      else throw bad("unknown scenario key '" + key + "'");
    } else {
      throw bad("unknown section [" + section + "]");
    }
  }

  if (const char* dir = std::getenv("RESULT_DIR")) spec.out_dir = dir;
  spec.validate();
  return spec;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();

  std::vector<Cell> cells;
  for (PolicyKind policy : spec.policies) {
    const auto lambdas = uses_lambda(policy) ? spec.lambdas : std::vector<double>{0.0};
    const auto horizons = uses_horizon(policy) ? spec.t_prs : std::vector<int>{0};
    for (double lambda : lambdas)
      for (int t_pr : horizons)
        for (int loops : spec.loop_counts)
          for (double delay : spec.proc_delays_ms) {
            Cell cell{policy, lambda, t_pr, loops, delay, spec.scenario};
            if (delay != 0.0)
              cell.scenario_label = spec.scenario + "+d" + std::to_string(static_cast<long>(delay));
            else
              cell.scenario_label = spec.scenario;
            cells.push_back(cell);
          }
  }

  struct Task {
    std::size_t cell;
    std::size_t seed_idx;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (std::size_t s = 0; s < spec.seeds.size(); ++s) tasks.push_back({c, s});

  std::vector<RunOutput> outputs(tasks.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Cell& cell = cells[tasks[i].cell];
      RunOutput& out = outputs[i];
      try {
        ScenarioParams params = spec.scenario_params;
        params.loops = cell.loops;
        params.duration_steps = spec.duration_steps;
        params.seed = spec.seeds[tasks[i].seed_idx];
        ScenarioConfig cfg = make_scenario(spec.scenario, params);

        PolicySpec policy;
        policy.kind = cell.policy;
        policy.lambda = cell.lambda;
        policy.horizon = cell.t_pr > 0 ? cell.t_pr : 10;
        policy.adapt_threshold = spec.adapt_threshold && uses_lambda(cell.policy);
        policy.proc_delay_ms = cell.proc_delay_ms;

        RunResult result = run(cfg, policy);

        double aoi = 0.0, rate = 0.0, dec = 0.0;
        for (int q = 0; q < 5; ++q) {
          double acc = 0.0;
          for (const auto& loop : result.loops)
            acc += loop.window_costs[static_cast<std::size_t>(q)];
          out.window_costs[static_cast<std::size_t>(q)] =
              acc / static_cast<double>(result.loops.size());
        }
        for (const auto& loop : result.loops) {
          aoi += loop.mean_aoi_steps;
          rate += loop.admission_rate_hz;
          dec += loop.mean_decision_us;
        }
        out.mean_aoi = aoi / static_cast<double>(result.loops.size());
        out.admission_rate = rate / static_cast<double>(result.loops.size());
        out.mean_decision_us = dec / static_cast<double>(result.loops.size());
        out.ok = true;
      } catch (const std::exception& e) {
        out.error = e.what();
      }
    }
  };

  unsigned n_workers = spec.workers > 0
                           ? static_cast<unsigned>(spec.workers)
                           : std::max(1u, std::thread::hardware_concurrency());
  n_workers = std::min<unsigned>(n_workers, static_cast<unsigned>(tasks.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  for (const auto& out : outputs)
    if (!out.ok) throw std::runtime_error("experiment run failed: " + out.error);

  ExperimentResult result;
  std::size_t task_idx = 0;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const Cell& cell = cells[c];
    std::vector<double> samples;
    double aoi = 0.0, rate = 0.0, dec = 0.0;
    for (std::size_t s = 0; s < spec.seeds.size(); ++s, ++task_idx) {
      const RunOutput& out = outputs[task_idx];
      for (int q = 0; q < 5; ++q) {
        RawRow row;
        row.scenario = cell.scenario_label;
        row.policy = policy_name(cell.policy);
        row.lambda = cell.lambda;
        row.t_pr = cell.t_pr;
        row.loops = cell.loops;
        row.seed = spec.seeds[s];
        row.window_q = q;
        row.lqg_cost = out.window_costs[static_cast<std::size_t>(q)];
        result.raw.push_back(row);
        samples.push_back(row.lqg_cost);
      }
      aoi += out.mean_aoi;
      rate += out.admission_rate;
      dec += out.mean_decision_us;
    }
    Stats st = summarize(std::move(samples));
    AggregateRow agg;
    agg.scenario = cell.scenario_label;
    agg.policy = policy_name(cell.policy);
    agg.lambda = cell.lambda;
    agg.t_pr = cell.t_pr;
    agg.loops = cell.loops;
    agg.seed_count = static_cast<int>(spec.seeds.size());
    agg.mean_lqg = st.mean;
    agg.median_lqg = st.median;
    agg.ci95_lo = st.lo;
    agg.ci95_hi = st.hi;
    agg.mean_aoi = aoi / static_cast<double>(spec.seeds.size());
    agg.admission_rate_hz = rate / static_cast<double>(spec.seeds.size());
    agg.mean_decision_us = dec / static_cast<double>(spec.seeds.size());
    result.aggregate.push_back(agg);
  }
  return result;
}

std::vector<AggregateRow> aggregate_from_raw(std::span<const RawRow> raw) {
  // key in first-seen order
  std::vector<AggregateRow> rows;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<double>> samples;
  std::vector<std::map<std::uint64_t, bool>> seeds;
  for (const auto& r : raw) {
    std::string key = r.scenario + "|" + r.policy + "|" + fmt_g(r.lambda) + "|" +
                      std::to_string(r.t_pr) + "|" + std::to_string(r.loops);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, rows.size()).first;
      AggregateRow agg;
      agg.scenario = r.scenario;
      agg.policy = r.policy;
      agg.lambda = r.lambda;
      agg.t_pr = r.t_pr;
      agg.loops = r.loops;
      rows.push_back(agg);
      samples.emplace_back();
      seeds.emplace_back();
    }
    samples[it->second].push_back(r.lqg_cost);
    seeds[it->second][r.seed] = true;
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Stats st = summarize(samples[i]);
    rows[i].seed_count = static_cast<int>(seeds[i].size());
    rows[i].mean_lqg = st.mean;
    rows[i].median_lqg = st.median;
    rows[i].ci95_lo = st.lo;
    rows[i].ci95_hi = st.hi;
  }
  return rows;
}

void write_results(const ExperimentResult& result, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir + "/raw.csv");
    if (!out) throw std::runtime_error("cannot write " + dir + "/raw.csv");
    out << "# schema=1\n";
    out << "scenario,policy,lambda,t_pr,loops,seed,window_q,lqg_cost\n";
    for (const auto& r : result.raw)
      out << r.scenario << ',' << r.policy << ',' << fmt_g(r.lambda) << ','
          << r.t_pr << ',' << r.loops << ',' << r.seed << ',' << r.window_q << ','
          << fmt_g(r.lqg_cost) << '\n';
  }
  {
    std::ofstream out(dir + "/aggregate.csv");
    if (!out) throw std::runtime_error("cannot write " + dir + "/aggregate.csv");
    out << "# schema=1\n";
    out << "scenario,policy,lambda,t_pr,loops,seed_count,mean_lqg,median_lqg,"
           "ci95_lo,ci95_hi,mean_aoi,admission_rate,mean_decision_us\n";
    for (const auto& a : result.aggregate)
      out << a.scenario << ',' << a.policy << ',' << fmt_g(a.lambda) << ','
          << a.t_pr << ',' << a.loops << ',' << a.seed_count << ','
          << fmt_g(a.mean_lqg) << ',' << fmt_g(a.median_lqg) << ','
          << fmt_g(a.ci95_lo) << ',' << fmt_g(a.ci95_hi) << ','
          << fmt_g(a.mean_aoi) << ',' << fmt_g(a.admission_rate_hz) << ','
          << fmt_g(a.mean_decision_us) << '\n';
  }
}

namespace {

std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                               std::size_t expected_cols) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {  // column header
      header_seen = true;
      continue;
    }
    auto fields = split(line, ',');
    if (fields.size() != expected_cols)
      throw std::runtime_error(path + ": bad column count in row '" + line + "'");
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

std::vector<RawRow> read_raw_csv(const std::string& path) {
  std::vector<RawRow> out;
  for (const auto& f : read_csv(path, 8)) {
    RawRow r;
    r.scenario = f[0];
    r.policy = f[1];
    r.lambda = to_double(f[2]);
    r.t_pr = static_cast<int>(to_long(f[3]));
    r.loops = static_cast<int>(to_long(f[4]));
    r.seed = static_cast<std::uint64_t>(to_long(f[5]));
    r.window_q = static_cast<int>(to_long(f[6]));
    r.lqg_cost = to_double(f[7]);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<AggregateRow> read_aggregate_csv(const std::string& path) {
  std::vector<AggregateRow> out;
  for (const auto& f : read_csv(path, 13)) {
    AggregateRow a;
    a.scenario = f[0];
    a.policy = f[1];
    a.lambda = to_double(f[2]);
    a.t_pr = static_cast<int>(to_long(f[3]));
    a.loops = static_cast<int>(to_long(f[4]));
    a.seed_count = static_cast<int>(to_long(f[5]));
    a.mean_lqg = to_double(f[6]);
    a.median_lqg = to_double(f[7]);
    a.ci95_lo = to_double(f[8]);
    a.ci95_hi = to_double(f[9]);
    a.mean_aoi = to_double(f[10]);
    a.admission_rate_hz = to_double(f[11]);
    a.mean_decision_us = to_double(f[12]);
    out.push_back(std::move(a));
  }
  return out;
}

Comparison compare_policies(std::span<const AggregateRow> aggregate,
                            const std::string& policy_a, const std::string& policy_b) {
  auto best_of = [&](const std::string& policy) -> const AggregateRow* {
    const AggregateRow* best = nullptr;
    for (const auto& row : aggregate)
      if (row.policy == policy && (best == nullptr || row.mean_lqg < best->mean_lqg))
        best = &row;
    return best;
  };
  const AggregateRow* a = best_of(policy_a);
  const AggregateRow* b = best_of(policy_b);
  if (a == nullptr) throw std::invalid_argument("missing policy: " + policy_a);
  if (b == nullptr) throw std::invalid_argument("missing policy: " + policy_b);

  Comparison cmp;
  cmp.best_a = *a;
  cmp.best_b = *b;
  cmp.improvement = b->mean_lqg != 0.0 ? (b->mean_lqg - a->mean_lqg) / b->mean_lqg : 0.0;
  cmp.ci_disjoint = a->ci95_hi < b->ci95_lo || b->ci95_hi < a->ci95_lo;
  return cmp;
}

std::optional<std::string> verify_results(const std::string& dir) {
  auto raw = read_raw_csv(dir + "/raw.csv");
  auto stored = read_aggregate_csv(dir + "/aggregate.csv");
  auto derived = aggregate_from_raw(raw);

  if (stored.size() != derived.size())
    return "aggregate row count mismatch: stored " + std::to_string(stored.size()) +
           ", derived " + std::to_string(derived.size());

  auto close = [](double a, double b) {
    double scale = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) <= 1e-9 * scale;
  };
  for (std::size_t i = 0; i < stored.size(); ++i) {
    const auto& s = stored[i];
    const auto& d = derived[i];
    if (s.scenario != d.scenario || s.policy != d.policy || s.t_pr != d.t_pr ||
        s.loops != d.loops || !close(s.lambda, d.lambda))
      return "aggregate key mismatch at row " + std::to_string(i);
    if (s.seed_count != d.seed_count) return "seed count mismatch at row " + std::to_string(i);
    if (!close(s.mean_lqg, d.mean_lqg) || !close(s.median_lqg, d.median_lqg) ||
        !close(s.ci95_lo, d.ci95_lo) || !close(s.ci95_hi, d.ci95_hi))
      return "aggregate statistics mismatch at row " + std::to_string(i) + " (" +
             s.policy + ")";
  }
  return std::nullopt;
}

}  // namespace vou
