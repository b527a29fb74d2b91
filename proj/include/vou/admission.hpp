#pragma once

#include "vou/augment.hpp"
#include "vou/belief.hpp"
#include "vou/common.hpp"
#include "vou/control.hpp"
#include "vou/net_stats.hpp"

#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vou {

/// Expected end-to-end delay as a function of the inter-sending time:
/// cubic least-squares fit over the (IST, delay) samples, projected onto
/// non-increasing values on an evaluation grid and floored at zero.
struct DelayCurve {
  Eigen::Vector4d coeffs = Eigen::Vector4d::Zero();  // raw fit, IST scaled to [0,1]
  double ist_hi_ms = 0.0;                            // fit domain [0, ist_hi]
  std::vector<double> grid;                          // projected values, uniform grid
  double d0_ms = 0.0;                                // projected d(0)

  /// Linear interpolation on the projected grid; the argument is clamped to
  /// the fit domain and the value to [0, d0].
  double eval_ms(double ist_ms) const;
};

/// Unavailable below `min_samples` samples or when the projected d(0)
/// degenerates to zero.
std::optional<DelayCurve> fit_delay_curve(
    std::span<const std::pair<double, double>> ist_delay_samples,
    std::size_t min_samples = 8, int grid_points = 257);

std::optional<DelayCurve> fit_delay_curve(
    const std::deque<std::pair<double, double>>& ist_delay_samples,
    std::size_t min_samples = 8, int grid_points = 257);

/// C_k = lambda * d(IST)/d(0); equals lambda exactly at IST = 0.
double transmission_cost(const DelayCurve& curve, double ist_inst_ms, double lambda);

/// Threshold scale with rate tracking: multiplicative +/- gamma steps per
/// decision epoch move lambda until the measured admission rate matches the
/// target.
struct ThresholdState {
  double lambda = 1.0;
  double target_rate_hz = 10.0;
  double measured_rate_hz = 0.0;
  double gamma = 0.02;       // multiplicative step per epoch
  double lambda_max = 1e6;
  double rate_ewma_weight = 0.2;
};

/// One adaptation step; returns the new lambda.
double adapt_threshold(ThresholdState& state);

/// Stand-in for the external age-minimizing rate controller: multiplicative
/// hill climbing on the epoch-mean age (repeat the last action while the age
/// improves, invert it otherwise).
struct AcpConfig {
  double epoch_ms = 500.0;
  double up = 1.25;
  double down = 0.8;
  double min_rate_hz = 1.0;
  double max_rate_hz = 100.0;  // one admission per sampling period
  double initial_rate_hz = 10.0;
};

class AcpRateController {
 public:
  explicit AcpRateController(AcpConfig cfg = {}) : cfg_(cfg), rate_hz_(cfg.initial_rate_hz) {}

  /// Feeds one epoch of feedback (mean age in steps, mean backlog) and
  /// returns the updated target rate.
  double on_epoch(double mean_aoi_steps, double mean_backlog);

  double rate_hz() const { return rate_hz_; }
  const AcpConfig& config() const { return cfg_; }

 private:
  AcpConfig cfg_;
  double rate_hz_;
  double prev_aoi_ = -1.0;  // unset
  bool last_was_up_ = true;
};

enum class PolicyKind {
  VouInst,
  VouDyn,
  VouDynW,
  AugmZwEt,
  AugmEtOp2,
  AugmEtCost,
  OracleCost,
  AcpRate,
  Periodic,
};

const char* policy_name(PolicyKind kind);
std::optional<PolicyKind> parse_policy(const std::string& name);

struct PolicySpec {
  PolicyKind kind = PolicyKind::Periodic;
  double lambda = 1.0;
  int horizon = 10;               // prediction horizon for the Dyn variants
  bool adapt_threshold = false;   // track the ACP-suggested rate
  double proc_delay_ms = 0.0;     // artificial decision latency
  AcpConfig acp;
  double epoch_ms = 100.0;        // threshold adaptation cadence
};

/// Everything a decision may read, snapshotted at one step.
struct SensorView {
  Step k = 0;
  double now_ms = 0.0;
  Vec x;                                       // fresh sample
  const NetStats* stats = nullptr;
  std::span<const BeliefNode> nodes;
  const AckedEstimator* acked = nullptr;
  const DelayCurve* curve = nullptr;           // null during cold start
  const LoopModel* model = nullptr;
  const std::map<Step, Vec>* op_measurements = nullptr;
  int op_count = 0;
  double ist_inst_ms = 0.0;
  const Vec* oracle_estimate = nullptr;        // OracleCost only
};

/// Per-sensor admission policy: the value rule and the benchmark rules
/// behind one interface, together with the threshold/rate bookkeeping.
class AdmissionPolicy {
 public:
  AdmissionPolicy(PolicySpec spec, std::uint64_t noise_seed);

  /// The admission decision for one step. Deterministic given the view, the
  /// policy state, and the seed (prediction noise is drawn from a stream
  /// derived per step).
  bool decide(const SensorView& view);

  void on_admission(double now_ms);
  /// Threshold adaptation epoch (rate measurement + lambda step).
  void on_threshold_epoch(double now_ms);
  /// Rate-controller epoch; feeds the age/backlog feedback.
  void on_acp_epoch(double mean_aoi_steps, double mean_backlog);

  bool wants_nodes() const;
  bool wants_curve() const;
  bool wants_oracle() const { return spec_.kind == PolicyKind::OracleCost; }

  double lambda() const { return threshold_.lambda; }
  double target_rate_hz() const { return acp_.rate_hz(); }
  double measured_rate_hz() const { return threshold_.measured_rate_hz; }
  const PolicySpec& spec() const { return spec_; }

 private:
  double cost(const SensorView& view) const;

  PolicySpec spec_;
  ThresholdState threshold_;
  AcpRateController acp_;
  std::uint64_t noise_seed_;
  double next_scheduled_ms_ = 0.0;  // AcpRate send schedule
  long admissions_in_epoch_ = 0;
  double last_epoch_ms_ = 0.0;
};

}  // namespace vou
