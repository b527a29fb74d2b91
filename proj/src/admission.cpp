#include "vou/admission.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vou {

double DelayCurve::eval_ms(double ist_ms) const {
  if (grid.empty()) return 0.0;
  if (ist_hi_ms <= 0.0) return grid.front();
  double pos = std::clamp(ist_ms, 0.0, ist_hi_ms) / ist_hi_ms *
               static_cast<double>(grid.size() - 1);
  auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= grid.size()) return grid.back();
  double frac = pos - static_cast<double>(lo);
  double v = grid[lo] * (1.0 - frac) + grid[lo + 1] * frac;
  return std::clamp(v, 0.0, d0_ms);
}

std::optional<DelayCurve> fit_delay_curve(
    std::span<const std::pair<double, double>> samples, std::size_t min_samples,
    int grid_points) {
  if (samples.size() < min_samples) return std::nullopt;

  double ist_hi = 0.0;
  for (const auto& [ist, delay] : samples) ist_hi = std::max(ist_hi, ist);
  if (ist_hi <= 0.0) return std::nullopt;

  // Cubic least squares on IST scaled into [0,1] for conditioning.
  Eigen::MatrixXd V(samples.size(), 4);
  Eigen::VectorXd y(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double t = std::clamp(samples[i].first, 0.0, ist_hi) / ist_hi;
    V(static_cast<Eigen::Index>(i), 0) = 1.0;
    V(static_cast<Eigen::Index>(i), 1) = t;
    V(static_cast<Eigen::Index>(i), 2) = t * t;
    V(static_cast<Eigen::Index>(i), 3) = t * t * t;
    y(static_cast<Eigen::Index>(i)) = samples[i].second;
  }

  DelayCurve curve;
  curve.coeffs = V.colPivHouseholderQr().solve(y);
  curve.ist_hi_ms = ist_hi;

  curve.grid.resize(static_cast<std::size_t>(grid_points));
  for (int i = 0; i < grid_points; ++i) {
    double t = static_cast<double>(i) / static_cast<double>(grid_points - 1);
    curve.grid[static_cast<std::size_t>(i)] =
        curve.coeffs(0) + curve.coeffs(1) * t + curve.coeffs(2) * t * t +
        curve.coeffs(3) * t * t * t;
  }

  // Pool-adjacent-violators projection onto non-increasing sequences
  // (isotonic regression of the negated grid), then floor at zero.
  {
    std::vector<double> value;
    std::vector<int> count;
    value.reserve(curve.grid.size());
    count.reserve(curve.grid.size());
    for (double g : curve.grid) {
      value.push_back(g);
      count.push_back(1);
      while (value.size() > 1 && value[value.size() - 2] < value.back()) {
        double merged = (value[value.size() - 2] * count[count.size() - 2] +
                         value.back() * count.back()) /
                        static_cast<double>(count[count.size() - 2] + count.back());
        count[count.size() - 2] += count.back();
        value[value.size() - 2] = merged;
        value.pop_back();
        count.pop_back();
      }
    }
    std::size_t at = 0;
    for (std::size_t blk = 0; blk < value.size(); ++blk)
      for (int r = 0; r < count[blk]; ++r) curve.grid[at++] = std::max(value[blk], 0.0);
  }

  curve.d0_ms = curve.grid.front();
  if (curve.d0_ms <= 0.0) return std::nullopt;  // degenerate, no usable scale
  return curve;
}

std::optional<DelayCurve> fit_delay_curve(
    const std::deque<std::pair<double, double>>& samples, std::size_t min_samples,
    int grid_points) {
  std::vector<std::pair<double, double>> copy(samples.begin(), samples.end());
  return fit_delay_curve(std::span<const std::pair<double, double>>(copy),
                         min_samples, grid_points);
}

double transmission_cost(const DelayCurve& curve, double ist_inst_ms, double lambda) {
  if (curve.d0_ms <= 0.0) return lambda;
  return lambda * curve.eval_ms(ist_inst_ms) / curve.d0_ms;
}

double adapt_threshold(ThresholdState& state) {
  if (state.target_rate_hz <= 0.0)
    throw std::invalid_argument("adapt_threshold: target rate must be positive");
  if (state.measured_rate_hz > state.target_rate_hz)
    state.lambda *= 1.0 + state.gamma;
  else if (state.measured_rate_hz < state.target_rate_hz)
    state.lambda /= 1.0 + state.gamma;
  state.lambda = std::min(state.lambda, state.lambda_max);
  return state.lambda;
}

double AcpRateController::on_epoch(double mean_aoi_steps, double /*mean_backlog*/) {
  if (prev_aoi_ >= 0.0) {
    const bool improved = mean_aoi_steps < prev_aoi_;
    if (!improved) last_was_up_ = !last_was_up_;
    rate_hz_ *= last_was_up_ ? cfg_.up : cfg_.down;
    rate_hz_ = std::clamp(rate_hz_, cfg_.min_rate_hz, cfg_.max_rate_hz);
  }
  prev_aoi_ = mean_aoi_steps;
  return rate_hz_;
}

const char* policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::VouInst: return "vou_inst";
    case PolicyKind::VouDyn: return "vou_dyn";
    case PolicyKind::VouDynW: return "vou_dyn_w";
    case PolicyKind::AugmZwEt: return "augm_zw_et";
    case PolicyKind::AugmEtOp2: return "augm_et_op2";
    case PolicyKind::AugmEtCost: return "augm_et_cost";
    case PolicyKind::OracleCost: return "oracle_cost";
    case PolicyKind::AcpRate: return "acp_rate";
    case PolicyKind::Periodic: return "periodic";
  }
  return "unknown";
}

std::optional<PolicyKind> parse_policy(const std::string& name) {
  for (PolicyKind kind :
       {PolicyKind::VouInst, PolicyKind::VouDyn, PolicyKind::VouDynW,
        PolicyKind::AugmZwEt, PolicyKind::AugmEtOp2, PolicyKind::AugmEtCost,
        PolicyKind::OracleCost, PolicyKind::AcpRate, PolicyKind::Periodic})
    if (name == policy_name(kind)) return kind;
  return std::nullopt;
}

AdmissionPolicy::AdmissionPolicy(PolicySpec spec, std::uint64_t noise_seed)
    : spec_(spec), acp_(spec.acp), noise_seed_(noise_seed) {
  threshold_.lambda = spec.lambda;
  threshold_.target_rate_hz = acp_.rate_hz();
}

bool AdmissionPolicy::wants_nodes() const {
  switch (spec_.kind) {
    case PolicyKind::VouInst:
    case PolicyKind::VouDyn:
    case PolicyKind::VouDynW:
      return true;
    default:
      return false;
  }
}

bool AdmissionPolicy::wants_curve() const {
  switch (spec_.kind) {
    case PolicyKind::VouInst:
    case PolicyKind::VouDyn:
    case PolicyKind::VouDynW:
    case PolicyKind::AugmEtCost:
    case PolicyKind::OracleCost:
      return true;
    default:
      return false;
  }
}

double AdmissionPolicy::cost(const SensorView& view) const {
  // Maximally cautious before the curve exists.
  if (view.curve == nullptr) return threshold_.lambda;
  return transmission_cost(*view.curve, view.ist_inst_ms, threshold_.lambda);
}

bool AdmissionPolicy::decide(const SensorView& view) {
  switch (spec_.kind) {
    case PolicyKind::Periodic:
      return true;

    case PolicyKind::AcpRate: {
      if (view.now_ms + 1e-9 >= next_scheduled_ms_) {
        next_scheduled_ms_ = view.now_ms + 1000.0 / acp_.rate_hz();
        return true;
      }
      return false;
    }

    case PolicyKind::AugmZwEt:
    case PolicyKind::AugmEtOp2: {
      const int max_ops = spec_.kind == PolicyKind::AugmZwEt ? 1 : 2;
      if (view.op_count >= max_ops) return false;
      double err = l1_norm(view.acked->estimate() - view.x);
      return err > threshold_.lambda;
    }

    case PolicyKind::AugmEtCost: {
      double err = l1_norm(view.acked->estimate() - view.x);
      return err - cost(view) > 0.0;
    }

    case PolicyKind::OracleCost: {
      double err = l1_norm(*view.oracle_estimate - view.x);
      return err - cost(view) > 0.0;
    }

    case PolicyKind::VouInst: {
      double r = relevance_inst(view.k, view.x, view.nodes, *view.acked, *view.stats,
                                *view.model, *view.op_measurements);
      return r - cost(view) > 0.0;
    }

    case PolicyKind::VouDyn:
    case PolicyKind::VouDynW: {
      DynParams params;
      params.horizon = spec_.horizon;
      params.sample_noise = spec_.kind == PolicyKind::VouDynW;
      // per-step stream: the decision is replayable from (seed, k) alone
      auto rng = make_stream(noise_seed_, 0xd95, static_cast<std::uint64_t>(view.k));
      double r = relevance_dyn(view.k, view.x, view.nodes, *view.acked, *view.stats,
                               *view.model, params, view.curve,
                               *view.op_measurements, rng);
      return r - cost(view) > 0.0;
    }
  }
  return false;
}

void AdmissionPolicy::on_admission(double) { ++admissions_in_epoch_; }

void AdmissionPolicy::on_threshold_epoch(double now_ms) {
  double span_s = (now_ms - last_epoch_ms_) / 1000.0;
  last_epoch_ms_ = now_ms;
  if (span_s <= 0.0) return;
  double rate = static_cast<double>(admissions_in_epoch_) / span_s;
  admissions_in_epoch_ = 0;
  threshold_.measured_rate_hz =
      (1.0 - threshold_.rate_ewma_weight) * threshold_.measured_rate_hz +
      threshold_.rate_ewma_weight * rate;
  if (spec_.adapt_threshold) {
    threshold_.target_rate_hz = acp_.rate_hz();
    adapt_threshold(threshold_);
  }
}

void AdmissionPolicy::on_acp_epoch(double mean_aoi_steps, double mean_backlog) {
  acp_.on_epoch(mean_aoi_steps, mean_backlog);
}

}  // namespace vou
