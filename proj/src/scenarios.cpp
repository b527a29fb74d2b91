#include "vou/scenarios.hpp"

#include <stdexcept>

namespace vou {

LoopModel reference_loop_model() {
  Mat A(1, 1), B(1, 1), Sigma(1, 1), Q(1, 1), R(1, 1);
  A << 1.2;
  B << 1.0;
  Sigma << 1.0;
  Q << 1.0;
  R << 1.0;
  return make_loop_model(A, B, Sigma, Q, R, 10.0);
}

ScenarioConfig ideal_scenario(int loops, Step duration_steps, std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.name = "ideal";
  cfg.loops = loops;
  cfg.model = reference_loop_model();
  cfg.duration_steps = duration_steps;
  cfg.seed = seed;

  HopModel wire;  // instantaneous, lossless
  wire.service = {};
  wire.loss_prob = 0.0;
  for (int i = 0; i < loops; ++i) {
    cfg.hops.push_back(wire);
    cfg.hops.push_back(wire);
    cfg.data_paths.push_back({2 * i});
    cfg.ack_paths.push_back({2 * i + 1});
  }
  return cfg;
}

ScenarioConfig two_hop_local_scenario(const ScenarioParams& p) {
  ScenarioConfig cfg;
  cfg.name = "two_hop_local";
  cfg.loops = p.loops;
  cfg.model = reference_loop_model();
  cfg.duration_steps = p.duration_steps;
  cfg.seed = p.seed;
  cfg.record_controller_trace = p.record_controller_trace;
  cfg.collect_hop_traces = p.collect_hop_traces;

  HopModel radio;
  radio.service.fixed_ms = p.radio_fixed_ms;
  radio.service.exp_mean_ms = p.radio_exp_ms;
  radio.loss_prob = p.radio_loss;
  radio.queue_capacity = p.radio_queue;
  radio.shared_medium_group = 0;  // one collision domain

  for (int i = 0; i < p.loops; ++i) {
    int base = static_cast<int>(cfg.hops.size());
    for (int h = 0; h < 4; ++h) cfg.hops.push_back(radio);
    cfg.data_paths.push_back({base, base + 1});
    cfg.ack_paths.push_back({base + 2, base + 3});
  }

  int bg_hop = static_cast<int>(cfg.hops.size());
  cfg.hops.push_back(radio);
  BackgroundFlow bg;
  bg.period_ms = p.background_period_ms;
  bg.path = {bg_hop};
  bg.phase_ms = 1.0;  // off the sampling instants
  cfg.background.push_back(bg);
  return cfg;
}

ScenarioConfig internet_scenario(const ScenarioParams& p) {
  ScenarioConfig cfg;
  cfg.name = "internet";
  cfg.loops = p.loops;
  cfg.model = reference_loop_model();
  cfg.duration_steps = p.duration_steps;
  cfg.seed = p.seed;
  cfg.record_controller_trace = p.record_controller_trace;
  cfg.collect_hop_traces = p.collect_hop_traces;

  HopModel radio;
  radio.service.fixed_ms = p.radio_fixed_ms;
  radio.service.exp_mean_ms = p.radio_exp_ms;
  radio.loss_prob = p.radio_loss;
  radio.queue_capacity = p.radio_queue;
  radio.shared_medium_group = 0;

  HopModel backbone;
  backbone.service.logn_median_ms = p.backbone_median_ms;
  backbone.service.logn_sigma = p.backbone_sigma;
  backbone.loss_prob = p.backbone_loss;
  backbone.parallel = true;  // wide pipe, per-packet delay

  for (int i = 0; i < p.loops; ++i) {
    int base = static_cast<int>(cfg.hops.size());
    cfg.hops.push_back(radio);     // sensor -> gateway
    cfg.hops.push_back(backbone);  // gateway -> remote end
    cfg.hops.push_back(backbone);  // remote end -> gateway
    cfg.hops.push_back(radio);     // gateway -> sensor (ACK)
    cfg.data_paths.push_back({base, base + 1});
    cfg.ack_paths.push_back({base + 2, base + 3});
  }

  int bg_hop = static_cast<int>(cfg.hops.size());
  cfg.hops.push_back(radio);
  BackgroundFlow bg;
  bg.period_ms = p.background_period_ms;
  bg.path = {bg_hop};
  bg.phase_ms = 1.0;
  cfg.background.push_back(bg);
  return cfg;
}

ScenarioConfig make_scenario(const std::string& name, const ScenarioParams& p) {
  if (name == "ideal") {
    auto cfg = ideal_scenario(p.loops, p.duration_steps, p.seed);
    cfg.record_controller_trace = p.record_controller_trace;
    cfg.collect_hop_traces = p.collect_hop_traces;
    return cfg;
  }
  if (name == "two_hop_local") return two_hop_local_scenario(p);
  if (name == "internet") return internet_scenario(p);
  throw std::invalid_argument("unknown scenario: " + name);
}

}  // namespace vou
