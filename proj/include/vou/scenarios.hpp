#pragma once

#include "vou/netsim.hpp"

#include <string>

namespace vou {

/// Reference loop: scalar unstable plant (A=1.2, B=1) with unit disturbance
/// and unit cost weights at a 10 ms sampling period.
LoopModel reference_loop_model();

/// Calibration knobs for the named scenarios. Defaults reproduce the
/// in-repo experiment configurations; they are simulator calibration
/// constants, not measured values.
struct ScenarioParams {
  int loops = 3;
  Step duration_steps = 8000;
  std::uint64_t seed = 1;

  // contended radio (local scenarios)
  double radio_fixed_ms = 2.2;
  double radio_exp_ms = 0.8;
  double radio_loss = 0.05;
  std::size_t radio_queue = 16;
  double background_period_ms = 10.0;

  // backbone (internet scenario)
  double backbone_median_ms = 25.0;
  double backbone_sigma = 0.5;
  double backbone_loss = 0.01;

  bool record_controller_trace = false;
  bool collect_hop_traces = false;
};

/// Lossless, delay-free single hop per direction; the closed loop behaves as
/// if sensor and controller were wired together.
ScenarioConfig ideal_scenario(int loops, Step duration_steps, std::uint64_t seed);

/// Constrained local network: every loop crosses two radio hops in each
/// direction, all radio hops share a single medium, and a background flow
/// occupies part of it.
ScenarioConfig two_hop_local_scenario(const ScenarioParams& params = {});

/// Wide-area setup: a shared radio hop per direction plus a high-variance
/// parallel backbone hop.
ScenarioConfig internet_scenario(const ScenarioParams& params = {});

/// Lookup by name: "ideal", "two_hop_local", "internet".
ScenarioConfig make_scenario(const std::string& name, const ScenarioParams& params);

}  // namespace vou
