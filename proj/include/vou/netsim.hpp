#pragma once

#include "vou/admission.hpp"
#include "vou/augment.hpp"
#include "vou/belief.hpp"
#include "vou/common.hpp"
#include "vou/control.hpp"
#include "vou/net_stats.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace vou {

/// Service time composed of a fixed part plus optional exponential and
/// lognormal components; at least one part must be configured.
struct ServiceSpec {
  double fixed_ms = 0.0;
  double exp_mean_ms = 0.0;     // exponential jitter when > 0
  double logn_median_ms = 0.0;  // lognormal component when > 0
  double logn_sigma = 0.0;

  double sample(std::mt19937_64& rng) const;
};

struct HopModel {
  ServiceSpec service;
  double loss_prob = 0.0;        // Bernoulli drop per traversal
  std::size_t queue_capacity = 0;  // waiting slots; 0 = unbounded
  int shared_medium_group = -1;  // hops with the same id share one server
  bool parallel = false;         // pure delay element, no queue (reorders)
};

struct BackgroundFlow {
  double period_ms = 10.0;
  int payload_bytes = 20;
  std::vector<int> path;  // indices into ScenarioConfig::hops
  double phase_ms = 0.0;
};

struct ScenarioConfig {
  std::string name = "scenario";
  int loops = 1;
  LoopModel model;
  std::vector<HopModel> hops;
  std::vector<std::vector<int>> data_paths;  // per loop
  std::vector<std::vector<int>> ack_paths;   // per loop
  std::vector<BackgroundFlow> background;
  Step duration_steps = 8000;
  int payload_bytes = 20;
  std::uint64_t seed = 1;
  NetStatsConfig net_stats;
  int max_node_size = 5;
  std::size_t min_model_samples = 8;  // belief/curve cold-start threshold
  bool record_controller_trace = false;
  bool collect_hop_traces = false;

  void validate() const;  // throws std::invalid_argument
};

/// Deterministic event ordering: ties broken by (time, kind, loop, seq).
enum class EventKind : std::uint8_t {
  Deliver = 0,
  AckDeliver = 1,
  Epoch = 2,
  TimeoutScan = 3,
  Sample = 4,
  AdmitDecision = 5,
  HopDepart = 6,
  ControllerTick = 7,
};

struct SimEvent {
  double time_ms = 0.0;
  EventKind kind = EventKind::Sample;
  int loop = 0;
  std::uint64_t seq = 0;
  int packet = -1;  // hop/deliver events
  int hop = -1;
  int aux = 0;      // epoch sub-kind
};

struct PacketCounters {
  long admitted = 0;
  long delivered = 0;
  long lost = 0;
  long dropped = 0;
  long in_flight = 0;
  long acks_sent = 0;
  long acks_delivered = 0;
};

struct LoopResult {
  std::vector<Vec> x;    // plant trajectory, one entry per step
  std::vector<Vec> u;    // applied inputs
  std::vector<Step> aoi; // age at the controller per step
  std::array<double, 5> window_costs{};  // five cost windows
  bool windows_valid = false;
  long admissions = 0;
  double admission_rate_hz = 0.0;
  double mean_aoi_steps = 0.0;  // past the warmup prefix
  double mean_decision_us = 0.0;
  long max_outstanding = 0;
  // optional traces (record_controller_trace)
  std::vector<Observation> receptions;
  std::vector<Vec> estimates;
};

struct HopTrace {
  std::vector<int> arrivals;    // accepted packet ids in queue order
  std::vector<int> departures;  // packet ids at service completion
};

struct RunResult {
  std::vector<LoopResult> loops;
  PacketCounters data;
  std::vector<HopTrace> hop_traces;  // when collect_hop_traces

  double mean_window_cost() const;  // grand mean over loops and windows
};

/// Runs the scenario under the given admission policy. Deterministic: a
/// (config, policy, seed) triple always produces the same result.
RunResult run(const ScenarioConfig& config, const PolicySpec& policy);

/// Per-step age sequence of one loop (delivery resets to recv-gen, otherwise
/// +1 per step; k+1 sentinel before the first delivery).
std::span<const Step> aoi_trace(const RunResult& result, int loop);

}  // namespace vou
