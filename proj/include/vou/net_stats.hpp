#pragma once

#include "vou/common.hpp"

#include <cstddef>
#include <deque>
#include <optional>
#include <utility>
#include <vector>

namespace vou {

/// An admitted, not yet acknowledged status update, tracked at the sensor.
struct OutstandingPacket {
  Step gen = 0;                 // generation step
  double send_ms = 0.0;         // admission wall time
  double ist_ms = 0.0;          // inter-sending time at admission
  double rto_deadline_ms = 0.0; // give-up time
};

/// Acknowledgment content: the update's generation and reception steps plus
/// the ACK's own arrival time at the sensor.
struct AckRecord {
  Step gen = 0;
  Step recv = 0;
  double arrival_ms = 0.0;
};

struct NetStatsConfig {
  std::size_t delay_capacity = 512;
  std::size_t ist_capacity = 1024;
  double p_ack_weight = 0.05;    // EWMA weight per ACK/timeout outcome
  double srtt_alpha = 0.125;     // RFC-6298 style smoothing
  double rttvar_beta = 0.25;
  double rto_initial_ms = 1000.0;
  double rto_floor_ms = 200.0;
  double rto_cap_ms = 10'000.0;
  double first_ist_fallback_ms = 10'000.0;  // sentinel before any delay stats
  double period_ms = 10.0;       // step length, for (recv-gen) -> ms
};

/// Sensor-side bookkeeping: outstanding packets, ACK processing with
/// TCP-style timeout state, and the running statistics that feed the belief
/// and delay models. Single-owner mutable state.
class NetStats {
 public:
  explicit NetStats(NetStatsConfig cfg = {});

  /// Appends a new outstanding packet. `gen` must be fresher than every
  /// tracked packet. The first-ever admission gets a flat-tail IST sentinel
  /// (10 * t_max when delay stats exist, a configured constant otherwise).
  const OutstandingPacket& record_admission(Step gen, double now_ms);

  /// Handles one acknowledgment: records the delay and (IST, delay) samples,
  /// counts the ACKed packet as a success, refreshes the RTO state, and
  /// removes the packet together with everything older. Packets removed only
  /// because a fresher ACK arrived are not counted as either outcome.
  /// Duplicate or unknown ACKs are no-ops (empty return).
  std::vector<OutstandingPacket> process_ack(const AckRecord& ack, double now_ms);

  /// Removes every packet whose deadline has passed (inclusive) and counts
  /// each as a non-ACKed outcome.
  std::vector<OutstandingPacket> check_timeouts(double now_ms);

  /// p_l = 1 - sqrt(p_ack): per-direction loss estimate under symmetric
  /// data/ACK channels.
  double loss_prob() const;

  double p_ack() const { return p_ack_; }
  double rto_ms() const { return rto_ms_; }
  double srtt_ms() const { return srtt_ms_; }
  double rttvar_ms() const { return rttvar_ms_; }

  /// 95%-quantile of the recorded end-to-end delays; 0 when empty.
  /// Recomputed lazily.
  double t_max_ms() const;

  std::size_t delay_sample_count() const { return delays_ms_.size(); }
  const std::deque<double>& delay_samples_ms() const { return delays_ms_; }
  const std::deque<std::pair<double, double>>& ist_delay_samples() const {
    return ist_delay_;
  }

  /// Mean of delay samples strictly below / above a threshold.
  std::optional<double> mean_delay_below(double thr_ms) const;
  std::optional<double> mean_delay_above(double thr_ms) const;

  const std::vector<OutstandingPacket>& outstanding() const { return ops_; }
  bool has_admitted() const { return last_admission_ms_.has_value(); }
  double last_admission_ms() const { return last_admission_ms_.value(); }

  /// Time since the previous admission; the first-admission sentinel applies.
  double instantaneous_ist_ms(double now_ms) const;

  Step freshest_acked_gen() const { return freshest_acked_; }

  /// Bumped whenever a sample buffer changes; cheap cache invalidation for
  /// consumers (delay-curve fit, t_max).
  std::uint64_t version() const { return version_; }

  const NetStatsConfig& config() const { return cfg_; }

 private:
  void push_outcome(bool acked);

  NetStatsConfig cfg_;
  std::vector<OutstandingPacket> ops_;  // sorted by gen, strictly increasing
  std::deque<double> delays_ms_;
  std::deque<std::pair<double, double>> ist_delay_;
  double p_ack_ = 1.0;
  double srtt_ms_ = 0.0;
  double rttvar_ms_ = 0.0;
  double rto_ms_;
  bool have_rtt_ = false;
  std::optional<double> last_admission_ms_;
  Step freshest_acked_ = -1;
  std::uint64_t version_ = 0;
  mutable double t_max_cache_ = 0.0;
  mutable std::uint64_t t_max_version_ = ~0ULL;
};

}  // namespace vou
