#pragma once

#include "vou/common.hpp"
#include "vou/net_stats.hpp"

#include <optional>
#include <span>
#include <vector>

namespace vou {

/// Hypothesized network state of one outstanding packet. Received/Lost mean
/// the network finished processing the packet; the Will* states mean it is
/// still in flight.
enum class OpState : std::uint8_t { Received, WillReceive, Lost, WillLose };

inline bool is_processed(OpState s) {
  return s == OpState::Received || s == OpState::Lost;
}
inline bool is_received_kind(OpState s) {
  return s == OpState::Received || s == OpState::WillReceive;
}

struct OpAssignment {
  Step gen = 0;
  OpState state = OpState::WillReceive;
};

/// One feasible joint assignment of states to the tracked packets, with its
/// (renormalized) probability.
struct BeliefNode {
  std::vector<OpAssignment> assignment;  // oldest -> freshest
  double probability = 0.0;
};

/// Closed-form per-packet state probabilities: processing finishes uniformly
/// within (0, t_max); conditioned on finishing after tau, the loss
/// probability is (tau/t_max)^alpha with alpha = 1/p_l - 1, so that the total
/// loss mass integrates to p_l.
struct StateProbModel {
  double p_l = 0.0;
  double t_max_ms = 0.0;

  /// Unavailable until enough delay samples exist (cold start) or when the
  /// quantile degenerates to zero.
  static std::optional<StateProbModel> from_stats(const NetStats& stats,
                                                  std::size_t min_samples = 8);
};

struct StateProbs {
  double received = 0.0;
  double will_receive = 0.0;
  double lost = 0.0;
  double will_lose = 0.0;
};

/// Probabilities of the four states for a packet sent `elapsed_ms` ago.
/// All four lie in [0,1] and sum to 1.
StateProbs op_state_probs(const StateProbModel& model, double elapsed_ms);

/// Enumerates the feasible joint assignments for the freshest
/// `max_node_size` packets: ordered processing means the processed packets
/// always form a prefix, giving (n+1)*2^n nodes. Node probabilities are the
/// per-packet products (independence), renormalized over the feasible set.
/// Without a model (cold start) a single all-WillReceive node is returned.
std::vector<BeliefNode> build_nodes(std::span<const OutstandingPacket> ops,
                                    double now_ms,
                                    const std::optional<StateProbModel>& model,
                                    int max_node_size = 5);

}  // namespace vou
