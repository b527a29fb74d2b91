#include "vou/belief.hpp"

#include <algorithm>
#include <cmath>

namespace vou {

std::optional<StateProbModel> StateProbModel::from_stats(const NetStats& stats,
                                                         std::size_t min_samples) {
  if (stats.delay_sample_count() < min_samples) return std::nullopt;
  double t_max = stats.t_max_ms();
  if (t_max <= 0.0) return std::nullopt;
  return StateProbModel{std::clamp(stats.loss_prob(), 0.0, 1.0), t_max};
}

StateProbs op_state_probs(const StateProbModel& model, double elapsed_ms) {
  const double ratio = std::clamp(elapsed_ms / model.t_max_ms, 0.0, 1.0);
  StateProbs p;
  if (model.p_l <= 0.0) {
    // limit of the closed forms: no loss mass at all
    p.received = ratio;
    p.lost = 0.0;
  } else {
    const double tail = std::pow(ratio, 1.0 / model.p_l) * model.p_l;
    p.received = ratio - tail;
    p.lost = tail;
  }
  p.will_receive = (1.0 - model.p_l) - p.received;
  p.will_lose = model.p_l - p.lost;
  p.received = std::clamp(p.received, 0.0, 1.0);
  p.will_receive = std::clamp(p.will_receive, 0.0, 1.0);
  p.lost = std::clamp(p.lost, 0.0, 1.0);
  p.will_lose = std::clamp(p.will_lose, 0.0, 1.0);
  return p;
}

std::vector<BeliefNode> build_nodes(std::span<const OutstandingPacket> ops,
                                    double now_ms,
                                    const std::optional<StateProbModel>& model,
                                    int max_node_size) {
  // Only the freshest packets are hypothesized about; older ones are treated
  // as absent.
  std::size_t n = ops.size();
  if (std::cmp_greater(n, max_node_size)) n = static_cast<std::size_t>(max_node_size);
  std::span<const OutstandingPacket> kept = ops.subspan(ops.size() - n, n);

  if (n == 0) return {BeliefNode{{}, 1.0}};

  if (!model.has_value()) {
    // Cold start: assume everything in flight will make it.
    BeliefNode node;
    node.assignment.reserve(n);
    for (const auto& op : kept)
      node.assignment.push_back({op.gen, OpState::WillReceive});
    node.probability = 1.0;
    return {node};
  }

  std::vector<StateProbs> per_op(n);
  for (std::size_t i = 0; i < n; ++i)
    per_op[i] = op_state_probs(*model, now_ms - kept[i].send_ms);

  // Feasible assignments have a processed prefix (oldest packets finish
  // first under ordered processing): prefix length j with R/L choices,
  // remainder with WR/WL choices.
  std::vector<BeliefNode> nodes;
  nodes.reserve((n + 1) << n);
  std::vector<OpAssignment> assignment(n);
  double total = 0.0;

  for (std::size_t j = 0; j <= n; ++j) {
    const std::size_t combos = std::size_t{1} << n;
    for (std::size_t bits = 0; bits < combos; ++bits) {
      double prob = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool alt = (bits >> i) & 1;  // Lost / WillLose branch
        OpState s;
        double p;
        if (i < j) {
          s = alt ? OpState::Lost : OpState::Received;
          p = alt ? per_op[i].lost : per_op[i].received;
        } else {
          s = alt ? OpState::WillLose : OpState::WillReceive;
          p = alt ? per_op[i].will_lose : per_op[i].will_receive;
        }
        assignment[i] = {kept[i].gen, s};
        prob *= p;
      }
      nodes.push_back({assignment, prob});
      total += prob;
    }
  }

  if (total > 0.0)
    for (auto& node : nodes) node.probability /= total;
  else
    for (auto& node : nodes) node.probability = 1.0 / static_cast<double>(nodes.size());
  return nodes;
}

}  // namespace vou
