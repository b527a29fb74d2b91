#include "vou/belief.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

using namespace vou;

namespace {

std::vector<OutstandingPacket> make_ops(std::initializer_list<double> send_times) {
  std::vector<OutstandingPacket> ops;
  Step gen = 0;
  for (double t : send_times) {
    OutstandingPacket op;
    op.gen = gen++;
    op.send_ms = t;
    ops.push_back(op);
  }
  return ops;
}

// Brute-force oracle: enumerate all 4^n joint assignments, discard the ones
// where an older packet is still in flight while a fresher one is already
// processed, take per-packet probability products, renormalize.
std::vector<BeliefNode> brute_force_nodes(std::span<const OutstandingPacket> ops,
                                          double now_ms, const StateProbModel& model) {
  const std::size_t n = ops.size();
  std::vector<StateProbs> per_op(n);
  for (std::size_t i = 0; i < n; ++i)
    per_op[i] = op_state_probs(model, now_ms - ops[i].send_ms);

  const OpState all_states[4] = {OpState::Received, OpState::WillReceive,
                                 OpState::Lost, OpState::WillLose};
  std::vector<BeliefNode> nodes;
  double total = 0.0;
  std::size_t combos = 1;
  for (std::size_t i = 0; i < n; ++i) combos *= 4;
  for (std::size_t code = 0; code < combos; ++code) {
    BeliefNode node;
    node.assignment.resize(n);
    double prob = 1.0;
    std::size_t c = code;
    bool feasible = true;
    for (std::size_t i = 0; i < n; ++i, c /= 4) {
      OpState s = all_states[c % 4];
      node.assignment[i] = {ops[i].gen, s};
      switch (s) {
        case OpState::Received: prob *= per_op[i].received; break;
        case OpState::WillReceive: prob *= per_op[i].will_receive; break;
        case OpState::Lost: prob *= per_op[i].lost; break;
        case OpState::WillLose: prob *= per_op[i].will_lose; break;
      }
    }
    for (std::size_t i = 0; i + 1 < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (!is_processed(node.assignment[i].state) &&
            is_processed(node.assignment[j].state))
          feasible = false;
    if (!feasible) continue;
    node.probability = prob;
    total += prob;
    nodes.push_back(std::move(node));
  }
  for (auto& node : nodes) node.probability /= total;
  return nodes;
}

std::string key_of(const BeliefNode& node) {
  std::string key;
  for (const auto& a : node.assignment)
    key += std::to_string(a.gen) + ":" + std::to_string(static_cast<int>(a.state)) + ";";
  return key;
}

}  // namespace

TEST_CASE("state probabilities match the closed forms at the corners") {
  StateProbModel model{0.5, 100.0};

  auto at0 = op_state_probs(model, 0.0);
  CHECK(at0.received == doctest::Approx(0.0));
  CHECK(at0.will_receive == doctest::Approx(0.5));
  CHECK(at0.lost == doctest::Approx(0.0));
  CHECK(at0.will_lose == doctest::Approx(0.5));

  auto done = op_state_probs(model, 100.0);
  CHECK(done.received == doctest::Approx(0.5));
  CHECK(done.will_receive == doctest::Approx(0.0));
  CHECK(done.lost == doctest::Approx(0.5));
  CHECK(done.will_lose == doctest::Approx(0.0));

  auto mid = op_state_probs(model, 50.0);
  CHECK(mid.received == doctest::Approx(0.375));
  CHECK(mid.will_receive == doctest::Approx(0.125));
  CHECK(mid.lost == doctest::Approx(0.125));
  CHECK(mid.will_lose == doctest::Approx(0.375));

  // beyond the processing deadline everything is decided
  auto past = op_state_probs(model, 250.0);
  CHECK(past.will_receive == doctest::Approx(0.0));
  CHECK(past.will_lose == doctest::Approx(0.0));
}

TEST_CASE("state probabilities are normalized and monotone in elapsed time") {
  for (double p_l : {0.0, 0.1, 0.5, 0.9}) {
    StateProbModel model{p_l, 80.0};
    double prev_r = -1.0, prev_wr = 2.0, prev_l = -1.0, prev_wl = 2.0;
    for (int i = 0; i <= 1000; ++i) {
      double t = 80.0 * static_cast<double>(i) / 1000.0;
      auto p = op_state_probs(model, t);
      for (double v : {p.received, p.will_receive, p.lost, p.will_lose}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      CHECK(p.received + p.will_receive + p.lost + p.will_lose ==
            doctest::Approx(1.0).epsilon(1e-12));
      CHECK(p.received >= prev_r - 1e-12);
      CHECK(p.will_receive <= prev_wr + 1e-12);
      CHECK(p.lost >= prev_l - 1e-12);
      CHECK(p.will_lose <= prev_wl + 1e-12);
      prev_r = p.received;
      prev_wr = p.will_receive;
      prev_l = p.lost;
      prev_wl = p.will_lose;
    }
  }
}

TEST_CASE("loss mass integrates to p_l") {
  // total loss probability: integral of the uniform processing density times
  // the conditional loss power law
  for (double p_l : {0.05, 0.1, 0.5, 0.9}) {
    const double t_max = 60.0;
    const double alpha = 1.0 / p_l - 1.0;
    const long n = 200'000;
    double acc = 0.0;
    for (long i = 0; i < n; ++i) {
      double tau = (static_cast<double>(i) + 0.5) / static_cast<double>(n) * t_max;
      acc += std::pow(tau / t_max, alpha) / t_max;
    }
    acc *= t_max / static_cast<double>(n);
    CHECK(acc == doctest::Approx(p_l).epsilon(1e-4));
  }
}

TEST_CASE("node enumeration matches brute force for n = 0..5") {
  StateProbModel model{0.3, 100.0};
  std::vector<OutstandingPacket> ops;
  for (Step g = 0; g < 5; ++g) {
    OutstandingPacket op;
    op.gen = g;
    op.send_ms = static_cast<double>(g) * 17.0;
    ops.push_back(op);
  }
  const double now = 120.0;

  for (std::size_t n = 0; n <= 5; ++n) {
    std::span<const OutstandingPacket> sub(ops.data(), n);
    auto nodes = build_nodes(sub, now, model, 5);
    CHECK(nodes.size() == (n + 1) * (std::size_t{1} << n));

    double total = 0.0;
    for (const auto& node : nodes) total += node.probability;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    if (n == 0) continue;
    auto expected = brute_force_nodes(sub, now, model);
    REQUIRE(expected.size() == nodes.size());
    std::map<std::string, double> probs;
    for (const auto& node : expected) probs[key_of(node)] = node.probability;
    for (const auto& node : nodes) {
      REQUIRE(probs.count(key_of(node)) == 1);
      CHECK(node.probability == doctest::Approx(probs[key_of(node)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("single packet gets the raw state probabilities") {
  StateProbModel model{0.2, 50.0};
  auto ops = make_ops({0.0});
  auto nodes = build_nodes(ops, 20.0, model, 5);
  REQUIRE(nodes.size() == 4);
  auto probs = op_state_probs(model, 20.0);
  double sum = 0.0;
  for (const auto& node : nodes) {
    sum += node.probability;
    switch (node.assignment[0].state) {
      case OpState::Received:
        CHECK(node.probability == doctest::Approx(probs.received));
        break;
      case OpState::WillReceive:
        CHECK(node.probability == doctest::Approx(probs.will_receive));
        break;
      case OpState::Lost:
        CHECK(node.probability == doctest::Approx(probs.lost));
        break;
      case OpState::WillLose:
        CHECK(node.probability == doctest::Approx(probs.will_lose));
        break;
    }
  }
  CHECK(sum == doctest::Approx(1.0));
}

TEST_CASE("empty, cold-start, and truncated node sets") {
  StateProbModel model{0.2, 50.0};

  auto empty = build_nodes({}, 0.0, model, 5);
  REQUIRE(empty.size() == 1);
  CHECK(empty[0].assignment.empty());
  CHECK(empty[0].probability == doctest::Approx(1.0));

  // no model yet: everything in flight is presumed deliverable
  auto ops = make_ops({0.0, 10.0, 20.0});
  auto cold = build_nodes(ops, 30.0, std::nullopt, 5);
  REQUIRE(cold.size() == 1);
  CHECK(cold[0].probability == doctest::Approx(1.0));
  for (const auto& a : cold[0].assignment) CHECK(a.state == OpState::WillReceive);

  // only the freshest packets are kept
  auto many = make_ops({0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0});
  auto truncated = build_nodes(many, 40.0, model, 5);
  CHECK(truncated.size() == 6 * 32);
  for (const auto& node : truncated) {
    REQUIRE(node.assignment.size() == 5);
    CHECK(node.assignment.front().gen == 2);  // two oldest dropped
  }
}

TEST_CASE("degenerate loss estimates keep the forms well defined") {
  // p_l = 0: no loss mass at all
  StateProbModel lossless{0.0, 100.0};
  auto p = op_state_probs(lossless, 40.0);
  CHECK(p.received == doctest::Approx(0.4));
  CHECK(p.will_receive == doctest::Approx(0.6));
  CHECK(p.lost == doctest::Approx(0.0));
  CHECK(p.will_lose == doctest::Approx(0.0));

  // p_l = 1: every packet is eventually lost
  StateProbModel dead{1.0, 100.0};
  auto q = op_state_probs(dead, 40.0);
  CHECK(q.received == doctest::Approx(0.0));
  CHECK(q.lost == doctest::Approx(0.4));
  CHECK(q.will_lose == doctest::Approx(0.6));
}

TEST_CASE("model construction needs enough samples") {
  NetStats stats;
  CHECK(!StateProbModel::from_stats(stats, 8).has_value());
  for (Step g = 0; g < 10; ++g) {
    stats.record_admission(g, static_cast<double>(g) * 50.0);
    stats.process_ack({g, g + 2, 0.0}, static_cast<double>(g) * 50.0 + 25.0);
  }
  auto model = StateProbModel::from_stats(stats, 8);
  REQUIRE(model.has_value());
  CHECK(model->t_max_ms > 0.0);
  CHECK(model->p_l >= 0.0);
}
