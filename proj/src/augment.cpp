#include "vou/augment.hpp"

#include "vou/admission.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vou {

ReplayResult augment_estimate(Step k, const AugmentedHistory& history,
                              const LoopModel& model) {
  ReplayResult out;
  out.estimate = Vec::Zero(model.n);

  Step start = -1;
  for (const auto& e : history.entries) {
    if (e.recv < e.gen)
      throw std::invalid_argument("augment_estimate: recv before gen");
    if (e.recv <= k && (start < 0 || e.recv < start)) start = e.recv;
  }
  if (start < 0) {
    out.start = k;
    return out;  // nothing delivered: zero prior, zero inputs
  }

  out.start = start;
  out.inputs.resize(static_cast<std::size_t>(k - start + 1), Vec::Zero(model.m));

  auto input = [&](Step t) -> Vec {
    if (t < start || t > k) return Vec::Zero(model.m);
    return out.inputs[static_cast<std::size_t>(t - start)];
  };

  Vec x_hat = Vec::Zero(model.n);
  Step nu = -1;
  for (Step t = start; t <= k; ++t) {
    const HistoryEntry* best = nullptr;
    for (const auto& e : history.entries)
      if (e.recv == t && e.gen > nu && (best == nullptr || e.gen > best->gen))
        best = &e;
    if (best != nullptr) {
      Vec x = best->x;
      for (Step s = best->gen; s < t; ++s) x = model.A * x + model.B * input(s);
      x_hat = x;
      nu = best->gen;
    } else {
      x_hat = model.A * x_hat + model.B * input(t - 1);
    }
    out.inputs[static_cast<std::size_t>(t - start)] = -model.K * x_hat;
  }
  out.estimate = x_hat;
  return out;
}

HistoryEstimator::HistoryEstimator(Step k, AugmentedHistory history,
                                   const LoopModel& model)
    : k_(k), history_(std::move(history)), model_(&model),
      replay_(augment_estimate(k, history_, model)) {}

Vec HistoryEstimator::estimate_with_extra(Step gen, Step recv, const Vec& x) const {
  AugmentedHistory extended = history_;
  extended.entries.push_back({gen, recv, x});
  return augment_estimate(k_, extended, *model_).estimate;
}

IncrementalAugmenter::IncrementalAugmenter(const LoopModel& model, std::size_t window)
    : model_(&model), window_span_(static_cast<Step>(window)),
      est_(window, Vec::Zero(model.n)), inp_(window, Vec::Zero(model.m)) {}

void IncrementalAugmenter::check_window(Step t) const {
  if (cur_ - t >= window_span_ || t < 0)
    throw std::runtime_error("IncrementalAugmenter: window exceeded");
}

Vec IncrementalAugmenter::state_before(Step t) const {
  if (t <= 0) return Vec::Zero(model_->n);
  check_window(t - 1);
  return est_[slot(t - 1)];
}

Vec IncrementalAugmenter::input_at(Step t) const {
  if (t < 0 || t > cur_) return Vec::Zero(model_->m);
  check_window(t);
  return inp_[slot(t)];
}

Vec IncrementalAugmenter::estimate() const {
  if (cur_ < 0) return Vec::Zero(model_->n);
  return est_[slot(cur_)];
}

const HistoryEntry* IncrementalAugmenter::best_arrival(Step t, Step fresher_than) const {
  const HistoryEntry* best = nullptr;
  for (const auto& e : entries_)
    if (e.recv == t && e.gen > fresher_than && (best == nullptr || e.gen > best->gen))
      best = &e;
  return best;
}

void IncrementalAugmenter::advance(Step k) {
  if (k != cur_ + 1 && !(cur_ < 0 && k >= 0))
    throw std::invalid_argument("IncrementalAugmenter: non-consecutive advance");
  if (cur_ < 0 && k > 0) {
    // implicit zero-history steps before the first advance
    for (Step t = std::max<Step>(0, k - window_span_); t < k; ++t) {
      est_[slot(t)] = Vec::Zero(model_->n);
      inp_[slot(t)] = Vec::Zero(model_->m);
    }
  }
  cur_ = k;
  recompute_from(k);
}

void IncrementalAugmenter::splice(Step gen, Step recv, const Vec& x) {
  if (gen > recv) throw std::invalid_argument("IncrementalAugmenter: recv before gen");
  if (gen <= nu_ && recv <= cur_)
    return;  // stale reception; cannot change the replicated estimate
  entries_.push_back({gen, recv, x});
  if (recv <= cur_) {
    check_window(recv);
    check_window(gen);
    recompute_from(recv);
  }
  // drop receptions that can no longer matter to any in-window recompute
  while (!entries_.empty() && entries_.front().recv < cur_ - window_span_ + 1 &&
         entries_.front().gen < nu_)
    entries_.pop_front();
}

void IncrementalAugmenter::recompute_from(Step t0) {
  // freshest generation delivered strictly before t0
  Step nu = -1;
  for (const auto& e : entries_)
    if (e.recv < t0 && e.recv <= cur_) nu = std::max(nu, e.gen);

  for (Step t = t0; t <= cur_; ++t) {
    const HistoryEntry* best = best_arrival(t, nu);
    Vec x_hat;
    if (best != nullptr) {
      check_window(best->gen);
      // in-place ring update: slots in [t0, t) already hold recomputed inputs
      Vec x = best->x;
      for (Step s = best->gen; s < t; ++s)
        x = model_->A * x + model_->B * inp_[slot(s)];
      x_hat = x;
      nu = best->gen;
    } else {
      x_hat = model_->A * state_before(t) + model_->B * input_at(t - 1);
    }
    est_[slot(t)] = x_hat;
    inp_[slot(t)] = -model_->K * x_hat;
  }
  nu_ = nu;
}

Vec IncrementalAugmenter::estimate_with_extra(Step gen, Step recv, const Vec& x) const {
  if (recv > cur_) throw std::invalid_argument("estimate_with_extra: future reception");
  if (gen <= nu_)
    throw std::invalid_argument("estimate_with_extra: gen not fresher than ACKed history");
  check_window(std::min(gen, recv));

  // Before recv the hypothetical history coincides with the ACKed one, so the
  // recorded inputs apply; afterwards the branch evolves on its own inputs.
  Vec y = x;
  for (Step s = gen; s < recv; ++s) y = model_->A * y + model_->B * input_at(s);

  Step nu = gen;
  std::vector<Vec> branch_inputs;
  branch_inputs.reserve(static_cast<std::size_t>(cur_ - recv + 1));
  branch_inputs.push_back(-model_->K * y);
  for (Step t = recv + 1; t <= cur_; ++t) {
    const HistoryEntry* best = best_arrival(t, nu);
    if (best != nullptr) {
      Vec z = best->x;
      for (Step s = best->gen; s < t; ++s) {
        Vec u = s < recv ? input_at(s)
                         : branch_inputs[static_cast<std::size_t>(s - recv)];
        z = model_->A * z + model_->B * u;
      }
      y = z;
      nu = best->gen;
    } else {
      y = model_->A * y + model_->B * branch_inputs.back();
    }
    branch_inputs.push_back(-model_->K * y);
  }
  return y;
}

namespace {

// The relevance of a node depends only on its freshest packet hypothesized
// as received or still receivable, so nodes collapse into a handful of
// groups before any replay work.
struct NodeGroup {
  bool has_op = false;
  Step gen = 0;
  OpState state = OpState::WillReceive;
  double weight = 0.0;
};

std::vector<NodeGroup> group_nodes(std::span<const BeliefNode> nodes) {
  std::vector<NodeGroup> groups;
  auto accumulate = [&](bool has_op, Step gen, OpState state, double w) {
    for (auto& g : groups)
      if (g.has_op == has_op && (!has_op || (g.gen == gen && g.state == state))) {
        g.weight += w;
        return;
      }
    groups.push_back({has_op, gen, state, w});
  };
  for (const auto& node : nodes) {
    const OpAssignment* freshest = nullptr;
    for (auto it = node.assignment.rbegin(); it != node.assignment.rend(); ++it)
      if (is_received_kind(it->state)) {
        freshest = &*it;
        break;
      }
    if (freshest == nullptr)
      accumulate(false, 0, OpState::Lost, node.probability);
    else
      accumulate(true, freshest->gen, freshest->state, node.probability);
  }
  return groups;
}

// Eq.-style past reception prediction: mean of the delays shorter than the
// packet's age, latest feasible step when no such sample exists.
Step predicted_past_recv(Step k, Step gen, const NetStats& stats, double period_ms) {
  auto mean = stats.mean_delay_below(static_cast<double>(k - gen) * period_ms);
  Step psi = k - 1;
  if (mean.has_value())
    psi = std::min<Step>(k - 1, gen + static_cast<Step>(std::llround(*mean / period_ms)));
  return std::max(psi, gen);
}

// Future reception prediction for a will-receive packet: mean of the delays
// longer than its age; uniform-residual midpoint when no sample qualifies.
Step predicted_future_recv(Step k, Step gen, const NetStats& stats, double period_ms) {
  double age_ms = static_cast<double>(k - gen) * period_ms;
  auto mean = stats.mean_delay_above(age_ms);
  double delay_ms = mean.has_value() ? *mean : (age_ms + stats.t_max_ms()) / 2.0;
  Step psi = gen + static_cast<Step>(std::llround(delay_ms / period_ms));
  return std::max(psi, k + 1);
}

const Vec& measurement_of(Step gen, const std::map<Step, Vec>& store) {
  auto it = store.find(gen);
  if (it == store.end())
    throw std::logic_error("relevance: missing measurement for tracked packet");
  return it->second;
}

}  // namespace

double relevance_inst(Step k, const Vec& x_k, std::span<const BeliefNode> nodes,
                      const AckedEstimator& acked, const NetStats& stats,
                      const LoopModel& model,
                      const std::map<Step, Vec>& op_measurements) {
  double relevance = 0.0;
  for (const auto& g : group_nodes(nodes)) {
    if (g.weight <= 0.0) continue;
    Vec est;
    if (!g.has_op) {
      est = acked.estimate();
    } else if (g.state == OpState::Received) {
      Step psi = predicted_past_recv(k, g.gen, stats, model.period_ms);
      est = acked.estimate_with_extra(g.gen, psi, measurement_of(g.gen, op_measurements));
    } else {
      // treated as received within the current step
      est = acked.estimate_with_extra(g.gen, k, measurement_of(g.gen, op_measurements));
    }
    relevance += g.weight * l1_norm(est - x_k);
  }
  return relevance;
}

namespace {

struct FutureReception {
  Step gen = 0;
  Step recv = 0;
  const Vec* x = nullptr;
};

// Accumulated |prediction - estimate| over the horizon for one branch.
double branch_error(Step k, const Vec& x_k, const Vec& est_k, Step base_nu,
                    std::span<const FutureReception> receptions,
                    std::span<const Vec> noise, const AckedEstimator& acked,
                    const LoopModel& model, int horizon) {
  Vec x_bar = x_k;
  Vec x_tilde = est_k;
  Step nu = base_nu;

  // instant delivery of a zero-delay admission
  for (const auto& r : receptions)
    if (r.recv == k && r.gen > nu) {
      x_tilde = *r.x;
      nu = r.gen;
    }

  double err = l1_norm(x_bar - x_tilde);
  std::vector<Vec> inputs;
  inputs.reserve(static_cast<std::size_t>(horizon));
  for (int i = 0; i < horizon; ++i) {
    Step t = k + i;
    Vec u = -model.K * x_tilde;
    inputs.push_back(u);
    x_bar = model.A * x_bar + model.B * u + noise[static_cast<std::size_t>(i)];

    const FutureReception* best = nullptr;
    for (const auto& r : receptions)
      if (r.recv == t + 1 && r.gen > nu && (best == nullptr || r.gen > best->gen))
        best = &r;
    if (best != nullptr) {
      Vec z = *best->x;
      for (Step s = best->gen; s <= t; ++s) {
        Vec us = s < k ? acked.input_at(s) : inputs[static_cast<std::size_t>(s - k)];
        z = model.A * z + model.B * us;
      }
      x_tilde = z;
      nu = best->gen;
    } else {
      x_tilde = model.A * x_tilde + model.B * u;
    }
    err += l1_norm(x_bar - x_tilde);
  }
  return err;
}

}  // namespace

double relevance_dyn(Step k, const Vec& x_k, std::span<const BeliefNode> nodes,
                     const AckedEstimator& acked, const NetStats& stats,
                     const LoopModel& model, const DynParams& params,
                     const DelayCurve* curve,
                     const std::map<Step, Vec>& op_measurements,
                     std::mt19937_64& rng) {
  if (params.horizon < 1)
    throw std::invalid_argument("relevance_dyn: horizon must be >= 1");

  // One disturbance draw per step, shared by every node and both branches,
  // so the comparison isolates the admission effect.
  std::vector<Vec> noise(static_cast<std::size_t>(params.horizon), Vec::Zero(model.n));
  if (params.sample_noise && model.sigma_sqrt.size() > 0) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec z(model.n);
    for (auto& w : noise) {
      for (int i = 0; i < model.n; ++i) z(i) = gauss(rng);
      w = model.sigma_sqrt * z;
    }
  }

  // Predicted delivery step of the current packet if admitted now.
  const double now_ms = static_cast<double>(k) * model.period_ms;
  double predicted_delay_ms;
  if (curve != nullptr) {
    predicted_delay_ms = curve->eval_ms(stats.instantaneous_ist_ms(now_ms));
  } else if (stats.delay_sample_count() > 0) {
    double acc = 0.0;
    for (double d : stats.delay_samples_ms()) acc += d;
    predicted_delay_ms = acc / static_cast<double>(stats.delay_sample_count());
  } else {
    predicted_delay_ms = model.period_ms;
  }
  const Step recv_cur =
      k + static_cast<Step>(std::ceil(predicted_delay_ms / model.period_ms - 1e-12));

  double relevance = 0.0;
  for (const auto& g : group_nodes(nodes)) {
    if (g.weight <= 0.0) continue;

    Vec est_k;
    Step base_nu;
    std::vector<FutureReception> receptions;
    const Vec* op_x = g.has_op ? &measurement_of(g.gen, op_measurements) : nullptr;

    if (g.has_op && g.state == OpState::Received) {
      Step psi = predicted_past_recv(k, g.gen, stats, model.period_ms);
      est_k = acked.estimate_with_extra(g.gen, psi, *op_x);
      base_nu = g.gen;
    } else {
      est_k = acked.estimate();
      base_nu = -1;
      if (g.has_op)  // will-receive packet lands later in the horizon
        receptions.push_back(
            {g.gen, predicted_future_recv(k, g.gen, stats, model.period_ms), op_x});
    }

    double err_skip = branch_error(k, x_k, est_k, base_nu, receptions, noise, acked,
                                   model, params.horizon);
    receptions.push_back({k, recv_cur, &x_k});
    double err_admit = branch_error(k, x_k, est_k, base_nu, receptions, noise, acked,
                                    model, params.horizon);
    relevance += g.weight * (err_skip - err_admit);
  }
  return relevance;
}

}  // namespace vou
