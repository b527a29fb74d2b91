#pragma once

#include "vou/belief.hpp"
#include "vou/common.hpp"
#include "vou/control.hpp"
#include "vou/net_stats.hpp"

#include <deque>
#include <map>
#include <random>
#include <span>
#include <vector>

namespace vou {

struct DelayCurve;  // admission module

/// One hypothesized controller observation: measurement of step `gen`
/// received at step `recv`.
struct HistoryEntry {
  Step gen = 0;
  Step recv = 0;
  Vec x;
};

struct AugmentedHistory {
  std::vector<HistoryEntry> entries;
};

struct ReplayResult {
  Vec estimate;            // replicated controller estimate at k
  Step start = 0;          // earliest replayed step
  std::vector<Vec> inputs; // replicated inputs for steps start .. k

  Vec input_at(Step t, int m) const {
    if (t < start || std::cmp_greater_equal(t - start, inputs.size()))
      return Vec::Zero(m);
    return inputs[static_cast<std::size_t>(t - start)];
  }
};

/// Replicates the controller's estimation from scratch: iterates from the
/// earliest reception not later than k, applying the freshest-measurement
/// reset rule and recording the replicated inputs. With no delivered entry
/// the estimate is zero with zero inputs (the controller's prior at the zero
/// set point). Entries with recv > k are ignored.
ReplayResult augment_estimate(Step k, const AugmentedHistory& history,
                              const LoopModel& model);

/// Replicated ACKed-only estimation state at one step, plus hypothetical
/// single-entry extensions. The relevance measures are written against this
/// interface so that the exhaustive-replay and incremental implementations
/// stay interchangeable.
class AckedEstimator {
 public:
  virtual ~AckedEstimator() = default;
  virtual Step step() const = 0;
  virtual const LoopModel& model() const = 0;
  virtual Vec estimate() const = 0;          // ACKed-only estimate at step()
  virtual Vec input_at(Step t) const = 0;    // replicated input, zero outside
  /// Estimate at step() when one extra reception (gen, recv <= step()) is
  /// hypothesized on top of the ACKed history. `gen` must be fresher than
  /// every ACKed entry.
  virtual Vec estimate_with_extra(Step gen, Step recv, const Vec& x) const = 0;
};

/// Exhaustive-replay implementation; reference semantics for tests and small
/// fixtures.
class HistoryEstimator final : public AckedEstimator {
 public:
  HistoryEstimator(Step k, AugmentedHistory history, const LoopModel& model);

  Step step() const override { return k_; }
  const LoopModel& model() const override { return *model_; }
  Vec estimate() const override { return replay_.estimate; }
  Vec input_at(Step t) const override { return replay_.input_at(t, model_->m); }
  Vec estimate_with_extra(Step gen, Step recv, const Vec& x) const override;

 private:
  Step k_;
  AugmentedHistory history_;
  const LoopModel* model_;
  ReplayResult replay_;
};

/// Production implementation: advances one step at a time and splices newly
/// acknowledged receptions retroactively, recomputing only the affected
/// suffix. State is kept in rings covering the last `window` steps; reaching
/// further back raises an error (ACK timeouts bound the relevant horizon).
class IncrementalAugmenter final : public AckedEstimator {
 public:
  explicit IncrementalAugmenter(const LoopModel& model, std::size_t window = 8192);

  /// Moves to step k (consecutive steps only). Pending receptions spliced
  /// with recv == k take effect here.
  void advance(Step k);

  /// Registers an acknowledged reception. recv may lie in the past (suffix
  /// recompute), at the current step, or ahead of it (applied on advance).
  void splice(Step gen, Step recv, const Vec& x);

  Step step() const override { return cur_; }
  const LoopModel& model() const override { return *model_; }
  Vec estimate() const override;
  Vec input_at(Step t) const override;
  Vec estimate_with_extra(Step gen, Step recv, const Vec& x) const override;

  Step freshest_gen() const { return nu_; }

 private:
  std::size_t slot(Step t) const { return static_cast<std::size_t>(t % window_span_); }
  const HistoryEntry* best_arrival(Step t, Step fresher_than) const;
  void recompute_from(Step t0);
  Vec state_before(Step t) const;  // estimate at t-1, zero at the run start
  void check_window(Step t) const;

  const LoopModel* model_;
  Step window_span_;
  Step cur_ = -1;
  Step nu_ = -1;  // freshest spliced gen with recv <= cur_
  std::vector<Vec> est_;
  std::vector<Vec> inp_;
  std::deque<HistoryEntry> entries_;  // receptions within the window
};

/// Expected instantaneous estimation error: probability-weighted L1 gap
/// between the per-node replicated estimates and the true state. Per node,
/// the ACKed history is extended with the freshest received/will-receive
/// packet (past reception predicted from the delay samples below the
/// packet's age; will-receive treated as received within the current step).
/// `op_measurements` maps tracked generation steps to their sampled states.
double relevance_inst(Step k, const Vec& x_k, std::span<const BeliefNode> nodes,
                      const AckedEstimator& acked, const NetStats& stats,
                      const LoopModel& model,
                      const std::map<Step, Vec>& op_measurements);

struct DynParams {
  int horizon = 10;          // prediction steps ahead
  bool sample_noise = false; // sample disturbances instead of their zero mean
};

/// Expected reduction in accumulated predicted estimation error over the
/// horizon when the current packet is admitted (delivered after the
/// delay-curve prediction at the instantaneous inter-sending time) versus
/// discarded. Will-receive packets are predicted to land at the mean of the
/// delay samples above their age. The same disturbance draws are shared by
/// both branches of every node.
double relevance_dyn(Step k, const Vec& x_k, std::span<const BeliefNode> nodes,
                     const AckedEstimator& acked, const NetStats& stats,
                     const LoopModel& model, const DynParams& params,
                     const DelayCurve* curve,
                     const std::map<Step, Vec>& op_measurements,
                     std::mt19937_64& rng);

}  // namespace vou
