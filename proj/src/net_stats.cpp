#include "vou/net_stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vou {

NetStats::NetStats(NetStatsConfig cfg) : cfg_(cfg), rto_ms_(cfg.rto_initial_ms) {}

const OutstandingPacket& NetStats::record_admission(Step gen, double now_ms) {
  if (!ops_.empty() && gen <= ops_.back().gen)
    throw std::invalid_argument("record_admission: out-of-order admission");
  if (freshest_acked_ >= gen)
    throw std::invalid_argument("record_admission: gen already acknowledged");

  OutstandingPacket op;
  op.gen = gen;
  op.send_ms = now_ms;
  op.ist_ms = instantaneous_ist_ms(now_ms);
  op.rto_deadline_ms = now_ms + rto_ms_;
  ops_.push_back(op);
  last_admission_ms_ = now_ms;
  return ops_.back();
}

double NetStats::instantaneous_ist_ms(double now_ms) const {
  if (last_admission_ms_.has_value()) return now_ms - *last_admission_ms_;
  double tmax = t_max_ms();
  return tmax > 0.0 ? 10.0 * tmax : cfg_.first_ist_fallback_ms;
}

std::vector<OutstandingPacket> NetStats::process_ack(const AckRecord& ack,
                                                     double now_ms) {
  auto it = std::find_if(ops_.begin(), ops_.end(),
                         [&](const OutstandingPacket& op) { return op.gen == ack.gen; });
  if (it == ops_.end()) return {};  // duplicate or already removed: no-op

  const OutstandingPacket acked = *it;

  std::vector<OutstandingPacket> removed;
  auto first_kept = std::find_if(ops_.begin(), ops_.end(),
                                 [&](const OutstandingPacket& op) { return op.gen > ack.gen; });
  removed.assign(ops_.begin(), first_kept);
  ops_.erase(ops_.begin(), first_kept);

  double delay_ms = static_cast<double>(ack.recv - ack.gen) * cfg_.period_ms;
  delays_ms_.push_back(delay_ms);
  if (delays_ms_.size() > cfg_.delay_capacity) delays_ms_.pop_front();
  ist_delay_.emplace_back(acked.ist_ms, delay_ms);
  if (ist_delay_.size() > cfg_.ist_capacity) ist_delay_.pop_front();
  ++version_;

  push_outcome(true);

  double rtt = now_ms - acked.send_ms;
  if (rtt >= 0.0) {
    if (!have_rtt_) {
      srtt_ms_ = rtt;
      rttvar_ms_ = rtt / 2.0;
      have_rtt_ = true;
    } else {
      rttvar_ms_ = (1.0 - cfg_.rttvar_beta) * rttvar_ms_ +
                   cfg_.rttvar_beta * std::abs(srtt_ms_ - rtt);
      srtt_ms_ = (1.0 - cfg_.srtt_alpha) * srtt_ms_ + cfg_.srtt_alpha * rtt;
    }
    rto_ms_ = std::clamp(srtt_ms_ + 4.0 * rttvar_ms_, cfg_.rto_floor_ms, cfg_.rto_cap_ms);
  }

  freshest_acked_ = std::max(freshest_acked_, ack.gen);
  return removed;
}

std::vector<OutstandingPacket> NetStats::check_timeouts(double now_ms) {
  std::vector<OutstandingPacket> expired;
  for (auto it = ops_.begin(); it != ops_.end();) {
    if (it->rto_deadline_ms <= now_ms) {
      expired.push_back(*it);
      it = ops_.erase(it);
      push_outcome(false);
    } else {
      ++it;
    }
  }
  return expired;
}

void NetStats::push_outcome(bool acked) {
  p_ack_ = (1.0 - cfg_.p_ack_weight) * p_ack_ + cfg_.p_ack_weight * (acked ? 1.0 : 0.0);
}

double NetStats::loss_prob() const { return 1.0 - std::sqrt(p_ack_); }

double NetStats::t_max_ms() const {
  if (delays_ms_.empty()) return 0.0;
  if (t_max_version_ == version_) return t_max_cache_;
  std::vector<double> sorted(delays_ms_.begin(), delays_ms_.end());
  std::size_t idx = static_cast<std::size_t>(
      std::ceil(0.95 * static_cast<double>(sorted.size())));
  idx = std::min(sorted.size(), std::max<std::size_t>(idx, 1)) - 1;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(idx), sorted.end());
  t_max_cache_ = sorted[idx];
  t_max_version_ = version_;
  return t_max_cache_;
}

std::optional<double> NetStats::mean_delay_below(double thr_ms) const {
  double acc = 0.0;
  std::size_t count = 0;
  for (double d : delays_ms_)
    if (d < thr_ms) {
      acc += d;
      ++count;
    }
  if (count == 0) return std::nullopt;
  return acc / static_cast<double>(count);
}

std::optional<double> NetStats::mean_delay_above(double thr_ms) const {
  double acc = 0.0;
  std::size_t count = 0;
  for (double d : delays_ms_)
    if (d > thr_ms) {
      acc += d;
      ++count;
    }
  if (count == 0) return std::nullopt;
  return acc / static_cast<double>(count);
}

}  // namespace vou
