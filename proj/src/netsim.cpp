#include "vou/netsim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <queue>
#include <stdexcept>

namespace vou {

double ServiceSpec::sample(std::mt19937_64& rng) const {
  double t = fixed_ms;
  if (exp_mean_ms > 0.0) {
    std::exponential_distribution<double> exp_dist(1.0 / exp_mean_ms);
    t += exp_dist(rng);
  }
  if (logn_median_ms > 0.0) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    t += logn_median_ms * std::exp(logn_sigma * gauss(rng));
  }
  return t;
}

void ScenarioConfig::validate() const {
  if (loops < 1) throw std::invalid_argument("scenario: loops must be >= 1");
  if (duration_steps < 1) throw std::invalid_argument("scenario: empty duration");
  if (std::cmp_not_equal(data_paths.size(), loops) ||
      std::cmp_not_equal(ack_paths.size(), loops))
    throw std::invalid_argument("scenario: one data and ACK path per loop");
  auto check_path = [&](const std::vector<int>& path) {
    if (path.empty()) throw std::invalid_argument("scenario: empty path");
    for (int h : path)
      if (h < 0 || std::cmp_greater_equal(h, hops.size()))
        throw std::invalid_argument("scenario: bad hop index");
  };
  for (const auto& p : data_paths) check_path(p);
  for (const auto& p : ack_paths) check_path(p);
  for (const auto& f : background) check_path(f.path);
  for (const auto& h : hops) {
    if (h.loss_prob < 0.0 || h.loss_prob > 1.0)
      throw std::invalid_argument("scenario: loss_prob outside [0,1]");
    if (h.service.fixed_ms < 0.0 || h.service.exp_mean_ms < 0.0 ||
        h.service.logn_median_ms < 0.0)
      throw std::invalid_argument("scenario: negative service time");
  }
  if (model.n < 1 || model.period_ms <= 0.0)
    throw std::invalid_argument("scenario: invalid loop model");
  if (model.K.rows() != model.m || model.sigma_sqrt.rows() != model.n)
    throw std::invalid_argument("scenario: model missing derived fields");
}

double RunResult::mean_window_cost() const {
  double acc = 0.0;
  long count = 0;
  for (const auto& loop : loops) {
    if (!loop.windows_valid) continue;
    for (double c : loop.window_costs) {
      acc += c;
      ++count;
    }
  }
  return count > 0 ? acc / static_cast<double>(count) : 0.0;
}

std::span<const Step> aoi_trace(const RunResult& result, int loop) {
  return result.loops.at(static_cast<std::size_t>(loop)).aoi;
}

namespace {

enum class Fate : std::uint8_t { InFlight, Delivered, Lost, Dropped };

struct Packet {
  int loop = -1;  // -1: background traffic
  bool is_ack = false;
  Step gen = 0;
  Step psi = 0;  // reception step (ACKs)
  Vec payload;
  const std::vector<int>* path = nullptr;
  int stage = 0;
  Fate fate = Fate::InFlight;
};

struct EventOrder {
  bool operator()(const SimEvent& a, const SimEvent& b) const {
    if (a.time_ms != b.time_ms) return a.time_ms > b.time_ms;
    if (a.kind != b.kind) return a.kind > b.kind;
    if (a.loop != b.loop) return a.loop > b.loop;
    return a.seq > b.seq;
  }
};

// A serving position: standalone hops own one, shared-medium hops share one.
struct Server {
  std::deque<std::pair<int, int>> fifo;  // (hop index, packet id)
  bool busy = false;
};

struct LoopRuntime {
  Vec x;  // current plant state
  Controller controller;
  NetStats stats;
  IncrementalAugmenter augmenter;
  AdmissionPolicy policy;
  std::map<Step, Vec> op_measurements;
  std::vector<Observation> inbox;
  std::optional<DelayCurve> curve;
  std::uint64_t curve_version = ~0ULL;
  std::deque<std::pair<Step, Vec>> pending;  // admissions awaiting entry
  double aoi_acc = 0.0;                      // rate-controller feedback
  long aoi_count = 0;
  double backlog_acc = 0.0;
  double decision_us_acc = 0.0;
  long decisions = 0;

  LoopRuntime(const ScenarioConfig& cfg, const PolicySpec& policy_spec, int loop_id)
      : x(Vec::Zero(cfg.model.n)),
        controller(cfg.model),
        stats(cfg.net_stats),
        augmenter(cfg.model),
        policy(policy_spec,
               splitmix64(cfg.seed + splitmix64(0x70 + static_cast<std::uint64_t>(loop_id)))) {}
};

class Simulation {
 public:
  Simulation(const ScenarioConfig& cfg, const PolicySpec& policy)
      : cfg_(cfg), policy_spec_(policy) {
    cfg_.validate();
    end_ms_ = static_cast<double>(cfg_.duration_steps - 1) * cfg_.model.period_ms;

    for (int i = 0; i < cfg_.loops; ++i) {
      loops_.emplace_back(cfg_, policy_spec_, i);
      plant_rng_.push_back(make_stream(cfg_.seed, 1, static_cast<std::uint64_t>(i)));
    }
    for (std::size_t h = 0; h < cfg_.hops.size(); ++h) {
      service_rng_.push_back(make_stream(cfg_.seed, 2, h));
      loss_rng_.push_back(make_stream(cfg_.seed, 3, h));
    }

    int max_group = -1;
    for (const auto& h : cfg_.hops)
      max_group = std::max(max_group, h.shared_medium_group);
    servers_.resize(static_cast<std::size_t>(max_group + 1));
    server_of_.resize(cfg_.hops.size());
    for (std::size_t h = 0; h < cfg_.hops.size(); ++h) {
      if (cfg_.hops[h].parallel) {
        server_of_[h] = -1;
      } else if (cfg_.hops[h].shared_medium_group >= 0) {
        server_of_[h] = cfg_.hops[h].shared_medium_group;
      } else {
        server_of_[h] = static_cast<int>(servers_.size());
        servers_.emplace_back();
      }
    }
    if (cfg_.collect_hop_traces) hop_traces_.resize(cfg_.hops.size());

    result_.loops.resize(static_cast<std::size_t>(cfg_.loops));
    for (auto& lr : result_.loops) {
      lr.x.reserve(static_cast<std::size_t>(cfg_.duration_steps));
      lr.u.reserve(static_cast<std::size_t>(cfg_.duration_steps));
      lr.aoi.reserve(static_cast<std::size_t>(cfg_.duration_steps));
    }
  }

  RunResult take_result() && { return std::move(result_); }

  void run_all() {
    const double T = cfg_.model.period_ms;
    for (Step k = 0; k < cfg_.duration_steps; ++k) {
      double t = static_cast<double>(k) * T;
      for (int i = 0; i < cfg_.loops; ++i) {
        push({t, EventKind::TimeoutScan, i});
        push({t, EventKind::Sample, i});
        push({t, EventKind::ControllerTick, i});
      }
    }
    for (long e = 1;; ++e) {
      double t = static_cast<double>(e) * policy_spec_.epoch_ms;
      if (t > end_ms_) break;
      for (int i = 0; i < cfg_.loops; ++i)
        push({t, EventKind::Epoch, i, 0, -1, -1, 0});
    }
    if (policy_spec_.kind == PolicyKind::AcpRate || policy_spec_.adapt_threshold) {
      for (long e = 1;; ++e) {
        double t = static_cast<double>(e) * policy_spec_.acp.epoch_ms;
        if (t > end_ms_) break;
        for (int i = 0; i < cfg_.loops; ++i)
          push({t, EventKind::Epoch, i, 0, -1, -1, 1});
      }
    }
    for (std::size_t f = 0; f < cfg_.background.size(); ++f) {
      const auto& flow = cfg_.background[f];
      for (long e = 0;; ++e) {
        double t = flow.phase_ms + static_cast<double>(e) * flow.period_ms;
        if (t > end_ms_) break;
        int id = new_packet();
        packets_[static_cast<std::size_t>(id)] = {-1,    false, 0, 0, Vec(),
                                                  &flow.path, 0, Fate::InFlight};
        push({t, EventKind::AdmitDecision, -1, 0, id, -1, 1});
      }
    }

    while (!queue_.empty()) {
      SimEvent ev = queue_.top();
      if (ev.time_ms > end_ms_) break;  // whatever remains is in flight
      queue_.pop();
      dispatch(ev);
    }
    finalize();
  }

 private:
  void push(SimEvent ev) {
    ev.seq = seq_++;
    queue_.push(ev);
  }

  int new_packet() {
    packets_.emplace_back();
    return static_cast<int>(packets_.size() - 1);
  }

  void dispatch(const SimEvent& ev) {
    switch (ev.kind) {
      case EventKind::TimeoutScan: on_timeout_scan(ev); break;
      case EventKind::Sample: on_sample(ev); break;
      case EventKind::AdmitDecision: on_admit(ev); break;
      case EventKind::HopDepart: on_hop_depart(ev); break;
      case EventKind::Deliver: on_deliver(ev); break;
      case EventKind::AckDeliver: on_ack_deliver(ev); break;
      case EventKind::Epoch: on_epoch(ev); break;
      case EventKind::ControllerTick: on_tick(ev); break;
    }
  }

  Step step_of(double time_ms) const {
    return static_cast<Step>(std::ceil(time_ms / cfg_.model.period_ms - 1e-9));
  }

  void on_timeout_scan(const SimEvent& ev) {
    auto& loop = loops_[static_cast<std::size_t>(ev.loop)];
    for (const auto& op : loop.stats.check_timeouts(ev.time_ms))
      loop.op_measurements.erase(op.gen);
  }

  void on_sample(const SimEvent& ev) {
    auto& loop = loops_[static_cast<std::size_t>(ev.loop)];
    const Step k = step_of(ev.time_ms);
    loop.augmenter.advance(k);

    // sensor-side age estimate (ACKed knowledge only) for the rate controller
    Step acked = loop.stats.freshest_acked_gen();
    loop.aoi_acc += static_cast<double>(acked < 0 ? k + 1 : k - acked);
    loop.aoi_count += 1;
    loop.backlog_acc += static_cast<double>(loop.stats.outstanding().size());

    SensorView view;
    view.k = k;
    view.now_ms = ev.time_ms;
    view.x = loop.x;
    view.stats = &loop.stats;
    view.acked = &loop.augmenter;
    view.model = &cfg_.model;
    view.op_measurements = &loop.op_measurements;
    view.op_count = static_cast<int>(loop.stats.outstanding().size());
    view.ist_inst_ms = loop.stats.instantaneous_ist_ms(ev.time_ms);

    std::vector<BeliefNode> nodes;
    if (loop.policy.wants_nodes()) {
      auto model = StateProbModel::from_stats(loop.stats, cfg_.min_model_samples);
      nodes = build_nodes(loop.stats.outstanding(), ev.time_ms, model,
                          cfg_.max_node_size);
      view.nodes = nodes;
    }
    if (loop.policy.wants_curve()) {
      if (loop.curve_version != loop.stats.version()) {
        loop.curve =
            fit_delay_curve(loop.stats.ist_delay_samples(), cfg_.min_model_samples);
        loop.curve_version = loop.stats.version();
      }
      view.curve = loop.curve.has_value() ? &*loop.curve : nullptr;
    }
    Vec oracle;
    if (loop.policy.wants_oracle()) {
      // controller estimate propagated to this step, before any delivery
      oracle = cfg_.model.A * loop.controller.estimate() +
               cfg_.model.B * loop.controller.last_input();
      view.oracle_estimate = &oracle;
    }

    auto t0 = std::chrono::steady_clock::now();
    bool admit = loop.policy.decide(view);
    auto t1 = std::chrono::steady_clock::now();
    loop.decision_us_acc += std::chrono::duration<double, std::micro>(t1 - t0).count();
    loop.decisions += 1;

    if (admit) {
      loop.pending.emplace_back(k, loop.x);
      push({ev.time_ms + policy_spec_.proc_delay_ms, EventKind::AdmitDecision,
            ev.loop, 0, -1, -1, 0});
    }
  }

  void on_admit(const SimEvent& ev) {
    if (ev.aux == 1) {  // background emission
      enqueue_hop(ev.packet, ev.time_ms);
      return;
    }
    auto& loop = loops_[static_cast<std::size_t>(ev.loop)];
    auto [gen, x] = loop.pending.front();
    loop.pending.pop_front();

    loop.stats.record_admission(gen, ev.time_ms);
    loop.policy.on_admission(ev.time_ms);
    loop.op_measurements[gen] = x;
    auto& lr = result_.loops[static_cast<std::size_t>(ev.loop)];
    lr.admissions += 1;
    lr.max_outstanding = std::max(
        lr.max_outstanding, static_cast<long>(loop.stats.outstanding().size()));
    result_.data.admitted += 1;

    int id = new_packet();
    packets_[static_cast<std::size_t>(id)] = {
        ev.loop, false,      gen, 0, x,
        &cfg_.data_paths[static_cast<std::size_t>(ev.loop)], 0, Fate::InFlight};
    enqueue_hop(id, ev.time_ms);
  }

  void enqueue_hop(int packet_id, double now_ms) {
    auto& pkt = packets_[static_cast<std::size_t>(packet_id)];
    int hop_idx = (*pkt.path)[static_cast<std::size_t>(pkt.stage)];
    const HopModel& hop = cfg_.hops[static_cast<std::size_t>(hop_idx)];

    if (hop.parallel) {
      double s = hop.service.sample(service_rng_[static_cast<std::size_t>(hop_idx)]);
      push({now_ms + s, EventKind::HopDepart, pkt.loop, 0, packet_id, hop_idx, 0});
      return;
    }

    Server& server = servers_[static_cast<std::size_t>(server_of_[static_cast<std::size_t>(hop_idx)])];
    if (hop.queue_capacity > 0) {
      std::size_t waiting = 0;
      for (const auto& [h, p] : server.fifo)
        if (h == hop_idx) ++waiting;
      if (waiting >= hop.queue_capacity) {
        pkt.fate = Fate::Dropped;
        return;
      }
    }
    if (cfg_.collect_hop_traces)
      hop_traces_[static_cast<std::size_t>(hop_idx)].arrivals.push_back(packet_id);
    server.fifo.emplace_back(hop_idx, packet_id);
    if (!server.busy) start_service(server, now_ms);
  }

  void start_service(Server& server, double now_ms) {
    auto [hop_idx, packet_id] = server.fifo.front();
    server.fifo.pop_front();
    server.busy = true;
    double s = cfg_.hops[static_cast<std::size_t>(hop_idx)].service.sample(
        service_rng_[static_cast<std::size_t>(hop_idx)]);
    push({now_ms + s, EventKind::HopDepart,
          packets_[static_cast<std::size_t>(packet_id)].loop, 0, packet_id, hop_idx,
          1});
  }

  void on_hop_depart(const SimEvent& ev) {
    const int hop_idx = ev.hop;
    const HopModel& hop = cfg_.hops[static_cast<std::size_t>(hop_idx)];

    if (ev.aux == 1) {  // held a serving position
      Server& server =
          servers_[static_cast<std::size_t>(server_of_[static_cast<std::size_t>(hop_idx)])];
      server.busy = false;
      if (!server.fifo.empty()) start_service(server, ev.time_ms);
    }
    if (cfg_.collect_hop_traces && !hop.parallel)
      hop_traces_[static_cast<std::size_t>(hop_idx)].departures.push_back(ev.packet);

    auto& pkt = packets_[static_cast<std::size_t>(ev.packet)];
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    if (hop.loss_prob > 0.0 &&
        uni(loss_rng_[static_cast<std::size_t>(hop_idx)]) < hop.loss_prob) {
      pkt.fate = Fate::Lost;
      return;
    }

    pkt.stage += 1;
    if (std::cmp_less(pkt.stage, pkt.path->size())) {
      enqueue_hop(ev.packet, ev.time_ms);
      return;
    }
    if (pkt.loop < 0) {
      pkt.fate = Fate::Delivered;  // background sink
      return;
    }
    push({ev.time_ms, pkt.is_ack ? EventKind::AckDeliver : EventKind::Deliver,
          pkt.loop, 0, ev.packet, -1, 0});
  }

  void on_deliver(const SimEvent& ev) {
    // copy: creating the ACK may reallocate the packet table
    const Step gen = packets_[static_cast<std::size_t>(ev.packet)].gen;
    const Vec payload = packets_[static_cast<std::size_t>(ev.packet)].payload;
    packets_[static_cast<std::size_t>(ev.packet)].fate = Fate::Delivered;

    auto& loop = loops_[static_cast<std::size_t>(ev.loop)];
    const Step psi = step_of(ev.time_ms);
    loop.inbox.push_back({gen, psi, payload});

    // the receiving side acknowledges every delivered measurement
    int ack = new_packet();
    packets_[static_cast<std::size_t>(ack)] = {
        ev.loop, true, gen, psi, Vec(),
        &cfg_.ack_paths[static_cast<std::size_t>(ev.loop)], 0, Fate::InFlight};
    result_.data.acks_sent += 1;
    enqueue_hop(ack, ev.time_ms);
  }

  void on_ack_deliver(const SimEvent& ev) {
    auto& pkt = packets_[static_cast<std::size_t>(ev.packet)];
    pkt.fate = Fate::Delivered;
    auto& loop = loops_[static_cast<std::size_t>(ev.loop)];
    result_.data.acks_delivered += 1;

    AckRecord ack{pkt.gen, pkt.psi, ev.time_ms};
    auto it = loop.op_measurements.find(pkt.gen);
    const bool known = it != loop.op_measurements.end();
    auto removed = loop.stats.process_ack(ack, ev.time_ms);
    if (removed.empty()) return;  // duplicate or already timed out

    if (known) loop.augmenter.splice(pkt.gen, pkt.psi, it->second);
    for (const auto& op : removed) loop.op_measurements.erase(op.gen);
  }

  void on_epoch(const SimEvent& ev) {
    auto& loop = loops_[static_cast<std::size_t>(ev.loop)];
    if (ev.aux == 0) {
      loop.policy.on_threshold_epoch(ev.time_ms);
    } else {
      double mean_aoi =
          loop.aoi_count > 0 ? loop.aoi_acc / static_cast<double>(loop.aoi_count) : 0.0;
      double mean_backlog =
          loop.aoi_count > 0 ? loop.backlog_acc / static_cast<double>(loop.aoi_count)
                             : 0.0;
      loop.policy.on_acp_epoch(mean_aoi, mean_backlog);
      loop.aoi_acc = loop.backlog_acc = 0.0;
      loop.aoi_count = 0;
    }
  }

  void on_tick(const SimEvent& ev) {
    auto& loop = loops_[static_cast<std::size_t>(ev.loop)];
    auto& lr = result_.loops[static_cast<std::size_t>(ev.loop)];
    const Step k = step_of(ev.time_ms);

    Vec u = loop.controller.tick(k, loop.inbox);
    loop.inbox.clear();

    lr.x.push_back(loop.x);
    lr.u.push_back(u);
    lr.aoi.push_back(loop.controller.age(k));
    if (cfg_.record_controller_trace) lr.estimates.push_back(loop.controller.estimate());

    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec z(cfg_.model.n);
    auto& rng = plant_rng_[static_cast<std::size_t>(ev.loop)];
    for (int i = 0; i < cfg_.model.n; ++i) z(i) = gauss(rng);
    loop.x = cfg_.model.A * loop.x + cfg_.model.B * u + cfg_.model.sigma_sqrt * z;
  }

  void finalize() {
    const double duration_s =
        static_cast<double>(cfg_.duration_steps) * cfg_.model.period_ms / 1000.0;
    const Step warmup = std::min<Step>(2000, cfg_.duration_steps / 4);
    for (int i = 0; i < cfg_.loops; ++i) {
      auto& lr = result_.loops[static_cast<std::size_t>(i)];
      auto& loop = loops_[static_cast<std::size_t>(i)];
      if (cfg_.duration_steps >= 7001) {
        for (int q = 0; q < 5; ++q)
          lr.window_costs[static_cast<std::size_t>(q)] =
              lqg_window_cost(lr.x, lr.u, cfg_.model.Q, cfg_.model.R, q);
        lr.windows_valid = true;
      }
      lr.admission_rate_hz = static_cast<double>(lr.admissions) / duration_s;
      double acc = 0.0;
      for (Step k = warmup; k < cfg_.duration_steps; ++k)
        acc += static_cast<double>(lr.aoi[static_cast<std::size_t>(k)]);
      lr.mean_aoi_steps =
          acc / static_cast<double>(std::max<Step>(1, cfg_.duration_steps - warmup));
      lr.mean_decision_us =
          loop.decisions > 0 ? loop.decision_us_acc / static_cast<double>(loop.decisions)
                             : 0.0;
      if (cfg_.record_controller_trace)
        lr.receptions = loop.controller.reception_record();
    }
    for (const auto& pkt : packets_) {
      if (pkt.loop < 0 || pkt.is_ack) continue;
      switch (pkt.fate) {
        case Fate::InFlight: result_.data.in_flight += 1; break;
        case Fate::Delivered: result_.data.delivered += 1; break;
        case Fate::Lost: result_.data.lost += 1; break;
        case Fate::Dropped: result_.data.dropped += 1; break;
      }
    }
    if (cfg_.collect_hop_traces) result_.hop_traces = std::move(hop_traces_);
  }

  ScenarioConfig cfg_;
  PolicySpec policy_spec_;
  double end_ms_ = 0.0;
  std::vector<LoopRuntime> loops_;
  std::vector<std::mt19937_64> plant_rng_;
  std::vector<std::mt19937_64> service_rng_;
  std::vector<std::mt19937_64> loss_rng_;
  std::vector<Server> servers_;
  std::vector<int> server_of_;
  std::vector<Packet> packets_;
  std::vector<HopTrace> hop_traces_;
  std::priority_queue<SimEvent, std::vector<SimEvent>, EventOrder> queue_;
  std::uint64_t seq_ = 0;
  RunResult result_;
};

}  // namespace

RunResult run(const ScenarioConfig& config, const PolicySpec& policy) {
  Simulation sim(config, policy);
  sim.run_all();
  return std::move(sim).take_result();
}

}  // namespace vou
