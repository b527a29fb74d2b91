#include "vou/admission.hpp"

#include "vou/scenarios.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace vou;

namespace {

Vec sv(double v) {
  Vec x(1);
  x << v;
  return x;
}

std::vector<std::pair<double, double>> linear_samples(double d0, double slope,
                                                      double hi, int n) {
  std::vector<std::pair<double, double>> samples;
  for (int i = 0; i < n; ++i) {
    double ist = hi * static_cast<double>(i) / static_cast<double>(n - 1);
    samples.emplace_back(ist, d0 + slope * ist);
  }
  return samples;
}

}  // namespace

TEST_CASE("constant samples fit a constant curve") {
  std::vector<std::pair<double, double>> samples;
  for (int i = 0; i < 12; ++i)
    samples.emplace_back(static_cast<double>(i) * 7.0, 40.0);
  auto curve = fit_delay_curve(samples);
  REQUIRE(curve.has_value());
  CHECK(curve->d0_ms == doctest::Approx(40.0).epsilon(1e-9));
  for (double ist : {0.0, 10.0, 35.0, 77.0, 200.0})
    CHECK(curve->eval_ms(ist) == doctest::Approx(40.0).epsilon(1e-9));
}

TEST_CASE("linear decreasing data is reproduced exactly") {
  auto samples = linear_samples(100.0, -1.0, 80.0, 20);
  auto curve = fit_delay_curve(samples);
  REQUIRE(curve.has_value());
  CHECK(curve->d0_ms == doctest::Approx(100.0).epsilon(1e-6));
  for (double ist : {0.0, 13.0, 40.0, 79.0})
    CHECK(curve->eval_ms(ist) == doctest::Approx(100.0 - ist).epsilon(1e-6));
  // clamped to the fit domain on the right
  CHECK(curve->eval_ms(120.0) == doctest::Approx(20.0).epsilon(1e-6));
}

TEST_CASE("an increasing fit region is projected to non-increasing") {
  // delays that rise again at large IST would give the raw cubic an
  // increasing tail
  std::vector<std::pair<double, double>> samples;
  for (int i = 0; i <= 20; ++i) {
    double ist = 5.0 * static_cast<double>(i);
    double delay = 50.0 - ist + 0.015 * ist * ist;
    samples.emplace_back(ist, std::max(delay, 1.0));
  }
  auto curve = fit_delay_curve(samples);
  REQUIRE(curve.has_value());
  double prev = curve->eval_ms(0.0);
  for (int i = 1; i <= 1000; ++i) {
    double ist = 100.0 * static_cast<double>(i) / 1000.0;
    double v = curve->eval_ms(ist);
    CHECK(v <= prev + 1e-9);
    CHECK(v >= 0.0);
    prev = v;
  }
}

TEST_CASE("curve needs enough samples") {
  auto samples = linear_samples(50.0, -0.5, 60.0, 7);
  CHECK(!fit_delay_curve(samples).has_value());
  CHECK(fit_delay_curve(linear_samples(50.0, -0.5, 60.0, 8)).has_value());
}

TEST_CASE("transmission cost scales the normalized delay") {
  auto curve = fit_delay_curve(linear_samples(100.0, -1.0, 80.0, 20));
  REQUIRE(curve.has_value());
  CHECK(transmission_cost(*curve, 0.0, 3.0) == doctest::Approx(3.0));
  CHECK(transmission_cost(*curve, 40.0, 0.0) == doctest::Approx(0.0));
  CHECK(transmission_cost(*curve, 75.0, 2.0) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("cost is monotone non-increasing in IST for random sample sets") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> base(10.0, 200.0);
  std::uniform_real_distribution<double> jitter(-5.0, 5.0);
  for (int set = 0; set < 20; ++set) {
    double d0 = base(rng);
    double hi = base(rng);
    std::vector<std::pair<double, double>> samples;
    for (int i = 0; i < 64; ++i) {
      double ist = hi * static_cast<double>(i) / 63.0;
      double d = d0 * std::exp(-3.0 * ist / hi) + std::abs(jitter(rng));
      samples.emplace_back(ist, d);
    }
    auto curve = fit_delay_curve(samples);
    REQUIRE(curve.has_value());
    double prev = transmission_cost(*curve, 0.0, 1.0);
    CHECK(prev == doctest::Approx(1.0));
    for (int i = 1; i <= 1000; ++i) {
      double ist = 1.2 * hi * static_cast<double>(i) / 1000.0;
      double c = transmission_cost(*curve, ist, 1.0);
      CHECK(c <= prev + 1e-9);
      prev = c;
    }
  }
}

TEST_CASE("threshold adaptation moves lambda toward the target rate") {
  ThresholdState st;
  st.lambda = 1.0;
  st.target_rate_hz = 10.0;

  st.measured_rate_hz = 10.0;
  CHECK(adapt_threshold(st) == doctest::Approx(1.0));  // on target: hold

  st.measured_rate_hz = 20.0;
  CHECK(adapt_threshold(st) == doctest::Approx(1.02));  // too many admissions

  st.measured_rate_hz = 5.0;
  CHECK(adapt_threshold(st) == doctest::Approx(1.0));  // back down

  // sustained excess: geometric growth, capped
  st.lambda = 1.0;
  st.measured_rate_hz = 20.0;
  for (int i = 0; i < 2000; ++i) adapt_threshold(st);
  CHECK(st.lambda == doctest::Approx(std::min(std::pow(1.02, 2000), 1e6)));
  CHECK(st.lambda <= 1e6);

  st.target_rate_hz = 0.0;
  CHECK_THROWS_AS(adapt_threshold(st), std::invalid_argument);
}

TEST_CASE("rate controller climbs while the age improves and backs off otherwise") {
  AcpRateController acp;
  CHECK(acp.rate_hz() == doctest::Approx(10.0));  // configured start

  // first epoch only records the baseline
  acp.on_epoch(50.0, 1.0);
  CHECK(acp.rate_hz() == doctest::Approx(10.0));
  // age improving: repeat the increase
  acp.on_epoch(40.0, 1.0);
  CHECK(acp.rate_hz() == doctest::Approx(12.5));
  acp.on_epoch(30.0, 1.0);
  CHECK(acp.rate_hz() == doctest::Approx(12.5 * 1.25));
  // worse: invert to a decrease
  double before = acp.rate_hz();
  acp.on_epoch(45.0, 1.0);
  CHECK(acp.rate_hz() == doctest::Approx(before * 0.8));
}

TEST_CASE("rate controller settles around the optimum of a synthetic age bowl") {
  // age as a convex function of rate with minimum at 25 Hz
  AcpRateController acp;
  double rate = acp.rate_hz();
  for (int epoch = 0; epoch < 200; ++epoch) {
    double aoi = 40.0 + (rate - 25.0) * (rate - 25.0);
    rate = acp.on_epoch(aoi, 0.0);
  }
  CHECK(rate >= 25.0 / 1.3);
  CHECK(rate <= 25.0 * 1.3);
}

namespace {

struct ViewFixture {
  LoopModel model = reference_loop_model();
  NetStats stats;
  std::map<Step, Vec> measurements;
  std::vector<BeliefNode> nodes;
  std::optional<DelayCurve> curve;
  HistoryEstimator acked;
  Vec x;
  Vec oracle;

  ViewFixture(double state, double estimate_at_k, Step k = 20)
      : acked(k,
              [&] {
                AugmentedHistory h;
                // passthrough trick: single same-step reception pins the
                // replayed estimate
                h.entries.push_back({k, k, sv(estimate_at_k)});
                return h;
              }(),
              model),
        x(sv(state)),
        oracle(sv(estimate_at_k)) {
    nodes.resize(1);
    nodes[0].probability = 1.0;
    curve = fit_delay_curve(linear_samples(100.0, -1.0, 80.0, 20));
  }

  SensorView view(Step k = 20) {
    SensorView v;
    v.k = k;
    v.now_ms = static_cast<double>(k) * 10.0;
    v.x = x;
    v.stats = &stats;
    v.nodes = nodes;
    v.acked = &acked;
    v.curve = curve.has_value() ? &*curve : nullptr;
    v.model = &model;
    v.op_measurements = &measurements;
    v.op_count = 0;
    v.ist_inst_ms = 40.0;
    v.oracle_estimate = &oracle;
    return v;
  }
};

}  // namespace

TEST_CASE("value rule admits only strictly positive value") {
  // estimate 0 vs state 1: instantaneous error exactly 1
  ViewFixture fx(1.0, 0.0);

  PolicySpec spec;
  spec.kind = PolicyKind::VouInst;
  // cost at IST 40 with the linear curve: lambda * 60/100
  spec.lambda = 1.0 / 0.6;  // cost exactly 1 == relevance: must reject
  AdmissionPolicy at_boundary(spec, 1);
  CHECK(!at_boundary.decide(fx.view()));

  spec.lambda = 0.9 / 0.6;
  AdmissionPolicy below(spec, 1);
  CHECK(below.decide(fx.view()));

  spec.lambda = 0.0;
  AdmissionPolicy free_net(spec, 1);
  CHECK(free_net.decide(fx.view()));
}

TEST_CASE("admit set shrinks as lambda grows") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> state(-4.0, 4.0);
  for (int trial = 0; trial < 50; ++trial) {
    ViewFixture fx(state(rng), state(rng));
    for (PolicyKind kind : {PolicyKind::VouInst, PolicyKind::AugmEtCost,
                            PolicyKind::OracleCost}) {
      bool prev_admit = true;
      for (double lambda : {0.0, 0.3, 1.0, 3.0, 10.0}) {
        PolicySpec spec;
        spec.kind = kind;
        spec.lambda = lambda;
        AdmissionPolicy policy(spec, 5);
        bool admit = policy.decide(fx.view());
        if (!prev_admit) CHECK(!admit);  // once rejected, stays rejected
        prev_admit = admit;
      }
    }
  }
}

TEST_CASE("zero-wait and two-packet variants respect the backlog cap") {
  ViewFixture fx(5.0, 0.0);  // huge error: would always admit

  PolicySpec zw;
  zw.kind = PolicyKind::AugmZwEt;
  zw.lambda = 0.1;
  AdmissionPolicy zw_policy(zw, 2);
  SensorView v = fx.view();
  v.op_count = 0;
  CHECK(zw_policy.decide(v));
  v.op_count = 1;
  CHECK(!zw_policy.decide(v));

  PolicySpec op2;
  op2.kind = PolicyKind::AugmEtOp2;
  op2.lambda = 0.1;
  AdmissionPolicy op2_policy(op2, 2);
  v.op_count = 1;
  CHECK(op2_policy.decide(v));
  v.op_count = 2;
  CHECK(!op2_policy.decide(v));
}

TEST_CASE("threshold comparison for the event-triggered baselines") {
  ViewFixture fx(1.0, 0.0);  // error exactly 1
  PolicySpec spec;
  spec.kind = PolicyKind::AugmZwEt;
  spec.lambda = 1.0;
  AdmissionPolicy exact(spec, 3);
  CHECK(!exact.decide(fx.view()));  // strict threshold
  spec.lambda = 0.99;
  AdmissionPolicy loose(spec, 3);
  CHECK(loose.decide(fx.view()));
}

TEST_CASE("scheduled policy admits at the target rate regardless of content") {
  PolicySpec spec;
  spec.kind = PolicyKind::AcpRate;
  AdmissionPolicy policy(spec, 4);  // default 10 Hz: every 100 ms

  ViewFixture fx(0.0, 0.0);  // zero error: content-agnostic
  int admissions = 0;
  for (Step k = 0; k < 100; ++k) {
    SensorView v = fx.view(k);
    v.now_ms = static_cast<double>(k) * 10.0;
    if (policy.decide(v)) ++admissions;
  }
  CHECK(admissions == 10);
}

TEST_CASE("periodic policy admits every step") {
  PolicySpec spec;
  spec.kind = PolicyKind::Periodic;
  AdmissionPolicy policy(spec, 4);
  ViewFixture fx(0.0, 0.0);
  for (Step k = 0; k < 5; ++k) CHECK(policy.decide(fx.view(k)));
}

TEST_CASE("cold start without a curve charges the full threshold") {
  ViewFixture fx(1.0, 0.0);
  fx.curve.reset();
  PolicySpec spec;
  spec.kind = PolicyKind::VouInst;
  spec.lambda = 0.99;
  AdmissionPolicy policy(spec, 6);
  CHECK(policy.decide(fx.view()));  // relevance 1 > 0.99
  spec.lambda = 1.0;
  AdmissionPolicy exact(spec, 6);
  CHECK(!exact.decide(fx.view()));
}

TEST_CASE("decisions replay identically from a recorded view") {
  ViewFixture fx(2.0, 0.5);
  PolicySpec spec;
  spec.kind = PolicyKind::VouDynW;
  spec.lambda = 0.4;
  spec.horizon = 10;
  AdmissionPolicy a(spec, 42);
  AdmissionPolicy b(spec, 42);
  for (Step k = 20; k < 40; ++k)
    CHECK(a.decide(fx.view(k)) == b.decide(fx.view(k)));
}

TEST_CASE("policy names round-trip") {
  for (PolicyKind kind :
       {PolicyKind::VouInst, PolicyKind::VouDyn, PolicyKind::VouDynW,
        PolicyKind::AugmZwEt, PolicyKind::AugmEtOp2, PolicyKind::AugmEtCost,
        PolicyKind::OracleCost, PolicyKind::AcpRate, PolicyKind::Periodic}) {
    auto parsed = parse_policy(policy_name(kind));
    REQUIRE(parsed.has_value());
    CHECK(*parsed == kind);
  }
  CHECK(!parse_policy("nonsense").has_value());
}
