#pragma once

#include "vou/common.hpp"

#include <span>
#include <vector>

namespace vou {

/// Per-loop control constants. `P` and `K` are derived from the other
/// members by `make_loop_model` / `solve_lqr`.
struct LoopModel {
  int n = 1;  // state dimension
  int m = 1;  // input dimension
  Mat A;      // state matrix (n x n)
  Mat B;      // input matrix (n x m)
  Mat Sigma;  // disturbance covariance (n x n)
  Mat Q;      // state cost weight (n x n)
  Mat R;      // input cost weight (m x m)
  double period_ms = 10.0;  // sampling period T
  Mat P;      // Riccati solution (n x n)
  Mat K;      // feedback gain (m x n)
  Mat sigma_sqrt;  // cached symmetric square root of Sigma for noise draws
};

struct LqrResult {
  Mat P;
  Mat K;
};

/// Solves P = Q + A'PA - A'PB (R + B'PB)^-1 B'PA by fixed-point iteration
/// from P0 = Q and returns the stabilizing gain K = (R + B'PB)^-1 B'PA.
/// Throws std::runtime_error if the iteration does not converge within
/// `max_iters` and std::invalid_argument on inconsistent dimensions or a
/// singular (R + B'PB).
LqrResult solve_lqr(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                    double tol = 1e-12, long max_iters = 1'000'000);

/// Validates the weight matrices (Sigma, Q symmetric PSD; R symmetric PD),
/// solves the regulator, and checks closed-loop stability and the Riccati
/// residual (< 1e-10).
LoopModel make_loop_model(const Mat& A, const Mat& B, const Mat& Sigma,
                          const Mat& Q, const Mat& R, double period_ms);

/// x' = A x + B u + w
Vec step_plant(const Vec& x, const Vec& u, const Vec& w, const LoopModel& model);

/// u = -K x_hat
Vec control_input(const Vec& x_hat, const LoopModel& model);

/// One delivered measurement: generated at step `gen`, received at step
/// `recv` (recv >= gen).
struct Observation {
  Step gen = 0;
  Step recv = 0;
  Vec x;
};

/// Receiver-side estimator: open-loop MMSE prediction from the freshest
/// delivered full-state measurement, with the applied inputs replayed over
/// the staleness gap. Single-owner mutable state.
class Controller {
 public:
  explicit Controller(const LoopModel& model, std::size_t input_window = 1024);

  /// Advances to step k, consuming the measurements delivered during this
  /// step. Arrivals staler than the current freshest are ignored. Returns
  /// the applied input u_k = -K x_hat_k and records it.
  Vec tick(Step k, std::span<const Observation> arrivals);

  const Vec& estimate() const { return x_hat_; }
  const Vec& last_input() const { return u_prev_; }
  Step freshest_gen() const { return nu_; }  // -1 before any reception

  /// AoI at step k; the pre-first-delivery sentinel is k + 1.
  Step age(Step k) const { return nu_ < 0 ? k + 1 : k - nu_; }

  /// All measurements ever delivered, in consumption order (includes stale
  /// ones the estimator ignored).
  const std::vector<Observation>& reception_record() const { return record_; }

  Vec input_at(Step t) const;  // applied u_t; zero before the run / window

 private:
  const LoopModel* model_;
  Vec x_hat_;
  Vec u_prev_;
  Step nu_ = -1;
  Step next_k_ = 0;
  std::vector<Vec> inputs_;  // ring over the last input_window steps
  std::vector<Observation> record_;
};

/// Mean of x'Qx + u'Ru over the 1001 steps 1000(2+q) .. 1000(3+q).
/// Requires trajectories of length >= 1000(3+q)+1 and q in {0..4}.
double lqg_window_cost(std::span<const Vec> x_traj, std::span<const Vec> u_traj,
                       const Mat& Q, const Mat& R, int q);

}  // namespace vou
