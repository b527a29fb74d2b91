#include "vou/control.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

namespace vou {

namespace {

bool symmetric(const Mat& M, double tol = 1e-9) {
  return (M - M.transpose()).cwiseAbs().maxCoeff() <= tol;
}

double min_eigenvalue(const Mat& M) {
  Eigen::SelfAdjointEigenSolver<Mat> es(M);
  return es.eigenvalues().minCoeff();
}

double spectral_radius(const Mat& M) {
  Eigen::EigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(M)};
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

LqrResult solve_lqr(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                    double tol, long max_iters) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != m || R.cols() != m) {
    throw std::invalid_argument("solve_lqr: inconsistent dimensions");
  }

  Mat P = Q;
  for (long it = 0; it < max_iters; ++it) {
    Mat G = R + B.transpose() * P * B;
    Eigen::FullPivLU<Eigen::MatrixXd> lu{Eigen::MatrixXd(G)};
    if (!lu.isInvertible()) {
      throw std::invalid_argument("solve_lqr: singular R + B'PB");
    }
    Mat Ginv = lu.inverse();
    Mat next = Q + A.transpose() * P * A -
               A.transpose() * P * B * Ginv * B.transpose() * P * A;
    double delta = (next - P).cwiseAbs().maxCoeff();
    P = next;
    if (delta < tol) {
      Mat K = (R + B.transpose() * P * B).inverse() * B.transpose() * P * A;
      return {P, K};
    }
  }
  throw std::runtime_error("solve_lqr: no convergence within iteration cap");
}

LoopModel make_loop_model(const Mat& A, const Mat& B, const Mat& Sigma,
                          const Mat& Q, const Mat& R, double period_ms) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  if (!symmetric(Sigma) || min_eigenvalue(Sigma) < -1e-12)
    throw std::invalid_argument("make_loop_model: Sigma must be symmetric PSD");
  if (!symmetric(Q) || min_eigenvalue(Q) < -1e-12)
    throw std::invalid_argument("make_loop_model: Q must be symmetric PSD");
  if (!symmetric(R) || min_eigenvalue(R) <= 0.0)
    throw std::invalid_argument("make_loop_model: R must be symmetric PD");
  if (period_ms <= 0.0)
    throw std::invalid_argument("make_loop_model: period must be positive");

  LoopModel model;
  model.n = n;
  model.m = m;
  model.A = A;
  model.B = B;
  model.Sigma = Sigma;
  model.Q = Q;
  model.R = R;
  model.period_ms = period_ms;

  auto lqr = solve_lqr(A, B, Q, R);
  model.P = lqr.P;
  model.K = lqr.K;

  Eigen::SelfAdjointEigenSolver<Mat> es(Sigma);
  model.sigma_sqrt =
      es.eigenvectors() *
      es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
      es.eigenvectors().transpose();

  Mat residual = model.P - (Q + A.transpose() * model.P * A -
                            A.transpose() * model.P * B *
                                (R + B.transpose() * model.P * B).inverse() *
                                B.transpose() * model.P * A);
  if (residual.cwiseAbs().maxCoeff() >= 1e-10)
    throw std::runtime_error("make_loop_model: Riccati residual above tolerance");
  if (spectral_radius(A - B * model.K) >= 1.0)
    throw std::runtime_error("make_loop_model: closed loop not stable");
  return model;
}

Vec step_plant(const Vec& x, const Vec& u, const Vec& w, const LoopModel& model) {
  if (x.size() != model.n || u.size() != model.m || w.size() != model.n)
    throw std::invalid_argument("step_plant: dimension mismatch");
  return model.A * x + model.B * u + w;
}

Vec control_input(const Vec& x_hat, const LoopModel& model) {
  return -model.K * x_hat;
}

Controller::Controller(const LoopModel& model, std::size_t input_window)
    : model_(&model),
      x_hat_(Vec::Zero(model.n)),
      u_prev_(Vec::Zero(model.m)),
      inputs_(input_window, Vec::Zero(model.m)) {}

Vec Controller::input_at(Step t) const {
  if (t < 0 || t >= next_k_) return Vec::Zero(model_->m);
  if (next_k_ - t > static_cast<Step>(inputs_.size()))
    throw std::runtime_error("Controller: input record window exceeded");
  return inputs_[static_cast<std::size_t>(t % static_cast<Step>(inputs_.size()))];
}

Vec Controller::tick(Step k, std::span<const Observation> arrivals) {
  // Pick the freshest arrival; everything staler than the current estimate
  // base is ignored.
  const Observation* best = nullptr;
  for (const auto& obs : arrivals) {
    record_.push_back(obs);
    if (obs.gen > nu_ && (best == nullptr || obs.gen > best->gen)) best = &obs;
  }

  if (best != nullptr) {
    // Rebuild the estimate from the measurement and the inputs applied over
    // the staleness gap.
    Vec x = best->x;
    for (Step t = best->gen; t < k; ++t) x = model_->A * x + model_->B * input_at(t);
    x_hat_ = x;
    nu_ = best->gen;
  } else {
    x_hat_ = model_->A * x_hat_ + model_->B * u_prev_;
  }

  Vec u = -model_->K * x_hat_;
  inputs_[static_cast<std::size_t>(k % static_cast<Step>(inputs_.size()))] = u;
  u_prev_ = u;
  next_k_ = k + 1;
  return u;
}

double lqg_window_cost(std::span<const Vec> x_traj, std::span<const Vec> u_traj,
                       const Mat& Q, const Mat& R, int q) {
  if (q < 0 || q > 4) throw std::invalid_argument("lqg_window_cost: q must be in 0..4");
  const Step lo = 1000 * (2 + q);
  const Step hi = 1000 * (3 + q);
  if (std::cmp_less(x_traj.size(), hi + 1) || std::cmp_less(u_traj.size(), hi + 1))
    throw std::invalid_argument("lqg_window_cost: trajectory too short");
  double acc = 0.0;
  for (Step k = lo; k <= hi; ++k) {
    const Vec& x = x_traj[static_cast<std::size_t>(k)];
    const Vec& u = u_traj[static_cast<std::size_t>(k)];
    acc += (x.transpose() * Q * x).value() + (u.transpose() * R * u).value();
  }
  return acc / 1001.0;
}

}  // namespace vou
