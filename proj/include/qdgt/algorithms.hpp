#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qdgt/codec.hpp"
#include "qdgt/graph.hpp"
#include "qdgt/metrics.hpp"
#include "qdgt/problems.hpp"
#include "qdgt/quantizer.hpp"
#include "qdgt/schedule.hpp"

namespace qdgt {

enum class SaturationPolicy { record, abort_run };
enum class ChannelMode { codec, exact };

struct SaturationError : std::runtime_error {
  int round;
  explicit SaturationError(int k, const std::string& what_channel)
      : std::runtime_error("quantizer saturated at round " + std::to_string(k) +
                           " on " + what_channel),
        round(k) {}
};

struct DivergenceError : std::runtime_error {
  int round;
  DivergenceError(int k, double residual)
      : std::runtime_error("divergence at round " + std::to_string(k) +
                           ": residual " + format_double(residual)),
        round(k) {}
};

struct AlgorithmConfig {
  double eta = 0;
  ChannelMode channel_mode = ChannelMode::codec;
  LevelSchedule schedule;
  std::optional<ScalingSchedule> scaling;  // required in codec mode
  SaturationPolicy saturation = SaturationPolicy::record;
  int horizon = 1000;
  double tolerance = 0;  // 0 disables the early stop
  double divergence_limit = 1e12;
};

// Optional hooks for the Theta columns of the report.
struct MetricsContext {
  const Eigen::VectorXd* pi_A = nullptr;
  const Eigen::VectorXd* pi_B = nullptr;
  const WeightedNorm* norm_A = nullptr;
  const WeightedNorm* norm_B = nullptr;

  bool complete() const { return pi_A && pi_B && norm_A && norm_B; }
};

struct QdgtState {
  Eigen::MatrixXd x, y, y_prev;
  std::vector<CodecChannel> xch, ych;  // empty in exact mode
  int round = 0;                       // completed rounds
};

inline QdgtState make_qdgt_state(const Eigen::MatrixXd& x1,
                                 const Eigen::MatrixXd& y1,
                                 ChannelMode mode) {
  if (x1.rows() != y1.rows() || x1.cols() != y1.cols()) {
    throw std::invalid_argument("make_qdgt_state: x and y shapes must match");
  }
  QdgtState s;
  s.x = x1;
  s.y = y1;
  s.y_prev = y1;  // z vanishes on the first round
  if (mode == ChannelMode::codec) {
    const auto n = x1.rows();
    const auto m = x1.cols();
    s.xch.reserve(static_cast<std::size_t>(n));
    s.ych.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      s.xch.emplace_back("x" + std::to_string(i), m);
      s.ych.emplace_back("y" + std::to_string(i), m);
    }
  }
  return s;
}

struct StepTrace {
  Eigen::MatrixXd sigma_x, sigma_y;  // p - x, s - y
  Eigen::MatrixXd e_x, e_y;          // sigma / h_prev (zero for exact channels)
  Eigen::MatrixXd epsilon_y;         // beta * B * sigma_y
  bool saturated_x = false, saturated_y = false;
  std::int64_t Kx = 0, Ky = 0;
  double h_prev = 0;
  double bits = 0;
  std::int64_t symbols = 0;
  double tracking = 0;
};

// One synchronous round: encode, mix, update.
inline StepTrace qdgt_round(QdgtState& state, const AlgorithmConfig& cfg,
                            const WeightPair& w, const Objective& obj) {
  const int k = state.round + 1;
  const auto n = state.x.rows();
  const auto m = state.x.cols();
  StepTrace t;

  Eigen::MatrixXd P, S;
  if (cfg.channel_mode == ChannelMode::codec) {
    if (!cfg.scaling.has_value()) {
      throw std::invalid_argument("qdgt_round: codec mode requires a scaling schedule");
    }
    t.h_prev = cfg.scaling->h(k - 1);
    t.Kx = cfg.schedule.kx(k);
    t.Ky = cfg.schedule.ky(k);
    P.resize(n, m);
    S.resize(n, m);
    t.e_x.resize(n, m);
    t.e_y.resize(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      auto rx = state.xch[static_cast<std::size_t>(i)].round(
          state.x.row(i).transpose(), t.h_prev, t.Kx);
      P.row(i) = rx.decoded.transpose();
      t.e_x.row(i) = rx.error.transpose();
      t.saturated_x = t.saturated_x || rx.saturated;
      auto ry = state.ych[static_cast<std::size_t>(i)].round(
          state.y.row(i).transpose(), t.h_prev, t.Ky);
      S.row(i) = ry.decoded.transpose();
      t.e_y.row(i) = ry.error.transpose();
      t.saturated_y = t.saturated_y || ry.saturated;
    }
    t.bits = static_cast<double>(n) * static_cast<double>(m) *
             (bits_per_symbol(t.Kx) + bits_per_symbol(t.Ky));
    t.symbols = 2 * static_cast<std::int64_t>(n) * static_cast<std::int64_t>(m);
  } else {
    P = state.x;
    S = state.y;
    t.e_x = Eigen::MatrixXd::Zero(n, m);
    t.e_y = Eigen::MatrixXd::Zero(n, m);
  }
  t.sigma_x = P - state.x;
  t.sigma_y = S - state.y;

  if (cfg.saturation == SaturationPolicy::abort_run) {
    if (t.saturated_x) throw SaturationError(k, "a state channel");
    if (t.saturated_y) throw SaturationError(k, "a tracker channel");
  }

  const Eigen::MatrixXd x_new =
      state.x + w.alpha * (w.A * P - P) - cfg.eta * (state.y - state.y_prev);
  const Eigen::MatrixXd grad_new = obj.grad_matrix(x_new);
  const Eigen::MatrixXd y_new =
      (1.0 - w.beta) * state.y + w.beta * (w.B * S) + grad_new;
  t.epsilon_y = w.beta * (w.B * t.sigma_y);
  t.tracking = tracking_residual(y_new, state.y, grad_new, t.epsilon_y);

  state.y_prev = state.y;
  state.y = y_new;
  state.x = x_new;
  state.round = k;
  return t;
}

// Max over nodes of the distance to the optimum; falls back to consensus gap
// plus gradient norm at the node average when no optimum is available.
inline double residual_of(const Eigen::MatrixXd& x, const Objective& obj) {
  if (obj.x_star.has_value()) {
    return (x.rowwise() - obj.x_star->transpose()).rowwise().norm().maxCoeff();
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const double gap = (x.rowwise() - mean).rowwise().norm().maxCoeff();
  return gap + obj.grad_sum_at(mean.transpose()).norm();
}

namespace detail {

inline void finish_report(ConvergenceReport& rep,
                          std::chrono::steady_clock::time_point t0) {
  rep.rounds = static_cast<int>(rep.residual.size());
  rep.final_residual = rep.rounds ? rep.residual.back()
                                  : std::numeric_limits<double>::quiet_NaN();
  const int burn = rep.rounds / 10;
  if (rep.rounds >= burn + 20) {
    try {
      const RateFit f = fit_linear_rate(rep.residual, burn);
      rep.fitted_rate = f.rate;
      rep.fit_r2 = f.r_squared;
    } catch (const std::invalid_argument&) {
      // trace hit zero too early for a fit; leave NaN
    }
  }
  rep.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
}

inline void check_divergence(double residual, int k, double limit) {
  if (!std::isfinite(residual) || residual > limit) {
    throw DivergenceError(k, residual);
  }
}

}  // namespace detail

inline ConvergenceReport run_qdgt(const AlgorithmConfig& cfg,
                                  const WeightPair& w, const Objective& obj,
                                  const Eigen::MatrixXd& x1,
                                  const Eigen::MatrixXd& y1,
                                  const MetricsContext& ctx = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  QdgtState state = make_qdgt_state(x1, y1, cfg.channel_mode);
  ConvergenceReport rep;
  double bits_total = 0;
  for (int k = 1; k <= cfg.horizon; ++k) {
    const StepTrace t = qdgt_round(state, cfg, w, obj);
    const double res = residual_of(state.x, obj);
    rep.residual.push_back(res);
    if (ctx.complete() && obj.x_star.has_value()) {
      const Eigen::Vector3d th =
          theta(state.x, state.y, state.y_prev, *ctx.pi_A, *ctx.pi_B,
                *ctx.norm_A, *ctx.norm_B, *obj.x_star);
      rep.theta1.push_back(th(0));
      rep.theta2.push_back(th(1));
      rep.theta3.push_back(th(2));
    } else {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      rep.theta1.push_back(nan);
      rep.theta2.push_back(nan);
      rep.theta3.push_back(nan);
    }
    rep.tracking.push_back(t.tracking);
    bits_total += t.bits;
    rep.bits_cum.push_back(bits_total);
    rep.Kx.push_back(t.Kx);
    rep.Ky.push_back(t.Ky);
    const bool sat = t.saturated_x || t.saturated_y;
    rep.saturated.push_back(sat ? 1 : 0);
    rep.saturation_count +=
        (t.saturated_x ? 1 : 0) + (t.saturated_y ? 1 : 0);
    if (cfg.tolerance > 0 && res <= cfg.tolerance) {
      rep.hit_tolerance = true;
      rep.rounds_to_tolerance = k;
      break;
    }
    detail::check_divergence(res, k, cfg.divergence_limit);
  }
  detail::finish_report(rep, t0);
  return rep;
}

// Shared state for the exact baselines; y starts at the local gradients.
struct BaselineState {
  Eigen::MatrixXd x, y, y_prev, grad;
  int round = 0;
};

inline BaselineState make_baseline_state(const Eigen::MatrixXd& x1,
                                         const Objective& obj) {
  BaselineState s;
  s.x = x1;
  s.grad = obj.grad_matrix(x1);
  s.y = s.grad;
  s.y_prev = s.y;
  return s;
}

inline void dgt_round(BaselineState& state, const Eigen::MatrixXd& W,
                      double eta, const Objective& obj) {
  const Eigen::MatrixXd x_new = W * state.x - eta * state.y;
  const Eigen::MatrixXd grad_new = obj.grad_matrix(x_new);
  const Eigen::MatrixXd y_new = W * state.y + grad_new - state.grad;
  state.x = x_new;
  state.y_prev = state.y;
  state.y = y_new;
  state.grad = grad_new;
  ++state.round;
}

inline void push_pull_round(BaselineState& state, const WeightPair& w,
                            double eta, const Objective& obj) {
  const Eigen::MatrixXd x_new = w.A_alpha * state.x - eta * state.y;
  const Eigen::MatrixXd grad_new = obj.grad_matrix(x_new);
  const Eigen::MatrixXd y_new = w.B_beta * state.y + grad_new - state.grad;
  state.x = x_new;
  state.y_prev = state.y;
  state.y = y_new;
  state.grad = grad_new;
  ++state.round;
}

struct NaiveState {
  Eigen::MatrixXd x, y, y_prev, grad;
  std::vector<CodecChannel> xch, ych;  // empty = exact communication
  Eigen::RowVectorXd sigma_sum;        // running sum of 1^T sigma_y
  int round = 0;
};

inline NaiveState make_naive_state(const Eigen::MatrixXd& x1,
                                   const Objective& obj, bool with_channels) {
  NaiveState s;
  s.x = x1;
  s.grad = obj.grad_matrix(x1);
  s.y = s.grad;
  s.y_prev = s.y;
  s.sigma_sum = Eigen::RowVectorXd::Zero(x1.cols());
  if (with_channels) {
    for (Eigen::Index i = 0; i < x1.rows(); ++i) {
      s.xch.emplace_back("nx" + std::to_string(i), x1.cols());
      s.ych.emplace_back("ny" + std::to_string(i), x1.cols());
    }
  }
  return s;
}

struct NaiveTrace {
  Eigen::MatrixXd sigma_y;
  bool saturated = false;
  double identity_residual = 0;  // accumulation identity defect
  double bits = 0;
};

// Quantized DGT without error compensation: the mixing step consumes the
// decoded values but the tracker keeps the plain gradient difference, so the
// channel errors accumulate.
inline NaiveTrace naive_qdgt_round(NaiveState& state, const Eigen::MatrixXd& W,
                                   double eta, const Objective& obj, double h,
                                   std::int64_t Kx, std::int64_t Ky) {
  const auto n = state.x.rows();
  const auto m = state.x.cols();
  NaiveTrace t;
  Eigen::MatrixXd P, S;
  if (!state.xch.empty()) {
    P.resize(n, m);
    S.resize(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      auto rx = state.xch[static_cast<std::size_t>(i)].round(
          state.x.row(i).transpose(), h, Kx);
      P.row(i) = rx.decoded.transpose();
      t.saturated = t.saturated || rx.saturated;
      auto ry = state.ych[static_cast<std::size_t>(i)].round(
          state.y.row(i).transpose(), h, Ky);
      S.row(i) = ry.decoded.transpose();
      t.saturated = t.saturated || ry.saturated;
    }
    t.bits = static_cast<double>(n) * static_cast<double>(m) *
             (bits_per_symbol(Kx) + bits_per_symbol(Ky));
  } else {
    P = state.x;
    S = state.y;
  }
  t.sigma_y = S - state.y;

  const Eigen::MatrixXd x_new = W * P - eta * state.y;
  const Eigen::MatrixXd grad_new = obj.grad_matrix(x_new);
  const Eigen::MatrixXd y_new = W * S + grad_new - state.grad;
  state.sigma_sum += t.sigma_y.colwise().sum();
  t.identity_residual = (y_new.colwise().sum() - grad_new.colwise().sum() -
                         state.sigma_sum)
                            .cwiseAbs()
                            .maxCoeff();
  state.x = x_new;
  state.y_prev = state.y;
  state.y = y_new;
  state.grad = grad_new;
  ++state.round;
  return t;
}

struct BaselineConfig {
  double eta = 0;
  int horizon = 1000;
  double tolerance = 0;
  double divergence_limit = 1e12;
};

namespace detail {

template <typename StateT>
inline void push_baseline_row(ConvergenceReport& rep, const StateT& state,
                              const Objective& obj, const MetricsContext& ctx,
                              double tracking_value, double bits_total,
                              std::int64_t Kx, std::int64_t Ky, int sat) {
  rep.residual.push_back(residual_of(state.x, obj));
  if (ctx.complete() && obj.x_star.has_value()) {
    const Eigen::Vector3d th =
        theta(state.x, state.y, state.y_prev, *ctx.pi_A, *ctx.pi_B,
              *ctx.norm_A, *ctx.norm_B, *obj.x_star);
    rep.theta1.push_back(th(0));
    rep.theta2.push_back(th(1));
    rep.theta3.push_back(th(2));
  } else {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rep.theta1.push_back(nan);
    rep.theta2.push_back(nan);
    rep.theta3.push_back(nan);
  }
  rep.tracking.push_back(tracking_value);
  rep.bits_cum.push_back(bits_total);
  rep.Kx.push_back(Kx);
  rep.Ky.push_back(Ky);
  rep.saturated.push_back(sat);
  rep.saturation_count += sat;
}

}  // namespace detail

inline ConvergenceReport run_dgt(const BaselineConfig& cfg,
                                 const Eigen::MatrixXd& W,
                                 const Objective& obj,
                                 const Eigen::MatrixXd& x1,
                                 const MetricsContext& ctx = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  BaselineState state = make_baseline_state(x1, obj);
  ConvergenceReport rep;
  for (int k = 1; k <= cfg.horizon; ++k) {
    dgt_round(state, W, cfg.eta, obj);
    const double track =
        (state.y.colwise().sum() - state.grad.colwise().sum())
            .cwiseAbs()
            .maxCoeff();
    detail::push_baseline_row(rep, state, obj, ctx, track, 0.0, 0, 0, 0);
    if (cfg.tolerance > 0 && rep.residual.back() <= cfg.tolerance) {
      rep.hit_tolerance = true;
      rep.rounds_to_tolerance = k;
      break;
    }
    detail::check_divergence(rep.residual.back(), k, cfg.divergence_limit);
  }
  detail::finish_report(rep, t0);
  return rep;
}

inline ConvergenceReport run_push_pull(const BaselineConfig& cfg,
                                       const WeightPair& w,
                                       const Objective& obj,
                                       const Eigen::MatrixXd& x1,
                                       const MetricsContext& ctx = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  BaselineState state = make_baseline_state(x1, obj);
  ConvergenceReport rep;
  for (int k = 1; k <= cfg.horizon; ++k) {
    push_pull_round(state, w, cfg.eta, obj);
    const double track =
        (state.y.colwise().sum() - state.grad.colwise().sum())
            .cwiseAbs()
            .maxCoeff();
    detail::push_baseline_row(rep, state, obj, ctx, track, 0.0, 0, 0, 0);
    if (cfg.tolerance > 0 && rep.residual.back() <= cfg.tolerance) {
      rep.hit_tolerance = true;
      rep.rounds_to_tolerance = k;
      break;
    }
    detail::check_divergence(rep.residual.back(), k, cfg.divergence_limit);
  }
  detail::finish_report(rep, t0);
  return rep;
}

struct NaiveConfig {
  double eta = 0;
  int horizon = 1000;
  double tolerance = 0;
  double divergence_limit = 1e12;
  bool quantized = true;    // false = exact channels (plain DGT dynamics)
  double h = 1.0;           // constant scaling of the naive channels
  std::int64_t Kx = 1, Ky = 1;
};

inline ConvergenceReport run_naive(const NaiveConfig& cfg,
                                   const Eigen::MatrixXd& W,
                                   const Objective& obj,
                                   const Eigen::MatrixXd& x1,
                                   const MetricsContext& ctx = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  NaiveState state = make_naive_state(x1, obj, cfg.quantized);
  ConvergenceReport rep;
  rep.extra_name = "sigma_sum_inf";
  double bits_total = 0;
  for (int k = 1; k <= cfg.horizon; ++k) {
    const NaiveTrace t =
        naive_qdgt_round(state, W, cfg.eta, obj, cfg.h, cfg.Kx, cfg.Ky);
    bits_total += t.bits;
    detail::push_baseline_row(rep, state, obj, ctx, t.identity_residual,
                              bits_total, cfg.quantized ? cfg.Kx : 0,
                              cfg.quantized ? cfg.Ky : 0, t.saturated ? 1 : 0);
    rep.extra.push_back(state.sigma_sum.cwiseAbs().maxCoeff());
    if (cfg.tolerance > 0 && rep.residual.back() <= cfg.tolerance) {
      rep.hit_tolerance = true;
      rep.rounds_to_tolerance = k;
      break;
    }
    detail::check_divergence(rep.residual.back(), k, cfg.divergence_limit);
  }
  detail::finish_report(rep, t0);
  return rep;
}

}  // namespace qdgt
