#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qdgt/constants.hpp"
#include "qdgt/graph.hpp"
#include "qdgt/problems.hpp"

namespace qdgt {

enum class LevelMode { closed_form, recursive, fixed };

inline const char* level_mode_name(LevelMode m) {
  switch (m) {
    case LevelMode::closed_form: return "closed_form";
    case LevelMode::recursive: return "recursive";
    case LevelMode::fixed: return "fixed";
  }
  return "unknown";
}

struct LevelSchedule {
  LevelMode mode = LevelMode::fixed;
  // Kx[k-1] holds the round-k level; empty in fixed mode.
  std::vector<std::int64_t> Kx, Ky;
  double r = 0;   // rho_hat / xi
  double v1 = 0;  // recursion offset for the state channel
  double v2 = 0;  // recursion offset for the tracker channel
  std::int64_t fixed_Kx = 0, fixed_Ky = 0;

  int horizon() const { return static_cast<int>(Kx.size()); }

  std::int64_t kx(int k) const {
    if (k < 1) throw std::invalid_argument("LevelSchedule: rounds start at 1");
    if (mode == LevelMode::fixed) return fixed_Kx;
    if (k > horizon()) throw std::out_of_range("LevelSchedule: round beyond horizon");
    return Kx[static_cast<std::size_t>(k - 1)];
  }

  std::int64_t ky(int k) const {
    if (k < 1) throw std::invalid_argument("LevelSchedule: rounds start at 1");
    if (mode == LevelMode::fixed) return fixed_Ky;
    if (k > horizon()) throw std::out_of_range("LevelSchedule: round beyond horizon");
    return Ky[static_cast<std::size_t>(k - 1)];
  }
};

namespace detail {

inline std::int64_t ceil_level(double bound) {
  if (!std::isfinite(bound)) {
    throw std::invalid_argument("level schedule: non-finite level bound");
  }
  if (bound > 1.1e12) {
    throw std::invalid_argument(
        "level schedule: level bound exceeds 2^40; C is too small or xi is too close to rho_hat");
  }
  const double c = std::ceil(bound);
  return c < 1.0 ? 1 : static_cast<std::int64_t>(c);
}

}  // namespace detail

inline double max_node_inf_norm(const Eigen::MatrixXd& X) {
  if (X.size() == 0) throw std::invalid_argument("max_node_inf_norm: empty matrix");
  return X.cwiseAbs().maxCoeff();
}

// Everything the schedule generators need beyond the constants bundle.
struct ScheduleParams {
  double C = 0;
  double xi = 0;
  int m = 0;
  int horizon = 0;
  double x1_inf = 0;  // max_i |x_i(1)|_inf
  double y1_inf = 0;  // max_i |y_i(1)|_inf
  double c_theta = 0;
};

// Round-one size of the convergence vector plus an affine-in-C bound for its
// round-two size.  The certified decay chain is seeded with
// c_theta(C) = max(|Theta(1)|_2, bound(|Theta(2)|_2)/rho_hat) so that every
// link of the chain is covered regardless of how y(1) is initialized.
struct ThetaAnchor {
  Eigen::Vector3d theta1 = Eigen::Vector3d::Zero();
  double n1 = 0;  // |Theta(1)|_2
  double t0 = 0;  // constant part of the round-two bound
  double t1 = 0;  // slope in C of the round-two bound

  double c_theta(double C, double rho_hat) const {
    if (!(rho_hat > 0)) throw std::invalid_argument("ThetaAnchor: rho_hat must be positive");
    return std::max(n1, (t0 + t1 * C) / rho_hat);
  }
};

inline ThetaAnchor theta_anchor(const Eigen::MatrixXd& x1,
                                const Eigen::MatrixXd& y1, const WeightPair& w,
                                const ConstantsBundle& c, const Objective& obj) {
  const int n = w.n();
  const int m = static_cast<int>(x1.cols());
  if (x1.rows() != n || y1.rows() != n || y1.cols() != m) {
    throw std::invalid_argument("theta_anchor: state shape mismatch");
  }
  if (!obj.x_star.has_value()) {
    throw std::invalid_argument("theta_anchor: objective lacks a reference optimum");
  }
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::RowVectorXd xbar = c.pi_A.transpose() * x1;

  ThetaAnchor a;
  a.theta1(0) = (xbar.transpose() - *obj.x_star).norm();
  a.theta1(1) = c.norm_A.stacked(x1 - ones * xbar);
  a.theta1(2) = 0.0;  // the tracker difference vanishes at round one
  a.n1 = a.theta1.norm();

  const Eigen::MatrixXd core =
      (w.B_beta - Eigen::MatrixXd::Identity(n, n)) * y1 +
      obj.grad_matrix(w.A_alpha * x1);
  const double exact3 =
      c.norm_B.stacked(core - c.pi_B * (ones.transpose() * core));
  const double sqrt_mn = std::sqrt(static_cast<double>(m) * n);

  a.t0 = Eigen::Vector3d(a.theta1(0), c.sigma_A * a.theta1(1), exact3).norm();
  a.t1 = Eigen::Vector3d(0.0, 0.5 * c.delta_A2 * c.kappa.k4 * sqrt_mn,
                         0.5 * c.kappa.k3 * c.delta_B2 * sqrt_mn *
                             (c.L * c.kappa.k4 + c.beta * c.B_norm2))
             .norm();
  return a;
}

// Per-round error budget: the chain perturbation at round l is phi * xi^(l-2).
struct SchedulePhi {
  Eigen::Vector3d phi = Eigen::Vector3d::Zero();
  double norm2 = 0;
};

inline SchedulePhi schedule_phi(const ConstantsBundle& c, double C, double xi,
                                int m) {
  const int n = c.n;
  const double sm = std::sqrt(static_cast<double>(m));
  const double smn = std::sqrt(static_cast<double>(m) * n);
  SchedulePhi p;
  p.phi(0) = 0.5 * c.eta_tilde * n * sm * c.beta * C;
  p.phi(1) = 0.5 * c.eta * c.kappa.k1 * c.kappa.k2 * n * sm * c.beta * C +
             0.5 * smn * c.delta_A2 * c.kappa.k4 * C * xi;
  p.phi(2) = 0.5 * c.delta_B2 * c.kappa.k3 * n * sm * c.beta * C *
                 (1.0 + xi + c.eta * c.L * c.kappa.k5) +
             0.5 * c.delta_A2 * c.delta_B2 * c.kappa.k3 * c.kappa.k4 * c.L *
                 smn * C;
  p.norm2 = p.phi.norm();
  return p;
}

namespace detail {

inline void check_certified_inputs(const ConstantsBundle& c,
                                   const ScheduleParams& p) {
  if (!(c.rho_G < 1.0) || !std::isfinite(c.Pi)) {
    std::ostringstream os;
    os << "level schedule: requires a contractive G; rho(G) = " << c.rho_G;
    throw std::invalid_argument(os.str());
  }
  if (c.eta > c.eta_max * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "level schedule: certified schedules require eta <= eta_max; eta = "
       << c.eta << ", eta_max = " << c.eta_max;
    throw std::invalid_argument(os.str());
  }
  if (!(p.xi > c.rho_hat) || !(p.xi < 1.0)) {
    std::ostringstream os;
    os << "level schedule: xi must lie in (rho_hat, 1); xi = " << p.xi
       << ", rho_hat = " << c.rho_hat;
    throw std::invalid_argument(os.str());
  }
  if (!(p.C > 0) || !std::isfinite(p.C)) {
    throw std::invalid_argument("level schedule: C must be positive");
  }
  if (p.m < 1) throw std::invalid_argument("level schedule: m must be >= 1");
  if (p.horizon < 1) throw std::invalid_argument("level schedule: horizon must be >= 1");
  if (!(p.c_theta > 0) || !std::isfinite(p.c_theta)) {
    throw std::invalid_argument("level schedule: c_theta must be positive");
  }
  if (!std::isfinite(p.x1_inf) || !std::isfinite(p.y1_inf) || p.x1_inf < 0 ||
      p.y1_inf < 0) {
    throw std::invalid_argument("level schedule: invalid initial magnitudes");
  }
}

}  // namespace detail

// Exact certified levels: round 1 from the initial magnitudes, later rounds by
// evaluating the decay chain in closed form.
inline LevelSchedule level_schedule_closed_form(const ConstantsBundle& c,
                                                const ScheduleParams& p) {
  detail::check_certified_inputs(c, p);
  const double sqrt3 = std::numbers::sqrt3;
  const double r = c.rho_hat / p.xi;
  const SchedulePhi phi = schedule_phi(c, p.C, p.xi, p.m);
  const double stilde = phi.norm2 / (p.xi * p.xi);
  const double ct = p.c_theta;
  const int n = c.n;

  const double base_x = (2.0 * c.alpha * n + 1.0) / (2.0 * p.xi) +
                        n * c.eta * c.beta / (2.0 * p.xi * p.xi) - 0.5;
  const double base_x2 = (2.0 * c.alpha * n + 1.0) / (2.0 * p.xi) - 0.5;
  const double base_y =
      (n * std::sqrt(static_cast<double>(p.m)) * c.beta + 1.0) / (2.0 * p.xi) -
      0.5;

  LevelSchedule s;
  s.mode = LevelMode::closed_form;
  s.r = r;
  s.Kx.reserve(static_cast<std::size_t>(p.horizon));
  s.Ky.reserve(static_cast<std::size_t>(p.horizon));

  s.Kx.push_back(detail::ceil_level(p.x1_inf / p.C - 0.5));
  s.Ky.push_back(detail::ceil_level(p.y1_inf / p.C - 0.5));
  if (p.horizon >= 2) {
    s.Kx.push_back(
        detail::ceil_level(sqrt3 * c.kappa.k7 * ct / (p.C * p.xi) + base_x2));
    const double w2 = c.Pi * ct * r + stilde;
    s.Ky.push_back(detail::ceil_level(sqrt3 * c.kappa.k8 * w2 / p.C + base_y));
  }
  double px = r, sx = 0.0;      // r^(k-2), sum_{j=1}^{k-3} r^j
  double py = r * r, sy = r;    // r^(k-1), sum_{j=1}^{k-2} r^j
  for (int k = 3; k <= p.horizon; ++k) {
    const double w1 = c.Pi * ct * px + c.Pi * stilde * sx + stilde;
    const double w2 = c.Pi * ct * py + c.Pi * stilde * sy + stilde;
    s.Kx.push_back(
        detail::ceil_level(sqrt3 * c.kappa.k7 * w1 / (p.C * p.xi) + base_x));
    s.Ky.push_back(detail::ceil_level(sqrt3 * c.kappa.k8 * w2 / p.C + base_y));
    sx += px;
    px *= r;
    sy += py;
    py *= r;
  }
  return s;
}

inline void recursion_offsets(const ConstantsBundle& c, const ScheduleParams& p,
                              double& v1, double& v2) {
  const double sqrt3 = std::numbers::sqrt3;
  const double r = c.rho_hat / p.xi;
  const SchedulePhi phi = schedule_phi(c, p.C, p.xi, p.m);
  const int n = c.n;
  const double bracket_x = (2.0 * c.alpha * n + 1.0) / (2.0 * p.xi) +
                           n * c.eta * c.beta / (2.0 * p.xi * p.xi) - 0.5;
  const double bracket_y =
      (n * std::sqrt(static_cast<double>(p.m)) * c.beta + 1.0) / (2.0 * p.xi) -
      0.5;
  const double lift = p.xi - c.rho_hat + c.Pi * c.rho_hat;
  const double xi2 = p.xi * p.xi;
  v1 = (1.0 - r) * bracket_x +
       sqrt3 * c.kappa.k7 * lift * phi.norm2 / (p.C * xi2 * xi2);
  v2 = (1.0 - r) * bracket_y +
       sqrt3 * c.kappa.k8 * lift * phi.norm2 / (p.C * xi2 * p.xi);
}

// One-step certified recursion K(k+1) = ceil(r K(k) + v), fed with the integer
// levels actually used, so each consecutive pair satisfies the sufficient
// condition exactly.
inline LevelSchedule level_schedule_recursive(const ConstantsBundle& c,
                                              const ScheduleParams& p) {
  detail::check_certified_inputs(c, p);
  const double sqrt3 = std::numbers::sqrt3;
  const double r = c.rho_hat / p.xi;

  LevelSchedule s;
  s.mode = LevelMode::recursive;
  s.r = r;
  recursion_offsets(c, p, s.v1, s.v2);
  s.Kx.reserve(static_cast<std::size_t>(p.horizon));
  s.Ky.reserve(static_cast<std::size_t>(p.horizon));

  s.Kx.push_back(detail::ceil_level(p.x1_inf / p.C - 0.5));
  s.Ky.push_back(detail::ceil_level(p.y1_inf / p.C - 0.5));
  if (p.horizon >= 2) {
    const double base_x2 = (2.0 * c.alpha * c.n + 1.0) / (2.0 * p.xi) - 0.5;
    s.Kx.push_back(detail::ceil_level(
        sqrt3 * c.kappa.k7 * p.c_theta / (p.C * p.xi) + base_x2));
    s.Ky.push_back(
        detail::ceil_level(r * static_cast<double>(s.Ky[0]) + s.v2));
  }
  for (int k = 3; k <= p.horizon; ++k) {
    s.Kx.push_back(
        detail::ceil_level(r * static_cast<double>(s.Kx.back()) + s.v1));
    s.Ky.push_back(
        detail::ceil_level(r * static_cast<double>(s.Ky.back()) + s.v2));
  }
  return s;
}

inline LevelSchedule level_schedule_fixed(std::int64_t Kx, std::int64_t Ky) {
  if (Kx < 1 || Ky < 1) {
    throw std::invalid_argument("level_schedule_fixed: levels must be >= 1");
  }
  LevelSchedule s;
  s.mode = LevelMode::fixed;
  s.fixed_Kx = Kx;
  s.fixed_Ky = Ky;
  return s;
}

// Limiting one-bit feasibility certificate for a candidate (C, xi).
struct OneBitCertificate {
  double H = 0;
  double Xi = 0;
  double C_min = 0;
  double Omega_x = 0;
  double Omega_y = 0;
};

inline OneBitCertificate one_bit_certificate(const ConstantsBundle& c,
                                             double c_theta, double C,
                                             double xi, int m, double x1_inf,
                                             double y1_inf) {
  if (!(xi > c.rho_hat) || !(xi < 1.0)) {
    throw std::invalid_argument("one_bit_certificate: xi must lie in (rho_hat, 1)");
  }
  const double sqrt3 = std::numbers::sqrt3;
  const int n = c.n;
  const double xi2 = xi * xi;
  OneBitCertificate b;
  b.H = std::sqrt(static_cast<double>(m) * n) * c.delta_A2 * c.kappa.k4 * C /
        (2.0 * xi2) *
        std::sqrt(xi2 + std::pow(c.delta_B2 * c.kappa.k3 * c.L, 2));
  b.Xi = 1.0 + c.rho_hat * b.H / (c_theta * xi2 * (xi - c.rho_hat)) +
         b.H / (c.Pi * c_theta * xi2);
  b.C_min = std::max({2.0 / 3.0 * x1_inf, 2.0 / 3.0 * y1_inf,
                      sqrt3 * c.kappa.k7 * c_theta / xi,
                      sqrt3 * c.kappa.k7 * c.Pi * c_theta / xi,
                      sqrt3 * c.kappa.k8 * c.Pi * c_theta});
  b.Omega_x = sqrt3 * c.kappa.k7 * c.Pi * c_theta * b.Xi / (C * xi) +
              (2.0 * c.alpha * n + 1.0) / (2.0 * xi) +
              n * c.eta * c.beta / (2.0 * xi2) - 0.5;
  b.Omega_y = sqrt3 * c.kappa.k8 * c.Pi * c_theta * b.Xi / C +
              (n * c.beta + 1.0) / (2.0 * xi) - 0.5;
  return b;
}

struct OneBitParams {
  bool feasible = false;
  double alpha = 0, beta = 0, C = 0, xi = 0, eta = 0;
  OneBitCertificate cert;
  std::string diagnostics;
};

// Searches small mixing weights, xi between rho_hat and one, and C above the
// certified floor for parameters whose recursive schedule is identically one.
inline OneBitParams one_bit_params(const Objective& obj, const Digraph& g,
                                   const Eigen::MatrixXd& x1,
                                   const Eigen::MatrixXd& y1,
                                   int horizon = 5000) {
  const int m = static_cast<int>(x1.cols());
  const double x1_inf = max_node_inf_norm(x1);
  const double y1_inf = max_node_inf_norm(y1);
  const double ab_grid[] = {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
  const double xi_fracs[] = {0.25, 0.5, 0.75};
  const double c_mults[] = {1.0001, 3.0, 10.0, 100.0, 1e4};

  OneBitParams best;
  double best_excess = std::numeric_limits<double>::infinity();
  int examined = 0;

  for (double alpha : ab_grid) {
    for (double beta : ab_grid) {
      ConstantsBundle c;
      WeightPair w;
      try {
        w = build_weights(g, alpha, beta);
        const PerronVectors pv = perron_vectors(w);
        c = build_constants(w, pv, obj.mu, obj.L);
      } catch (const std::exception&) {
        continue;
      }
      if (!(c.rho_G < 1.0) || !std::isfinite(c.Pi)) continue;
      ThetaAnchor anchor;
      try {
        anchor = theta_anchor(x1, y1, w, c, obj);
      } catch (const std::exception&) {
        continue;
      }
      for (double frac : xi_fracs) {
        const double xi = c.rho_hat + frac * (1.0 - c.rho_hat);
        for (double mult : c_mults) {
          ++examined;
          // Solve C = mult * C_min(C); C_min depends on C through the
          // anchored c_theta, so iterate the fixed point.
          double C = std::max({1.0, x1_inf, y1_inf});
          bool solved = false;
          for (int it = 0; it < 80; ++it) {
            const double ct = anchor.c_theta(C, c.rho_hat);
            const OneBitCertificate cert =
                one_bit_certificate(c, ct, C, xi, m, x1_inf, y1_inf);
            const double next = mult * cert.C_min;
            if (!std::isfinite(next) || next > 1e30) break;
            if (std::abs(next - C) <= 1e-12 * std::max(1.0, std::abs(C))) {
              C = next;
              solved = true;
              break;
            }
            C = next;
          }
          if (!solved) continue;
          const double ct = anchor.c_theta(C, c.rho_hat);
          const OneBitCertificate cert =
              one_bit_certificate(c, ct, C, xi, m, x1_inf, y1_inf);
          ScheduleParams sp;
          sp.C = C;
          sp.xi = xi;
          sp.m = m;
          sp.horizon = horizon;
          sp.x1_inf = x1_inf;
          sp.y1_inf = y1_inf;
          sp.c_theta = ct;
          double v1 = 0, v2 = 0;
          recursion_offsets(c, sp, v1, v2);
          const double r = c.rho_hat / xi;
          const double k1x = x1_inf / C - 0.5;
          const double k1y = y1_inf / C - 0.5;
          const double k2x = std::numbers::sqrt3 * c.kappa.k7 * ct / (C * xi) +
                             (2.0 * alpha * c.n + 1.0) / (2.0 * xi) - 0.5;
          const double excess =
              std::max({k1x - 1.0, k1y - 1.0, k2x - 1.0, r + v1 - 1.0,
                        r + v2 - 1.0});
          if (excess < best_excess) {
            best_excess = excess;
            best.alpha = alpha;
            best.beta = beta;
            best.C = C;
            best.xi = xi;
            best.eta = c.eta;
            best.cert = cert;
          }
          if (excess <= 0.0) {
            LevelSchedule sched;
            try {
              sched = level_schedule_recursive(c, sp);
            } catch (const std::exception&) {
              continue;
            }
            const bool all_one =
                std::all_of(sched.Kx.begin(), sched.Kx.end(),
                            [](std::int64_t k) { return k == 1; }) &&
                std::all_of(sched.Ky.begin(), sched.Ky.end(),
                            [](std::int64_t k) { return k == 1; });
            if (all_one) {
              best.feasible = true;
              best.alpha = alpha;
              best.beta = beta;
              best.C = C;
              best.xi = xi;
              best.eta = c.eta;
              best.cert = cert;
              std::ostringstream os;
              os << "feasible after examining " << examined
                 << " parameter combinations";
              best.diagnostics = os.str();
              return best;
            }
          }
        }
      }
    }
  }
  std::ostringstream os;
  os << "infeasible: examined " << examined
     << " parameter combinations; smallest certified excess over the K=1 "
        "requirement was "
     << best_excess << " at alpha=" << best.alpha << ", beta=" << best.beta
     << ", xi=" << best.xi;
  best.feasible = false;
  best.diagnostics = os.str();
  return best;
}

}  // namespace qdgt
