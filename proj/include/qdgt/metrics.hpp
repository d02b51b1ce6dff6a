#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qdgt/matrix_io.hpp"
#include "qdgt/norms.hpp"

namespace qdgt {

// Three-component convergence vector: distance of the Perron average from the
// optimum, consensus residual under the A-norm, and tracker dispersion under
// the B-norm, with z(k) = y(k) - y(k-1).
inline Eigen::Vector3d theta(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                             const Eigen::MatrixXd& y_prev,
                             const Eigen::VectorXd& pi_A,
                             const Eigen::VectorXd& pi_B,
                             const WeightedNorm& norm_A,
                             const WeightedNorm& norm_B,
                             const Eigen::VectorXd& x_star) {
  const Eigen::Index n = x.rows();
  if (y.rows() != n || y_prev.rows() != n || y.cols() != x.cols() ||
      y_prev.cols() != x.cols()) {
    throw std::invalid_argument("theta: state shape mismatch");
  }
  if (pi_A.size() != n || pi_B.size() != n || norm_A.dim() != n ||
      norm_B.dim() != n) {
    throw std::invalid_argument("theta: weight shape mismatch");
  }
  if (x_star.size() != x.cols()) {
    throw std::invalid_argument("theta: optimum dimension mismatch");
  }
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::RowVectorXd xbar = pi_A.transpose() * x;
  const Eigen::MatrixXd z = y - y_prev;
  const Eigen::RowVectorXd zbar = z.colwise().sum();
  Eigen::Vector3d t;
  t(0) = (xbar.transpose() - x_star).norm();
  t(1) = norm_A.stacked(x - ones * xbar);
  t(2) = norm_B.stacked(z - pi_B * zbar);
  return t;
}

// |1^T z(k+1) - 1^T grad(k+1) - 1^T eps_y(k)|_inf over the m components.
inline double tracking_residual(const Eigen::MatrixXd& y_new,
                                const Eigen::MatrixXd& y_old,
                                const Eigen::MatrixXd& grad_new,
                                const Eigen::MatrixXd& eps_y) {
  const Eigen::RowVectorXd r = (y_new - y_old).colwise().sum() -
                               grad_new.colwise().sum() -
                               eps_y.colwise().sum();
  return r.cwiseAbs().maxCoeff();
}

struct RateFit {
  double rate = 1.0;
  double r_squared = 1.0;
  int points = 0;
};

// Least-squares fit of log(trace[k]) against k on [burn_in, end); the trace is
// truncated at its first nonpositive entry.  rate = exp(slope).
inline RateFit fit_linear_rate(const std::vector<double>& trace, int burn_in) {
  if (burn_in < 0) throw std::invalid_argument("fit_linear_rate: burn_in must be >= 0");
  if (static_cast<int>(trace.size()) < burn_in + 20) {
    throw std::invalid_argument("fit_linear_rate: need at least burn_in + 20 samples");
  }
  int end = static_cast<int>(trace.size());
  for (int i = burn_in; i < end; ++i) {
    if (!(trace[static_cast<std::size_t>(i)] > 0)) {
      end = i;
      break;
    }
  }
  const int count = end - burn_in;
  if (count < 2) {
    throw std::invalid_argument("fit_linear_rate: too few positive samples after burn-in");
  }
  double sx = 0, sy = 0;
  for (int i = burn_in; i < end; ++i) {
    sx += i;
    sy += std::log(trace[static_cast<std::size_t>(i)]);
  }
  const double mx = sx / count, my = sy / count;
  double sxx = 0, sxy = 0, syy = 0;
  for (int i = burn_in; i < end; ++i) {
    const double dx = i - mx;
    const double dy = std::log(trace[static_cast<std::size_t>(i)]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  RateFit f;
  f.points = count;
  const double slope = sxy / sxx;
  f.rate = std::exp(slope);
  if (syy < 1e-30) {
    f.r_squared = 1.0;
  } else {
    double sse = 0;
    for (int i = burn_in; i < end; ++i) {
      const double pred = my + slope * (i - mx);
      const double dy = std::log(trace[static_cast<std::size_t>(i)]) - pred;
      sse += dy * dy;
    }
    f.r_squared = 1.0 - sse / syy;
  }
  return f;
}

struct ConvergenceReport {
  // Per-round traces; entry k-1 describes the state after round k.
  std::vector<double> residual;
  std::vector<double> theta1, theta2, theta3;
  std::vector<double> tracking;
  std::vector<double> bits_cum;
  std::vector<std::int64_t> Kx, Ky;
  std::vector<int> saturated;
  // Optional algorithm-specific column (e.g. the naive accumulation sum).
  std::string extra_name;
  std::vector<double> extra;

  int rounds = 0;
  std::int64_t saturation_count = 0;
  double fitted_rate = std::numeric_limits<double>::quiet_NaN();
  double fit_r2 = std::numeric_limits<double>::quiet_NaN();
  double final_residual = std::numeric_limits<double>::quiet_NaN();
  double wall_time_s = 0;
  bool hit_tolerance = false;
  int rounds_to_tolerance = -1;
};

inline void write_csv(const ConvergenceReport& rep, std::ostream& os) {
  const auto rounds = static_cast<std::size_t>(rep.rounds);
  const bool has_extra = !rep.extra_name.empty();
  if (rep.residual.size() != rounds || rep.theta1.size() != rounds ||
      rep.theta2.size() != rounds || rep.theta3.size() != rounds ||
      rep.tracking.size() != rounds || rep.bits_cum.size() != rounds ||
      rep.Kx.size() != rounds || rep.Ky.size() != rounds ||
      rep.saturated.size() != rounds ||
      (has_extra && rep.extra.size() != rounds)) {
    throw std::logic_error("write_csv: trace lengths must equal completed rounds");
  }
  os << "k,residual,theta1,theta2,theta3,tracking_residual,bits_cum,Kx,Ky,saturated";
  if (has_extra) os << "," << rep.extra_name;
  os << "\n";
  for (std::size_t i = 0; i < rounds; ++i) {
    os << (i + 1) << "," << format_double(rep.residual[i]) << ","
       << format_double(rep.theta1[i]) << "," << format_double(rep.theta2[i])
       << "," << format_double(rep.theta3[i]) << ","
       << format_double(rep.tracking[i]) << ","
       << format_double(rep.bits_cum[i]) << "," << rep.Kx[i] << ","
       << rep.Ky[i] << "," << rep.saturated[i];
    if (has_extra) os << "," << format_double(rep.extra[i]);
    os << "\n";
  }
}

inline void write_csv(const ConvergenceReport& rep, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_csv: cannot open " + path);
  write_csv(rep, os);
}

}  // namespace qdgt
