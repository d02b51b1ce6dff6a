#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>

#include "qdgt/graph.hpp"
#include "qdgt/matrix_io.hpp"
#include "qdgt/norms.hpp"

namespace qdgt {

struct ConstantsOptions {
  // Cap on the certification margin used for the A/B contraction norms.
  // The effective margin is min(norm_margin, (1 - rho)/4).
  double norm_margin = 0.02;
  // varpi = g_margin_frac * (1 - rho(G)).
  double g_margin_frac = 0.01;
  // Power horizon and safety factor for the Pi certificate.
  int pi_horizon = 200;
  double pi_safety = 1.1;
};

struct Kappas {
  double k1 = 0;  // |I - 1*pi_A^T| under the A-norm
  double k2 = 0;  // |pi_B| under the A-norm
  double k3 = 0;  // |I - pi_B*1^T| under the B-norm
  double k4 = 0;  // |A_alpha - I|_2
  double k5 = 0;  // |pi_B|_2
  double k6 = 0;  // |pi_A|_2
  double k7 = 0;  // max{sqrt(2)(n+1/2)alpha + eta sqrt(n) L, eta, eta n L}
  double k8 = 0;  // max{1, sqrt(n) L, n L}
};

inline Kappas kappas(const WeightPair& w, const PerronVectors& pv,
                     const WeightedNorm& norm_A, const WeightedNorm& norm_B,
                     double eta, double L) {
  const int n = w.n();
  if (norm_A.dim() != n || norm_B.dim() != n) {
    throw std::invalid_argument("kappas: norm dimension mismatch");
  }
  if (eta < 0) throw std::invalid_argument("kappas: eta must be nonnegative");
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const double rn = std::sqrt(static_cast<double>(n));
  Kappas k;
  k.k1 = norm_A.op(eye - ones * pv.pi_A.transpose());
  k.k2 = norm_A.vec(pv.pi_B);
  k.k3 = norm_B.op(eye - pv.pi_B * ones.transpose());
  k.k4 = spectral_norm(w.A_alpha - eye);
  k.k5 = pv.pi_B.norm();
  k.k6 = pv.pi_A.norm();
  k.k7 = std::max({std::numbers::sqrt2 * (n + 0.5) * w.alpha + eta * rn * L,
                   eta, eta * n * L});
  k.k8 = std::max({1.0, rn * L, n * L});
  return k;
}

struct StepSizeBound {
  double eta_max = 0;
  // Which of the four terms attained the min (0-based).
  int binding = 0;
  double gamma1 = 0, gamma2 = 0, gamma3 = 0;
};

inline StepSizeBound max_step_size(double mu, double L, int n, double pi_dot,
                                   double sigma_A, double sigma_B,
                                   const Kappas& k, double delta_AB,
                                   double delta_B2) {
  if (mu <= 0 || L <= 0 || mu > L) {
    throw std::invalid_argument("max_step_size: need 0 < mu <= L");
  }
  if (sigma_A <= 0 || sigma_A >= 1 || sigma_B <= 0 || sigma_B >= 1) {
    throw std::invalid_argument("max_step_size: contraction factors must lie in (0,1)");
  }
  if (pi_dot <= 0) throw std::invalid_argument("max_step_size: pi_A^T pi_B must be positive");
  const double rn = std::sqrt(static_cast<double>(n));
  StepSizeBound b;
  b.gamma1 = delta_AB * delta_B2 * rn * L * L * pi_dot * k.k1 * k.k3 * k.k5 * (n + mu);
  b.gamma2 = delta_B2 * n * L * L * k.k1 * k.k2 * k.k3 * k.k4 * k.k6 +
             delta_B2 * n * L * L * k.k3 * k.k5 * k.k6 * (1.0 - sigma_A) +
             std::pow(static_cast<double>(n), 1.5) * L * pi_dot * k.k1 * k.k2 * (1.0 - sigma_B) +
             delta_AB * delta_B2 * L * pi_dot * mu * k.k1 * k.k3 * k.k4;
  b.gamma3 = 0.25 * pi_dot * mu * (1.0 - sigma_A) * (1.0 - sigma_B);
  const double terms[4] = {
      1.0 / ((mu + L) * pi_dot),
      (1.0 - sigma_A) / (2.0 * rn * k.k1 * k.k2 * L),
      (1.0 - sigma_B) / (2.0 * delta_B2 * k.k3 * L),
      2.0 * b.gamma3 / (b.gamma2 + std::sqrt(b.gamma2 * b.gamma2 + 4.0 * b.gamma1 * b.gamma3))};
  b.eta_max = terms[0];
  b.binding = 0;
  for (int i = 1; i < 4; ++i) {
    if (terms[i] < b.eta_max) {
      b.eta_max = terms[i];
      b.binding = i;
    }
  }
  return b;
}

inline Eigen::Matrix3d build_G(double mu, double L, int n, double eta,
                               double pi_dot, double sigma_A, double sigma_B,
                               const Kappas& k, double delta_AB,
                               double delta_B2) {
  if (eta < 0) throw std::invalid_argument("build_G: eta must be nonnegative");
  const double eta_tilde = eta * pi_dot;
  if (eta_tilde > 1.0 / (mu + L) * (1.0 + 1e-12)) {
    throw std::invalid_argument("build_G: eta*pi_A^T*pi_B exceeds 1/(mu+L)");
  }
  const double rn = std::sqrt(static_cast<double>(n));
  Eigen::Matrix3d G;
  G(0, 0) = 1.0 - eta_tilde * mu;
  G(0, 1) = rn * eta_tilde;
  G(0, 2) = eta * k.k6;
  G(1, 0) = n * eta * L * k.k1 * k.k2;
  G(1, 1) = sigma_A + rn * eta * L * k.k1 * k.k2;
  G(1, 2) = eta * delta_AB * k.k1;
  G(2, 0) = delta_B2 * n * eta * L * L * k.k3 * k.k5;
  G(2, 1) = delta_B2 * k.k3 * (L * k.k4 + rn * eta * L * L * k.k5);
  G(2, 2) = sigma_B + delta_B2 * eta * L * k.k3;
  return G;
}

struct PiBound {
  double Pi = 0;
  double rho_hat = 0;
};

// Certified power bound: |G^k|_2 <= Pi * rho_hat^k for k = 0..horizon,
// with rho_hat = rho(G) + margin.  A contraction norm for G at the given
// margin is constructed first so the margin is known to be attainable.
inline PiBound pi_bound(const Eigen::MatrixXd& G, double margin,
                        int horizon = 200, double safety = 1.1) {
  if (G.rows() != G.cols()) throw std::invalid_argument("pi_bound: matrix must be square");
  const double rho = spectral_radius(G);
  if (rho >= 1.0) throw std::invalid_argument("pi_bound: spectral radius must be < 1");
  if (!(margin > 0) || margin >= 1.0 - rho) {
    throw std::invalid_argument("pi_bound: margin must lie in (0, 1 - rho)");
  }
  if (horizon < 1) throw std::invalid_argument("pi_bound: horizon must be >= 1");
  PiBound out;
  out.rho_hat = rho + margin;
  contraction_norm(G, margin);  // certifies the margin is attainable
  const double log_rho_hat = std::log(out.rho_hat);
  double best_log = 0.0;  // k = 0: |I|_2 / rho_hat^0 = 1
  Eigen::MatrixXd P = G;
  for (int k = 1; k <= horizon; ++k) {
    const double nrm = spectral_norm(P);
    if (nrm == 0.0) break;
    best_log = std::max(best_log, std::log(nrm) - k * log_rho_hat);
    if (k < horizon) P = P * G;
  }
  out.Pi = safety * std::exp(best_log);
  return out;
}

struct ConstantsBundle {
  int n = 0;
  double mu = 0, L = 0;
  double alpha = 0, beta = 0;
  double eta = 0;
  Eigen::VectorXd pi_A, pi_B;
  double pi_dot = 0;  // pi_A^T pi_B
  WeightedNorm norm_A, norm_B;
  double sigma_A = 0, sigma_B = 0;
  double delta_A2 = 0, delta_B2 = 0, delta_AB = 0, delta_BA = 0;
  Kappas kappa;
  double gamma1 = 0, gamma2 = 0, gamma3 = 0;
  double eta_max = 0;
  int eta_max_binding = 0;
  double eta_tilde = 0;
  Eigen::Matrix3d G;
  double rho_G = 0;
  double varpi = 0;
  double rho_hat = 0;
  // NaN when rho(G) >= 1 (possible for heuristic eta above eta_max).
  double Pi = std::numeric_limits<double>::quiet_NaN();
  double B_norm2 = 0;  // |B|_2, used by the round-two anchor bound
};

// Realizes every analysis constant for the given weights and problem class.
// When eta is not supplied, eta = eta_max.
inline ConstantsBundle build_constants(const WeightPair& w,
                                       const PerronVectors& pv, double mu,
                                       double L,
                                       std::optional<double> eta = std::nullopt,
                                       const ConstantsOptions& opts = {}) {
  if (mu <= 0 || L <= 0 || mu > L) {
    throw std::invalid_argument("build_constants: need 0 < mu <= L");
  }
  const int n = w.n();
  ConstantsBundle c;
  c.n = n;
  c.mu = mu;
  c.L = L;
  c.alpha = w.alpha;
  c.beta = w.beta;
  c.pi_A = pv.pi_A;
  c.pi_B = pv.pi_B;
  c.pi_dot = pv.pi_A.dot(pv.pi_B);
  if (c.pi_dot <= 0) throw std::runtime_error("build_constants: pi_A^T pi_B is not positive");
  c.B_norm2 = spectral_norm(w.B);

  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::MatrixXd M_A = w.A_alpha - ones * pv.pi_A.transpose();
  const Eigen::MatrixXd M_B = w.B_beta - pv.pi_B * ones.transpose();
  const double rho_A = spectral_radius(M_A);
  const double rho_B = spectral_radius(M_B);
  if (rho_A >= 1.0 || rho_B >= 1.0) {
    throw std::runtime_error("build_constants: consensus residual matrix is not contractive");
  }
  const double margin_A = std::min(opts.norm_margin, (1.0 - rho_A) / 4.0);
  const double margin_B = std::min(opts.norm_margin, (1.0 - rho_B) / 4.0);
  ContractionNorm cn_A = contraction_norm(M_A, margin_A);
  ContractionNorm cn_B = contraction_norm(M_B, margin_B);
  c.norm_A = cn_A.norm;
  c.norm_B = cn_B.norm;
  c.sigma_A = cn_A.sigma;
  c.sigma_B = cn_B.sigma;

  const EquivalenceConstants eq = equivalence_constants(c.norm_A, c.norm_B);
  c.delta_A2 = eq.delta_A2;
  c.delta_B2 = eq.delta_B2;
  c.delta_AB = eq.delta_AB;
  c.delta_BA = eq.delta_BA;

  // Step one: eta-independent constants and the step-size bound.
  Kappas k0 = kappas(w, pv, c.norm_A, c.norm_B, 0.0, L);
  const StepSizeBound sb = max_step_size(mu, L, n, c.pi_dot, c.sigma_A,
                                         c.sigma_B, k0, c.delta_AB, c.delta_B2);
  c.gamma1 = sb.gamma1;
  c.gamma2 = sb.gamma2;
  c.gamma3 = sb.gamma3;
  c.eta_max = sb.eta_max;
  c.eta_max_binding = sb.binding;

  // Step two: fix eta and assemble everything that depends on it.
  c.eta = eta.value_or(c.eta_max);
  if (c.eta < 0) throw std::invalid_argument("build_constants: eta must be nonnegative");
  c.kappa = kappas(w, pv, c.norm_A, c.norm_B, c.eta, L);
  c.eta_tilde = c.eta * c.pi_dot;
  c.G = build_G(mu, L, n, c.eta, c.pi_dot, c.sigma_A, c.sigma_B, c.kappa,
                c.delta_AB, c.delta_B2);
  c.rho_G = spectral_radius(c.G);
  if (c.rho_G < 1.0) {
    c.varpi = opts.g_margin_frac * (1.0 - c.rho_G);
    const PiBound pb = pi_bound(c.G, c.varpi, opts.pi_horizon, opts.pi_safety);
    c.rho_hat = pb.rho_hat;
    c.Pi = pb.Pi;
  } else {
    c.varpi = 0.0;
    c.rho_hat = c.rho_G;
    c.Pi = std::numeric_limits<double>::quiet_NaN();
  }
  return c;
}

inline void constants_audit(const ConstantsBundle& c, std::ostream& os) {
  auto line = [&os](const char* name, double value, const char* what) {
    os << name << " = " << format_double(value) << "  # " << what << "\n";
  };
  os << "# analysis constants\n";
  os << "n = " << c.n << "  # nodes\n";
  line("mu", c.mu, "strong convexity modulus");
  line("L", c.L, "gradient Lipschitz modulus");
  line("alpha", c.alpha, "row-stochastic mixing weight");
  line("beta", c.beta, "column-stochastic mixing weight");
  line("eta", c.eta, "step size");
  line("pi_dot", c.pi_dot, "pi_A^T pi_B");
  line("sigma_A", c.sigma_A, "|A_alpha - 1 pi_A^T| under the certified A-norm");
  line("sigma_B", c.sigma_B, "|B_beta - pi_B 1^T| under the certified B-norm");
  line("delta_A2", c.delta_A2, "|X|_A <= delta_A2 |X|_2");
  line("delta_B2", c.delta_B2, "|X|_B <= delta_B2 |X|_2");
  line("delta_AB", c.delta_AB, "|X|_A <= delta_AB |X|_B");
  line("delta_BA", c.delta_BA, "|X|_B <= delta_BA |X|_A");
  line("kappa1", c.kappa.k1, "|I - 1 pi_A^T|_A");
  line("kappa2", c.kappa.k2, "|pi_B|_A");
  line("kappa3", c.kappa.k3, "|I - pi_B 1^T|_B");
  line("kappa4", c.kappa.k4, "|A_alpha - I|_2");
  line("kappa5", c.kappa.k5, "|pi_B|_2");
  line("kappa6", c.kappa.k6, "|pi_A|_2");
  line("kappa7", c.kappa.k7, "max{sqrt(2)(n+1/2)alpha + eta sqrt(n) L, eta, eta n L}");
  line("kappa8", c.kappa.k8, "max{1, sqrt(n) L, n L}");
  line("gamma1", c.gamma1, "step-size bound cubic coefficient");
  line("gamma2", c.gamma2, "step-size bound linear coefficient");
  line("gamma3", c.gamma3, "(1/4) pi_dot mu (1-sigma_A)(1-sigma_B)");
  line("eta_max", c.eta_max, "largest certified step size");
  os << "eta_max_binding = " << c.eta_max_binding
     << "  # 0: convexity, 1: A-consensus, 2: B-tracking, 3: coupling\n";
  line("eta_tilde", c.eta_tilde, "eta pi_A^T pi_B");
  os << "G =\n";
  for (int i = 0; i < 3; ++i) {
    os << " ";
    for (int j = 0; j < 3; ++j) os << " " << format_double(c.G(i, j));
    os << "\n";
  }
  line("rho_G", c.rho_G, "spectral radius of G");
  line("varpi", c.varpi, "margin added to rho(G)");
  line("rho_hat", c.rho_hat, "rho(G) + varpi");
  line("Pi", c.Pi, "certified power bound |G^k|_2 <= Pi rho_hat^k");
  line("B_norm2", c.B_norm2, "|B|_2");
}

}  // namespace qdgt
