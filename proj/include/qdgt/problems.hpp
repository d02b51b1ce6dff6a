#pragma once

#include "qdgt/matrix_io.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace qdgt {

namespace detail {

// Deterministic, platform-independent draws built directly on the mt19937_64
// bit stream (library distributions are not bit-reproducible across
// implementations, and fixtures freeze oracle values).
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline double gaussian(std::mt19937_64& rng) {
  double u1 = 0.0;
  do {
    u1 = uniform01(rng);
  } while (u1 == 0.0);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline Eigen::MatrixXd gaussian_matrix(std::mt19937_64& rng, Eigen::Index rows,
                                       Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = gaussian(rng);
  return m;
}

}  // namespace detail

// A sum f(x) = sum_i f_i(x) of per-node objectives over a shared decision
// vector of dimension m. mu/L are per-node strong convexity and smoothness
// moduli (valid for every f_i).
struct Objective {
  int nodes = 0;
  int m = 0;
  double mu = 0.0;
  double L = 0.0;
  std::vector<std::function<double(const Eigen::VectorXd&)>> value;
  std::vector<std::function<Eigen::VectorXd(const Eigen::VectorXd&)>> gradient;
  std::optional<Eigen::VectorXd> x_star;

  // Row i = gradient of f_i at row i of x.
  Eigen::MatrixXd grad_matrix(const Eigen::MatrixXd& x) const {
    if (x.rows() != nodes || x.cols() != m)
      throw std::invalid_argument("objective state must be nodes x m");
    Eigen::MatrixXd g(nodes, m);
    for (int i = 0; i < nodes; ++i)
      g.row(i) = gradient[static_cast<std::size_t>(i)](x.row(i).transpose()).transpose();
    return g;
  }

  Eigen::VectorXd grad_sum_at(const Eigen::VectorXd& x) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
    for (const auto& gi : gradient) g += gi(x);
    return g;
  }

  double total_value(const Eigen::VectorXd& x) const {
    double v = 0.0;
    for (const auto& fi : value) v += fi(x);
    return v;
  }
};

// f_i(x) = |M_i x - zeta_i|^2 + (lambda/2n)|x|^2.
struct SensorFusionInstance {
  std::vector<Eigen::MatrixXd> M;      // s x m measurement matrices
  std::vector<Eigen::VectorXd> zeta;   // s-vectors
  double lambda = 0.0;

  int nodes() const { return static_cast<int>(M.size()); }
  int m() const { return M.empty() ? 0 : static_cast<int>(M.front().cols()); }
  int s() const { return M.empty() ? 0 : static_cast<int>(M.front().rows()); }
};

inline void save_instance(std::ostream& os, const SensorFusionInstance& inst) {
  os << inst.nodes() << ' ' << inst.s() << ' ' << inst.m() << ' '
     << format_double(inst.lambda) << '\n';
  for (int i = 0; i < inst.nodes(); ++i) {
    save_matrix(os, inst.M[static_cast<std::size_t>(i)]);
    save_matrix(os, inst.zeta[static_cast<std::size_t>(i)]);
  }
}

inline void save_instance(const std::string& path, const SensorFusionInstance& inst) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  save_instance(os, inst);
}

inline SensorFusionInstance load_instance(std::istream& is) {
  int n = 0, s = 0, m = 0;
  double lambda = 0.0;
  if (!(is >> n >> s >> m >> lambda) || n < 1 || s < 1 || m < 1)
    throw std::runtime_error("instance header malformed");
  SensorFusionInstance inst;
  inst.lambda = lambda;
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd Mi = load_matrix(is);
    Eigen::MatrixXd zi = load_matrix(is);
    if (Mi.rows() != s || Mi.cols() != m || zi.rows() != s || zi.cols() != 1)
      throw std::runtime_error("instance block shape mismatch");
    inst.M.push_back(std::move(Mi));
    inst.zeta.emplace_back(zi.col(0));
  }
  return inst;
}

inline SensorFusionInstance load_instance(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return load_instance(is);
}

inline Objective sensor_fusion(const SensorFusionInstance& instance) {
  if (!(instance.lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  const int n = instance.nodes();
  if (n < 1) throw std::invalid_argument("instance needs at least one node");
  const int m = instance.m();
  for (const auto& Mi : instance.M)
    if (Mi.cols() != m || Mi.rows() != instance.s())
      throw std::invalid_argument("inconsistent measurement shapes");
  for (int i = 0; i < n; ++i)
    if (instance.zeta[static_cast<std::size_t>(i)].size() != instance.s())
      throw std::invalid_argument("inconsistent observation shapes");

  auto shared = std::make_shared<const SensorFusionInstance>(instance);
  Objective obj;
  obj.nodes = n;
  obj.m = m;

  double min_eig = std::numeric_limits<double>::infinity();
  double max_eig = 0.0;
  Eigen::MatrixXd gram_sum = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  for (int i = 0; i < n; ++i) {
    const Eigen::MatrixXd& Mi = shared->M[static_cast<std::size_t>(i)];
    const Eigen::VectorXd& zi = shared->zeta[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd gram = Mi.transpose() * Mi;
    gram_sum += gram;
    rhs += Mi.transpose() * zi;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
    max_eig = std::max(max_eig, es.eigenvalues().maxCoeff());
    obj.value.push_back([shared, i](const Eigen::VectorXd& x) {
      const auto& Mk = shared->M[static_cast<std::size_t>(i)];
      const auto& zk = shared->zeta[static_cast<std::size_t>(i)];
      const double nn = static_cast<double>(shared->M.size());
      return (Mk * x - zk).squaredNorm() + shared->lambda / (2.0 * nn) * x.squaredNorm();
    });
    obj.gradient.push_back([shared, i](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      const auto& Mk = shared->M[static_cast<std::size_t>(i)];
      const auto& zk = shared->zeta[static_cast<std::size_t>(i)];
      const double nn = static_cast<double>(shared->M.size());
      return 2.0 * Mk.transpose() * (Mk * x - zk) + shared->lambda / nn * x;
    });
  }
  obj.mu = instance.lambda / n + 2.0 * std::max(0.0, min_eig);
  obj.L = instance.lambda / n + 2.0 * max_eig;
  const Eigen::MatrixXd normal =
      2.0 * gram_sum + instance.lambda * Eigen::MatrixXd::Identity(m, m);
  obj.x_star = normal.ldlt().solve(2.0 * rhs);
  return obj;
}

inline SensorFusionInstance random_sensor_fusion(int n, int s, int m, double lambda,
                                                 std::uint64_t seed) {
  if (n < 1 || s < 1 || m < 1) throw std::invalid_argument("instance shape must be positive");
  std::mt19937_64 rng(seed);
  SensorFusionInstance inst;
  inst.lambda = lambda;
  for (int i = 0; i < n; ++i) {
    inst.M.push_back(detail::gaussian_matrix(rng, s, m));
    inst.zeta.emplace_back(detail::gaussian_matrix(rng, s, 1).col(0));
  }
  return inst;
}

// Random strongly convex quadratics f_i(x) = (x - c_i)' H_i (x - c_i)/2 with
// H_i eigenvalues drawn uniformly from [eig_lo, eig_hi]; the optimum has the
// closed form (sum H_i)^{-1} sum H_i c_i.
inline Objective quadratic_fixture(int n, int m, std::uint64_t seed, double eig_lo = 1.0,
                                   double eig_hi = 5.0) {
  if (n < 1 || m < 1) throw std::invalid_argument("fixture shape must be positive");
  if (!(eig_lo > 0.0 && eig_hi >= eig_lo))
    throw std::invalid_argument("eigenvalue range must satisfy 0 < lo <= hi");
  std::mt19937_64 rng(seed);
  auto Hs = std::make_shared<std::vector<Eigen::MatrixXd>>();
  auto cs = std::make_shared<std::vector<Eigen::VectorXd>>();
  double mu = std::numeric_limits<double>::infinity();
  double L = 0.0;
  Eigen::MatrixXd H_sum = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd Hc_sum = Eigen::VectorXd::Zero(m);
  for (int i = 0; i < n; ++i) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(detail::gaussian_matrix(rng, m, m));
    const Eigen::MatrixXd Q = qr.householderQ();
    Eigen::VectorXd lam(m);
    for (int j = 0; j < m; ++j) lam(j) = detail::uniform_in(rng, eig_lo, eig_hi);
    mu = std::min(mu, lam.minCoeff());
    L = std::max(L, lam.maxCoeff());
    Eigen::MatrixXd H = Q * lam.asDiagonal() * Q.transpose();
    H = 0.5 * (H + H.transpose().eval());
    Eigen::VectorXd c(m);
    for (int j = 0; j < m; ++j) c(j) = detail::gaussian(rng);
    H_sum += H;
    Hc_sum += H * c;
    Hs->push_back(std::move(H));
    cs->push_back(std::move(c));
  }
  Objective obj;
  obj.nodes = n;
  obj.m = m;
  obj.mu = mu;
  obj.L = L;
  obj.x_star = H_sum.ldlt().solve(Hc_sum);
  for (int i = 0; i < n; ++i) {
    obj.value.push_back([Hs, cs, i](const Eigen::VectorXd& x) {
      const Eigen::VectorXd d = x - (*cs)[static_cast<std::size_t>(i)];
      return 0.5 * d.dot((*Hs)[static_cast<std::size_t>(i)] * d);
    });
    obj.gradient.push_back([Hs, cs, i](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      return (*Hs)[static_cast<std::size_t>(i)] * (x - (*cs)[static_cast<std::size_t>(i)]);
    });
  }
  return obj;
}

}  // namespace qdgt
