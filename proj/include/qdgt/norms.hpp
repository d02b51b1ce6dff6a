#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <stdexcept>

namespace qdgt {

inline double spectral_radius(const Eigen::MatrixXd& M) {
  if (M.rows() != M.cols()) throw std::invalid_argument("spectral radius needs a square matrix");
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigenvalue computation failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double spectral_norm(const Eigen::MatrixXd& M) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  return svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
}

// Weighted Euclidean norm |v| = |T v|_2 with invertible T. Induced matrix
// norm |M| = |T M T^{-1}|_2. A stacked per-node matrix X (one row per node)
// is measured column-by-column in the vector norm, i.e. |X| = |T X|_F.
// T is normalized so its smallest singular value is exactly 1, hence the
// unweighted norm never exceeds the weighted one.
struct WeightedNorm {
  Eigen::MatrixXd T, T_inv;

  double vec(const Eigen::VectorXd& v) const { return (T * v).norm(); }
  double stacked(const Eigen::MatrixXd& X) const { return (T * X).norm(); }
  double op(const Eigen::MatrixXd& M) const { return spectral_norm(T * M * T_inv); }
  Eigen::Index dim() const { return T.rows(); }
};

inline WeightedNorm identity_norm(Eigen::Index n) {
  return {Eigen::MatrixXd::Identity(n, n), Eigen::MatrixXd::Identity(n, n)};
}

namespace detail {

// T = (H/lambda_min(H))^{1/2} for symmetric positive definite H; the scaling
// pins sigma_min(T) = 1.
inline WeightedNorm norm_from_spd(Eigen::MatrixXd H) {
  H = 0.5 * (H + H.transpose().eval());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  if (es.info() != Eigen::Success) throw std::runtime_error("weight eigendecomposition failed");
  const double lmin = es.eigenvalues().minCoeff();
  if (!(lmin > 0.0))
    throw std::runtime_error("norm construction produced a non-positive-definite weight");
  const Eigen::VectorXd s = (es.eigenvalues() / lmin).cwiseSqrt();
  WeightedNorm w;
  w.T = es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
  w.T_inv = es.eigenvectors() * s.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  const double resid = (w.T * w.T_inv - Eigen::MatrixXd::Identity(H.rows(), H.cols())).norm();
  if (!(resid <= 1e-10)) throw std::runtime_error("weight matrix too ill-conditioned to invert");
  return w;
}

// Real weighting equivalent to the complex map v -> Tc v on real vectors:
// |Tc v|_2^2 = v^T Re(Tc* Tc) v, and Re(Tc* Tc) is symmetric positive
// definite, so T = Re(Tc* Tc)^{1/2} reproduces the norm exactly.
inline WeightedNorm realify(const Eigen::MatrixXcd& Tc) {
  return norm_from_spd((Tc.adjoint() * Tc).real());
}

}  // namespace detail

struct ContractionNorm {
  WeightedNorm norm;
  double sigma = 0.0;  // |M| under the returned norm
  double rho = 0.0;    // spectral radius of M
};

// Builds a weighted norm under which |M| <= rho(M) + margin. First tries the
// eigenvector weighting (|M| = rho exactly for cleanly diagonalizable M);
// if the eigenbasis is too ill-conditioned, falls back to a Schur form with
// a diagonal scaling that crushes the off-diagonal mass below the margin.
// Restricting a complex weighted norm to real vectors can only shrink the
// induced norm, so the certified bound survives realification.
inline ContractionNorm contraction_norm(const Eigen::MatrixXd& M, double margin) {
  if (M.rows() != M.cols()) throw std::invalid_argument("contraction_norm needs a square matrix");
  if (!(margin > 0.0)) throw std::invalid_argument("contraction_norm needs margin > 0");
  const double rho = spectral_radius(M);
  if (!(rho < 1.0))
    throw std::invalid_argument("contraction_norm requires spectral radius < 1");
  const Eigen::Index n = M.rows();

  {
    Eigen::EigenSolver<Eigen::MatrixXd> es(M);
    if (es.info() == Eigen::Success) {
      const Eigen::MatrixXcd V = es.eigenvectors();
      Eigen::FullPivLU<Eigen::MatrixXcd> lu(V);
      if (lu.isInvertible()) {
        try {
          WeightedNorm w = detail::realify(lu.inverse());
          const double sigma = w.op(M);
          if (sigma <= rho + margin) return {std::move(w), sigma, rho};
        } catch (const std::runtime_error&) {
        }
      }
    }
  }

  Eigen::ComplexSchur<Eigen::MatrixXcd> schur(M.cast<std::complex<double>>());
  if (schur.info() != Eigen::Success) throw std::runtime_error("Schur decomposition failed");
  const Eigen::MatrixXcd& R = schur.matrixT();
  const Eigen::MatrixXcd& U = schur.matrixU();

  // Off-diagonal mass of D R D^{-1} with D = diag(t^c1, ..., t^cn) decays in
  // t; pick the smallest t >= 1 that pushes it below the margin. Centered
  // exponents keep the diagonal entries of D away from overflow.
  const auto offdiag_mass = [&](double t) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j)
        sum += std::norm(R(i, j)) * std::pow(t, 2.0 * static_cast<double>(i - j));
    return std::sqrt(sum);
  };
  double t_hi = 1.0;
  while (offdiag_mass(t_hi) > margin) {
    t_hi *= 2.0;
    if (t_hi > 1e300) throw std::runtime_error("contraction norm scaling overflow");
  }
  double t_lo = t_hi > 1.0 ? t_hi / 2.0 : 1.0;
  for (int it = 0; it < 80 && t_hi > t_lo; ++it) {
    const double mid = 0.5 * (t_lo + t_hi);
    (offdiag_mass(mid) > margin ? t_lo : t_hi) = mid;
  }
  const double t = t_hi;

  Eigen::VectorXcd d(n);
  const double center = 0.5 * static_cast<double>(n - 1);
  for (Eigen::Index i = 0; i < n; ++i)
    d(i) = std::pow(t, static_cast<double>(i) - center);
  WeightedNorm w = detail::realify(d.asDiagonal() * U.adjoint());
  const double sigma = w.op(M);
  if (!(sigma <= rho + margin))
    throw std::runtime_error("contraction norm failed to certify the requested margin");
  return {std::move(w), sigma, rho};
}

struct EquivalenceConstants {
  double delta_A2 = 1.0;  // |X|_A <= delta_A2 |X|_2
  double delta_B2 = 1.0;  // |X|_B <= delta_B2 |X|_2
  double delta_AB = 1.0;  // |X|_A <= delta_AB |X|_B
  double delta_BA = 1.0;  // |X|_B <= delta_BA |X|_A
};

inline EquivalenceConstants equivalence_constants(const WeightedNorm& a, const WeightedNorm& b) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("norm equivalence needs matching dimensions");
  EquivalenceConstants e;
  e.delta_A2 = spectral_norm(a.T);
  e.delta_B2 = spectral_norm(b.T);
  e.delta_AB = spectral_norm(a.T * b.T_inv);
  e.delta_BA = spectral_norm(b.T * a.T_inv);
  return e;
}

}  // namespace qdgt
