#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace qdgt {

using SymbolVector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

// Uniform mid-tread quantizer with 2K+1 output levels {-K, ..., K}.
// Level 0 on (-1/2, 1/2); level k on [(2k-1)/2, (2k+1)/2) for 1 <= k < K;
// level K on [(2K-1)/2, inf); odd symmetry q(-u) = -q(u). Inputs with
// |u| >= K + 1/2 clip to +-K and are flagged saturated — outside that regime
// the quantization error is at most 1/2.
struct UniformQuantizer {
  std::int64_t K;
  explicit UniformQuantizer(std::int64_t levels) : K(levels) {
    if (K < 1) throw std::invalid_argument("quantizer needs K >= 1");
  }
};

struct QuantizeResult {
  std::int64_t symbol;
  bool saturated;
};

inline QuantizeResult quantize(double u, const UniformQuantizer& q) {
  if (!std::isfinite(u)) throw std::invalid_argument("quantizer input must be finite");
  const double a = std::abs(u);
  // floor(a) and a - floor(a) are exact, so the half-integer boundaries land
  // exactly where the branch definition puts them.
  double level = std::floor(a);
  if (a - level >= 0.5) level += 1.0;
  bool saturated = false;
  std::int64_t s;
  if (level > static_cast<double>(q.K)) {
    saturated = true;
    s = q.K;
  } else {
    s = static_cast<std::int64_t>(level);
  }
  return {u < 0.0 ? -s : s, saturated};
}

struct QuantizeVectorResult {
  SymbolVector symbols;
  bool saturated;
};

inline QuantizeVectorResult quantize_vector(const Eigen::VectorXd& u, const UniformQuantizer& q) {
  QuantizeVectorResult r{SymbolVector(u.size()), false};
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const QuantizeResult qi = quantize(u(i), q);
    r.symbols(i) = qi.symbol;
    r.saturated = r.saturated || qi.saturated;
  }
  return r;
}

// Fixed-width cost of one symbol: ceil(log2(2K+1)) bits. K = 1 costs 2 bits;
// its symbols {-1, 0, +1} also fit one trit (log2(3) bits of entropy) when a
// ternary packing is available.
inline int bits_per_symbol(std::int64_t K) {
  if (K < 1) throw std::invalid_argument("bits_per_symbol needs K >= 1");
  return static_cast<int>(std::bit_width(static_cast<std::uint64_t>(2 * K + 1)));
}

inline constexpr double trit_bits = 1.5849625007211562;  // log2(3)

}  // namespace qdgt
