#pragma once

#include "qdgt/matrix_io.hpp"
#include "qdgt/quantizer.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace qdgt {

// Geometric resolution schedule h(k) = C * xi^k. h is always recomputed from
// (C, xi, k) so sender and receiver arithmetic can never drift apart.
// xi = 1 (constant resolution) exists for the naive baseline; certified level
// schedules additionally require xi in (rho_hat, 1) and check that at build
// time.
class ScalingSchedule {
 public:
  ScalingSchedule(double C, double xi) : C_(C), xi_(xi) {
    if (!(C > 0.0)) throw std::invalid_argument("scaling base C must be positive");
    if (!(xi > 0.0 && xi <= 1.0))
      throw std::invalid_argument("scaling decay xi must lie in (0, 1]");
  }
  double h(std::int64_t k) const { return C_ * std::pow(xi_, static_cast<double>(k)); }
  double base() const { return C_; }
  double decay() const { return xi_; }

 private:
  double C_, xi_;
};

// Sender-side state. `internal` is exactly the value every receiver holds
// after decoding the same symbol stream.
class Encoder {
 public:
  explicit Encoder(Eigen::Index dim) : internal_(Eigen::VectorXd::Zero(dim)) {}

  struct Result {
    SymbolVector symbols;
    bool saturated;
  };

  Result encode(const Eigen::VectorXd& value, double h_prev, std::int64_t K) {
    if (value.size() != internal_.size())
      throw std::invalid_argument("encoder dimension mismatch");
    if (!(h_prev > 0.0)) throw std::invalid_argument("encoder needs h_prev > 0");
    if (!value.allFinite()) throw std::invalid_argument("encoder input must be finite");
    const Eigen::VectorXd u = (value - internal_) / h_prev;
    QuantizeVectorResult q = quantize_vector(u, UniformQuantizer(K));
    internal_ += h_prev * q.symbols.cast<double>();
    return {std::move(q.symbols), q.saturated};
  }

  const Eigen::VectorXd& internal() const { return internal_; }

 private:
  Eigen::VectorXd internal_;
};

class Decoder {
 public:
  explicit Decoder(Eigen::Index dim) : estimate_(Eigen::VectorXd::Zero(dim)) {}

  const Eigen::VectorXd& apply(const SymbolVector& symbols, double h_prev) {
    if (symbols.size() != estimate_.size())
      throw std::invalid_argument("decoder dimension mismatch");
    if (!(h_prev > 0.0)) throw std::invalid_argument("decoder needs h_prev > 0");
    estimate_ += h_prev * symbols.cast<double>();
    return estimate_;
  }

  const Eigen::VectorXd& estimate() const { return estimate_; }

 private:
  Eigen::VectorXd estimate_;
};

// Scaled quantizer error after a round: e = (internal_after - value)/h_prev.
// On saturation-free rounds its max norm is at most 1/2.
inline Eigen::VectorXd quantization_error(const Eigen::VectorXd& value, const Encoder& enc_after,
                                          double h_prev) {
  return (enc_after.internal() - value) / h_prev;
}

// One broadcast channel: one sender, one variable family. The decoder every
// receiver runs is replicated here and compared against the encoder state
// after each round; both sides run the identical recursion on the same
// integers and h values, so any mismatch is a bug, not roundoff.
class CodecChannel {
 public:
  CodecChannel(std::string name, Eigen::Index dim)
      : name_(std::move(name)), enc_(dim), dec_(dim) {}

  struct RoundResult {
    SymbolVector symbols;
    bool saturated = false;
    Eigen::VectorXd decoded;  // == encoder internal after this round
    Eigen::VectorXd error;    // (decoded - value)/h_prev
  };

  RoundResult round(const Eigen::VectorXd& value, double h_prev, std::int64_t K) {
    Encoder::Result er = enc_.encode(value, h_prev, K);
    dec_.apply(er.symbols, h_prev);
    if (!(dec_.estimate().array() == enc_.internal().array()).all())
      throw std::logic_error("codec desync on channel " + name_);
    RoundResult rr;
    rr.symbols = std::move(er.symbols);
    rr.saturated = er.saturated;
    rr.decoded = dec_.estimate();
    rr.error = (rr.decoded - value) / h_prev;
    return rr;
  }

  const Eigen::VectorXd& internal() const { return enc_.internal(); }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  Encoder enc_;
  Decoder dec_;
};

// Optional per-symbol trace dump.
class SymbolTraceWriter {
 public:
  explicit SymbolTraceWriter(const std::string& path) : os_(path) {
    if (!os_) throw std::runtime_error("cannot open symbol trace file: " + path);
    os_ << "round,sender,channel,component,symbol,h,saturated\n";
  }

  void record(std::int64_t round, int sender, const std::string& channel,
              const SymbolVector& symbols, double h, bool saturated) {
    for (Eigen::Index i = 0; i < symbols.size(); ++i)
      os_ << round << ',' << sender << ',' << channel << ',' << i << ',' << symbols(i) << ','
          << format_double(h) << ',' << (saturated ? 1 : 0) << '\n';
  }

 private:
  std::ofstream os_;
};

}  // namespace qdgt
