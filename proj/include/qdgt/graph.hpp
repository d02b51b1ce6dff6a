#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cstdint>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qdgt {

// Directed communication graph. Nodes are 0-based in this API; the text file
// format is 1-based. An edge (from, to) means `to` receives what `from`
// transmits. Every node has an implicit self-loop; self-loops are never
// stored and requests to add them are ignored.
class Digraph {
 public:
  explicit Digraph(int n) {
    if (n < 1) throw std::invalid_argument("digraph needs at least one node");
    out_.resize(static_cast<std::size_t>(n));
  }

  int size() const { return static_cast<int>(out_.size()); }

  void add_edge(int from, int to) {
    check_node(from);
    check_node(to);
    if (from == to) return;
    out_[static_cast<std::size_t>(from)].insert(to);
  }

  bool has_edge(int from, int to) const {
    check_node(from);
    check_node(to);
    return from != to && out_[static_cast<std::size_t>(from)].count(to) > 0;
  }

  const std::set<int>& out_neighbors(int i) const {
    check_node(i);
    return out_[static_cast<std::size_t>(i)];
  }

  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> e;
    for (int i = 0; i < size(); ++i)
      for (int j : out_neighbors(i)) e.emplace_back(i, j);
    return e;
  }

 private:
  void check_node(int i) const {
    if (i < 0 || i >= size()) throw std::out_of_range("node index out of range");
  }

  std::vector<std::set<int>> out_;
};

namespace detail {

inline void dfs_finish_order(const std::vector<std::vector<int>>& adj, int start,
                             std::vector<char>& seen, std::vector<int>& order) {
  std::vector<std::pair<int, std::size_t>> stack;
  stack.emplace_back(start, 0);
  seen[static_cast<std::size_t>(start)] = 1;
  while (!stack.empty()) {
    const int u = stack.back().first;
    std::size_t& idx = stack.back().second;
    const auto& next = adj[static_cast<std::size_t>(u)];
    if (idx < next.size()) {
      const int v = next[idx++];
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        stack.emplace_back(v, 0);
      }
    } else {
      order.push_back(u);
      stack.pop_back();
    }
  }
}

}  // namespace detail

// Number of strongly connected components (Kosaraju's two-pass sweep).
inline int scc_count(const Digraph& g) {
  const int n = g.size();
  std::vector<std::vector<int>> fwd(static_cast<std::size_t>(n));
  std::vector<std::vector<int>> rev(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int j : g.out_neighbors(i)) {
      fwd[static_cast<std::size_t>(i)].push_back(j);
      rev[static_cast<std::size_t>(j)].push_back(i);
    }
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    if (!seen[static_cast<std::size_t>(i)]) detail::dfs_finish_order(fwd, i, seen, order);
  std::fill(seen.begin(), seen.end(), 0);
  int comps = 0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (seen[static_cast<std::size_t>(*it)]) continue;
    ++comps;
    std::vector<int> stack{*it};
    seen[static_cast<std::size_t>(*it)] = 1;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int v : rev[static_cast<std::size_t>(u)])
        if (!seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = 1;
          stack.push_back(v);
        }
    }
  }
  return comps;
}

inline bool strongly_connected(const Digraph& g) { return scc_count(g) == 1; }

// Row-stochastic A (uniform over in-neighborhoods incl. self) and
// column-stochastic B (uniform over out-neighborhoods incl. self), plus the
// smoothed mixing matrices A_alpha = (1-a)I + aA and B_beta = (1-b)I + bB.
struct WeightPair {
  Eigen::MatrixXd A, B;
  double alpha = 0.0, beta = 0.0;
  Eigen::MatrixXd A_alpha, B_beta;
  int n() const { return static_cast<int>(A.rows()); }
};

inline WeightPair build_weights(const Digraph& g, double alpha, double beta) {
  if (!(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0))
    throw std::invalid_argument("mixing parameters alpha, beta must lie in (0, 1)");
  if (!strongly_connected(g))
    throw std::invalid_argument("weight construction requires a strongly connected graph");
  const int n = g.size();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
  std::vector<std::vector<int>> in(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j)
    for (int i : g.out_neighbors(j)) in[static_cast<std::size_t>(i)].push_back(j);
  for (int i = 0; i < n; ++i) {
    const double w = 1.0 / (1.0 + static_cast<double>(in[static_cast<std::size_t>(i)].size()));
    A(i, i) = w;
    for (int j : in[static_cast<std::size_t>(i)]) A(i, j) = w;
  }
  for (int j = 0; j < n; ++j) {
    const double w = 1.0 / (1.0 + static_cast<double>(g.out_neighbors(j).size()));
    B(j, j) = w;
    for (int i : g.out_neighbors(j)) B(i, j) = w;
  }
  WeightPair wp;
  wp.A = std::move(A);
  wp.B = std::move(B);
  wp.alpha = alpha;
  wp.beta = beta;
  wp.A_alpha = (1.0 - alpha) * Eigen::MatrixXd::Identity(n, n) + alpha * wp.A;
  wp.B_beta = (1.0 - beta) * Eigen::MatrixXd::Identity(n, n) + beta * wp.B;
  return wp;
}

// Unit-sum eigenvectors at eigenvalue 1: pi_A is the left eigenvector of A,
// pi_B the right eigenvector of B. A_alpha/B_beta share them with A/B.
struct PerronVectors {
  Eigen::VectorXd pi_A, pi_B;
};

namespace detail {

inline Eigen::VectorXd perron_right(const Eigen::MatrixXd& M, const char* which) {
  const Eigen::Index n = M.rows();
  Eigen::VectorXd v;
  if (n <= 50) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(M);
    if (es.info() != Eigen::Success)
      throw std::runtime_error(std::string("eigensolver failed for weight matrix ") + which);
    Eigen::Index best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = std::abs(es.eigenvalues()(i) - std::complex<double>(1.0, 0.0));
      if (d < best_dist) {
        best_dist = d;
        best = i;
      }
    }
    Eigen::VectorXcd vc = es.eigenvectors().col(best);
    Eigen::Index imax = 0;
    vc.cwiseAbs().maxCoeff(&imax);
    vc /= vc(imax);
    v = vc.real();
  } else {
    // Power iteration on the averaged operator (M+I)/2; same fixed point,
    // better damping of oscillatory modes.
    v = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    const long cap = 2000000;
    for (long it = 0;; ++it) {
      if (it >= cap)
        throw std::runtime_error(std::string("power iteration did not converge; weight matrix ") +
                                 which + " is malformed");
      Eigen::VectorXd next = 0.5 * (M * v + v);
      next /= next.lpNorm<1>();
      const double change = (next - v).cwiseAbs().maxCoeff();
      v = std::move(next);
      if (change < 1e-13) break;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (v(i) < 0.0) {
      if (v(i) < -1e-9)
        throw std::runtime_error(std::string("eigenvector for ") + which +
                                 " has a negative component; matrix is not primitive");
      v(i) = 0.0;
    }
  }
  const double s = v.sum();
  if (!(s > 0.0)) throw std::runtime_error("degenerate eigenvector");
  v /= s;
  const double resid = (M * v - v).norm();
  if (!(resid <= 1e-10))
    throw std::runtime_error(std::string("eigenvector residual too large for ") + which);
  return v;
}

}  // namespace detail

inline PerronVectors perron_vectors(const WeightPair& w) {
  PerronVectors pv;
  pv.pi_A = detail::perron_right(w.A.transpose(), "A");
  pv.pi_B = detail::perron_right(w.B, "B");
  return pv;
}

// Symmetric doubly stochastic weights, defined only on symmetric edge sets:
// w_ij = 1/(1 + max(deg_i, deg_j)) on edges, diagonal takes the rest.
inline Eigen::MatrixXd metropolis_weights(const Digraph& g) {
  const int n = g.size();
  for (int i = 0; i < n; ++i)
    for (int j : g.out_neighbors(i))
      if (!g.has_edge(j, i))
        throw std::invalid_argument("metropolis weights require a symmetric edge set");
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double di = static_cast<double>(g.out_neighbors(i).size());
    for (int j : g.out_neighbors(i)) {
      if (j <= i) continue;
      const double dj = static_cast<double>(g.out_neighbors(j).size());
      const double w = 1.0 / (1.0 + std::max(di, dj));
      W(i, j) = w;
      W(j, i) = w;
    }
  }
  for (int i = 0; i < n; ++i) W(i, i) = 1.0 - W.row(i).sum();
  return W;
}

inline Digraph ring_digraph(int n) {
  Digraph g(n);
  for (int i = 0; i < n; ++i) g.add_edge(i, (i + 1) % n);
  return g;
}

inline Digraph bidirectional_ring_digraph(int n) {
  Digraph g(n);
  for (int i = 0; i < n; ++i) {
    g.add_edge(i, (i + 1) % n);
    g.add_edge((i + 1) % n, i);
  }
  return g;
}

inline Digraph complete_digraph(int n) {
  Digraph g(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) g.add_edge(i, j);
  return g;
}

// Random cycle through all nodes (guarantees strong connectivity) plus
// `extra_edges` additional random edges.
inline Digraph random_strongly_connected_digraph(int n, int extra_edges, std::uint64_t seed) {
  if (extra_edges < 0) throw std::invalid_argument("extra_edges must be nonnegative");
  Digraph g(n);
  std::mt19937_64 rng(seed);
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  for (int i = 0; i < n; ++i)
    g.add_edge(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>((i + 1) % n)]);
  for (int e = 0; e < extra_edges; ++e) {
    const int i = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
    if (i != j) g.add_edge(i, j);
  }
  return g;
}

// Text format: header line "n <count>", then one 1-based "i j" edge per line
// (j receives from i). Self-loops in the input are implied and ignored.
inline Digraph load_digraph(std::istream& is) {
  std::string tag;
  long long n = 0;
  if (!(is >> tag >> n) || tag != "n" || n < 1)
    throw std::runtime_error("graph header must be 'n <count>'");
  Digraph g(static_cast<int>(n));
  long long a = 0, b = 0;
  while (is >> a >> b) {
    if (a < 1 || a > n || b < 1 || b > n)
      throw std::runtime_error("graph edge endpoint out of range");
    g.add_edge(static_cast<int>(a - 1), static_cast<int>(b - 1));
  }
  if (!is.eof() && is.fail()) throw std::runtime_error("malformed graph edge line");
  return g;
}

inline Digraph load_digraph(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open graph file: " + path);
  return load_digraph(is);
}

inline void save_digraph(std::ostream& os, const Digraph& g) {
  os << "n " << g.size() << '\n';
  for (const auto& [i, j] : g.edges()) os << (i + 1) << ' ' << (j + 1) << '\n';
}

inline void save_digraph(const std::string& path, const Digraph& g) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open graph file for writing: " + path);
  save_digraph(os, g);
}

}  // namespace qdgt
