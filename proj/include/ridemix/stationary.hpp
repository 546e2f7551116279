#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "ridemix/error.hpp"
#include "ridemix/transition.hpp"

namespace ridemix {

/// Dense n x n table indexed (u, v).
struct PairTable {
  int n = 0;
  std::vector<double> values;

  PairTable() = default;
  explicit PairTable(int size) : n(size), values(static_cast<std::size_t>(size) * size, 0.0) {}
  double& operator()(Location u, Location v) { return values[static_cast<std::size_t>(u) * n + v]; }
  double operator()(Location u, Location v) const { return values[static_cast<std::size_t>(u) * n + v]; }
};

struct StationaryResult {
  std::vector<double> pi;
  // gamma(u,v) = Pr[x_u >= 1, x_v < c]; eta(u,v) = Pr[closed neighbourhood of u occupied, x_v < c].
  PairTable gamma;
  PairTable eta;
  double residual = 0.0;
  PolicySpec policy;
  std::optional<StateSpace> space;
  std::size_t iterations = 0;  // 0 for the dense solve
};

inline double l1_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InvalidArgument("length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

inline double stationarity_residual(const TransitionMatrix& P, const std::vector<double>& pi) {
  std::vector<double> next;
  P.left_multiply(pi, next);
  return l1_distance(next, pi);
}

/// gamma and eta of a distribution over the matrix's state space.
inline void occupancy_tables(const StateSpace& space, const std::vector<double>& dist, PairTable& gamma,
                             PairTable& eta) {
  const int n = space.n();
  gamma = PairTable(n);
  eta = PairTable(n);
  std::vector<std::vector<Location>> closed(static_cast<std::size_t>(n));
  for (Location u = 0; u < n; ++u) closed[u] = space.grid().closed_neighborhood(u);
  std::vector<char> occupied(static_cast<std::size_t>(n)), near(static_cast<std::size_t>(n));
  std::vector<Location> room;
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (dist[i] == 0.0) continue;
    const DriverState x = space.unrank(i);
    room.clear();
    for (Location u = 0; u < n; ++u) {
      occupied[u] = x.has_driver(u);
      if (x.has_room(u)) room.push_back(u);
    }
    for (Location u = 0; u < n; ++u) {
      near[u] = std::any_of(closed[u].begin(), closed[u].end(), [&](Location k) { return occupied[k]; });
      for (Location v : room) {
        if (occupied[u]) gamma(u, v) += dist[i];
        if (near[u]) eta(u, v) += dist[i];
      }
    }
  }
}

struct StationaryOptions {
  std::size_t dense_limit = 2000;
  double tolerance = 1e-12;
  std::size_t max_iterations = 10'000'000;
  double accept = 1e-10;
};

/// Unique stationary distribution of an irreducible aperiodic chain: a dense LU
/// solve for small chains, power iteration above `dense_limit` states.
inline StationaryResult stationary_distribution(const TransitionMatrix& P, StationaryOptions opt = {}) {
  const std::size_t N = P.size();
  if (N == 0) throw InvalidArgument("empty transition matrix");
  StationaryResult out;
  out.policy = P.policy();
  std::vector<double> pi(N, 1.0 / static_cast<double>(N));

  if (N <= opt.dense_limit) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
    for (std::size_t i = 0; i < N; ++i)
      for (auto [b, e] = P.row(i); b != e; ++b)
        A(static_cast<Eigen::Index>(b->col), static_cast<Eigen::Index>(i)) += b->value;
    A -= Eigen::MatrixXd::Identity(A.rows(), A.cols());
    A.row(A.rows() - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(A.rows());
    rhs(rhs.size() - 1) = 1.0;
    Eigen::VectorXd sol = A.fullPivLu().solve(rhs);
    for (std::size_t i = 0; i < N; ++i) pi[i] = std::max(0.0, sol(static_cast<Eigen::Index>(i)));
    double s = std::accumulate(pi.begin(), pi.end(), 0.0);
    if (!(s > 0.0) || !std::isfinite(s)) throw IterationLimit("dense stationary solve failed", 1.0);
    for (auto& v : pi) v /= s;
    out.residual = stationarity_residual(P, pi);
  } else {
    std::vector<double> next;
    double delta = 1.0;
    std::size_t it = 0;
    while (delta > opt.tolerance) {
      if (it >= opt.max_iterations)
        throw IterationLimit("power iteration did not converge, residual " + fmt_real(delta), delta);
      P.left_multiply(pi, next);
      double s = std::accumulate(next.begin(), next.end(), 0.0);
      for (auto& v : next) v /= s;
      delta = l1_distance(next, pi);
      pi.swap(next);
      ++it;
    }
    out.iterations = it;
    out.residual = stationarity_residual(P, pi);
  }
  if (out.residual > opt.accept)
    throw IterationLimit("stationary residual " + fmt_real(out.residual) + " above tolerance",
                         out.residual);
  out.pi = std::move(pi);
  out.space = P.space();
  if (P.space()) occupancy_tables(*P.space(), out.pi, out.gamma, out.eta);
  return out;
}

namespace detail {

// Strongly connected components of the nonzero pattern (iterative Tarjan).
// Returns the component id of each node.
template <typename Real>
std::vector<std::size_t> scc_ids(const BasicTransitionMatrix<Real>& P, std::size_t& count) {
  const std::size_t N = P.size();
  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(N, kUnset), low(N, 0), comp(N, kUnset), stack;
  std::vector<char> on_stack(N, 0);
  std::vector<std::pair<std::size_t, std::size_t>> call;  // (node, next edge offset)
  std::size_t counter = 0;
  count = 0;
  for (std::size_t root = 0; root < N; ++root) {
    if (index[root] != kUnset) continue;
    call.push_back({root, 0});
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      auto& [v, edge] = call.back();
      auto [b, e] = P.row(v);
      bool descended = false;
      while (b + edge < e) {
        const auto& entry = b[edge++];
        if (entry.value == Real(0)) continue;
        std::size_t w = entry.col;
        if (index[w] == kUnset) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = 1;
          call.push_back({w, 0});
          descended = true;
          break;
        }
        if (on_stack[w]) low[v] = std::min(low[v], index[w]);
      }
      if (descended) continue;
      std::size_t node = v;
      if (low[node] == index[node]) {
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp[w] = count;
        } while (w != node);
        ++count;
      }
      call.pop_back();
      if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[node]);
    }
  }
  return comp;
}

}  // namespace detail

template <typename Real>
bool check_irreducible(const BasicTransitionMatrix<Real>& P) {
  std::size_t count = 0;
  detail::scc_ids(P, count);
  return count <= 1;
}

/// Every recurrent-capable class (nontrivial strongly connected component) has period 1.
/// A self-loop settles a class immediately; otherwise the gcd of BFS level differences
/// over intra-class edges gives the period.
template <typename Real>
bool check_aperiodic(const BasicTransitionMatrix<Real>& P) {
  const std::size_t N = P.size();
  std::size_t count = 0;
  auto comp = detail::scc_ids(P, count);
  std::vector<char> has_loop(count, 0), has_edge(count, 0);
  for (std::size_t i = 0; i < N; ++i)
    for (auto [b, e] = P.row(i); b != e; ++b) {
      if (b->value == Real(0) || comp[b->col] != comp[i]) continue;
      has_edge[comp[i]] = 1;
      if (b->col == i) has_loop[comp[i]] = 1;
    }
  constexpr long kUnset = -1;
  std::vector<long> level(N, kUnset);
  std::vector<std::size_t> queue;
  for (std::size_t root = 0; root < N; ++root) {
    const std::size_t c = comp[root];
    if (!has_edge[c] || has_loop[c] || level[root] != kUnset) continue;
    long period = 0;
    queue.assign(1, root);
    level[root] = 0;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      std::size_t v = queue[head];
      for (auto [b, e] = P.row(v); b != e; ++b) {
        if (b->value == Real(0) || comp[b->col] != c) continue;
        if (level[b->col] == kUnset) {
          level[b->col] = level[v] + 1;
          queue.push_back(b->col);
        } else {
          period = std::gcd(period, std::abs(level[v] + 1 - level[b->col]));
        }
      }
    }
    if (period != 1) return false;
  }
  return true;
}

}  // namespace ridemix
