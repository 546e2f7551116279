#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "ridemix/error.hpp"
#include "ridemix/parallel.hpp"
#include "ridemix/policy.hpp"
#include "ridemix/state_space.hpp"

namespace ridemix {

/// Sparse row-stochastic matrix over a state space, stored row-major (CSR).
/// Rejected and no-request mass sits on the diagonal.
template <typename Real>
class BasicTransitionMatrix {
 public:
  struct Entry {
    std::size_t col;
    Real value;
  };

  BasicTransitionMatrix() = default;
  BasicTransitionMatrix(std::optional<StateSpace> space, PolicySpec policy,
                        std::vector<std::vector<Entry>> rows)
      : space_(std::move(space)), policy_(policy) {
    row_ptr_.reserve(rows.size() + 1);
    row_ptr_.push_back(0);
    for (auto& row : rows) {
      std::sort(row.begin(), row.end(), [](const Entry& a, const Entry& b) { return a.col < b.col; });
      for (auto& e : row) {
        if (e.col >= rows.size()) throw InvalidArgument("column index out of range");
        if (!entries_.empty() && entries_.size() > row_ptr_.back() && entries_.back().col == e.col)
          entries_.back().value += e.value;
        else
          entries_.push_back(e);
      }
      row_ptr_.push_back(entries_.size());
    }
  }

  // Dense input, e.g. hand-built test chains.
  static BasicTransitionMatrix from_dense(const std::vector<std::vector<Real>>& dense) {
    std::vector<std::vector<Entry>> rows(dense.size());
    for (std::size_t i = 0; i < dense.size(); ++i) {
      if (dense[i].size() != dense.size()) throw InvalidArgument("matrix must be square");
      for (std::size_t j = 0; j < dense.size(); ++j)
        if (dense[i][j] != Real(0)) rows[i].push_back({j, dense[i][j]});
    }
    return BasicTransitionMatrix(std::nullopt, PolicySpec{}, std::move(rows));
  }

  std::size_t size() const noexcept { return row_ptr_.empty() ? 0 : row_ptr_.size() - 1; }
  std::size_t nonzeros() const noexcept { return entries_.size(); }

  const std::optional<StateSpace>& space() const noexcept { return space_; }
  const PolicySpec& policy() const noexcept { return policy_; }
  // The self-trip convention changes profits, never transitions, so a chain may be relabelled.
  void retag(const PolicySpec& policy) {
    PolicySpec a = policy_, b = policy;
    a.self_trip_needs_room = b.self_trip_needs_room = false;
    if (!(a == b)) throw InvalidArgument("cannot relabel a " + policy_.to_string() + " chain as " + policy.to_string());
    policy_ = policy;
  }

  std::pair<const Entry*, const Entry*> row(std::size_t i) const {
    return {entries_.data() + row_ptr_[i], entries_.data() + row_ptr_[i + 1]};
  }

  Real operator()(std::size_t i, std::size_t j) const {
    auto [b, e] = row(i);
    auto it = std::lower_bound(b, e, j, [](const Entry& x, std::size_t c) { return x.col < c; });
    return (it != e && it->col == j) ? it->value : Real(0);
  }

  Real row_sum(std::size_t i) const {
    Real s(0);
    for (auto [b, e] = row(i); b != e; ++b) s += b->value;
    return s;
  }

  std::vector<std::vector<Real>> dense() const {
    std::vector<std::vector<Real>> out(size(), std::vector<Real>(size(), Real(0)));
    for (std::size_t i = 0; i < size(); ++i)
      for (auto [b, e] = row(i); b != e; ++b) out[i][b->col] = b->value;
    return out;
  }

  /// out = mu * P.
  void left_multiply(const std::vector<Real>& mu, std::vector<Real>& out) const {
    out.assign(size(), Real(0));
    for (std::size_t i = 0; i < size(); ++i) {
      if (mu[i] == Real(0)) continue;
      for (auto [b, e] = row(i); b != e; ++b) out[b->col] += mu[i] * b->value;
    }
  }

 private:
  std::optional<StateSpace> space_;
  PolicySpec policy_;
  std::vector<std::size_t> row_ptr_;
  std::vector<Entry> entries_;
};

using TransitionMatrix = BasicTransitionMatrix<double>;

namespace detail {

template <typename Real, typename OffDiagonal>
BasicTransitionMatrix<Real> build_rows(const StateSpace& space, PolicySpec tag, unsigned threads,
                                       OffDiagonal&& off_diagonal) {
  using Entry = typename BasicTransitionMatrix<Real>::Entry;
  std::vector<std::vector<Entry>> rows(space.size());
  parallel_for(space.size(), threads, [&](std::size_t i) {
    const DriverState x = space.unrank(i);
    Real stay(1);
    for (Location u = 0; u < space.n(); ++u) {
      if (!x.has_driver(u)) continue;
      for (Location v = 0; v < space.n(); ++v) {
        if (v == u || !x.has_room(v)) continue;
        Real value = off_diagonal(x, u, v);
        if (value == Real(0)) continue;
        rows[i].push_back({space.rank(apply_move(x, u, v)), value});
        stay -= value;
      }
    }
    if (stay != Real(0)) rows[i].push_back({i, stay});
  });
  return BasicTransitionMatrix<Real>(space, tag, std::move(rows));
}

template <typename Real>
double to_double(const Real& v) {
  if constexpr (std::is_floating_point_v<Real>)
    return static_cast<double>(v);
  else
    return static_cast<double>(v.numerator()) / static_cast<double>(v.denominator());
}

}  // namespace detail

/// NAdap(alpha) chain: a driver moves u -> u' with probability
/// q(u,u') = alpha p(u,u') + (1-alpha)/4 * sum_{v in N(u)} p(v,u').
/// Boundary directions contribute nothing.
template <typename Real>
BasicTransitionMatrix<Real> build_transition_nadap(const StateSpace& space,
                                                   const BasicRequestModel<Real>& model,
                                                   Real alpha, unsigned threads = 1) {
  if (!(alpha > Real(0) && alpha <= Real(1))) throw InvalidArgument("NAdap requires 0 < alpha <= 1");
  if (!(model.grid() == space.grid())) throw InvalidArgument("model and state space grids differ");
  const int n = space.n();
  const Real side = (Real(1) - alpha) / Real(4);
  std::vector<Real> q(static_cast<std::size_t>(n) * n, Real(0));
  for (Location u = 0; u < n; ++u)
    for (Location v = 0; v < n; ++v) {
      Real acc = alpha * model.p(u, v);
      for (Location k : space.grid().neighbors(u)) acc += side * model.p(k, v);
      q[static_cast<std::size_t>(u) * n + v] = acc;
    }
  return detail::build_rows<Real>(space, PolicySpec::nadap(detail::to_double(alpha)), threads,
                                  [&](const DriverState&, Location u, Location v) {
                                    return q[static_cast<std::size_t>(u) * n + v];
                                  });
}

/// Neighbours v of u whose requests Rand(order) routes to u in state x: v is empty,
/// and so is every in-grid neighbour of v that `order` probes before u.
inline std::vector<Location> supportive_neighbors(const DriverState& x, const Grid& grid, Location u,
                                                  const DirectionOrder& order) {
  std::vector<Location> out;
  for (Location v : grid.neighbors(u)) {
    if (x.has_driver(v)) continue;
    bool clear = true;
    for (auto d : order) {
      auto w = grid.step(v, d);
      if (w == u) break;
      if (w && x.has_driver(*w)) {
        clear = false;
        break;
      }
    }
    if (clear) out.push_back(v);
  }
  return out;
}

/// Rand(order) chain: p(u,u') plus the mass of requests (v,u') from supportive neighbours.
template <typename Real>
BasicTransitionMatrix<Real> build_transition_rand(const StateSpace& space,
                                                  const BasicRequestModel<Real>& model,
                                                  const DirectionOrder& order, unsigned threads = 1) {
  if (!(model.grid() == space.grid())) throw InvalidArgument("model and state space grids differ");
  return detail::build_rows<Real>(space, PolicySpec::rand(order), threads,
                                  [&](const DriverState& x, Location u, Location v) {
                                    Real value = model.p(u, v);
                                    for (Location k : supportive_neighbors(x, space.grid(), u, order))
                                      value += model.p(k, v);
                                    return value;
                                  });
}

/// Chain of any deterministic policy, accumulating p_r into the state each request leads to.
inline TransitionMatrix build_transition_greedy(const StateSpace& space, const RequestModel& model,
                                                bool origin_first = true, unsigned threads = 1) {
  if (!(model.grid() == space.grid())) throw InvalidArgument("model and state space grids differ");
  using Entry = TransitionMatrix::Entry;
  std::vector<std::vector<Entry>> rows(space.size());
  const int n = space.n();
  parallel_for(space.size(), threads, [&](std::size_t i) {
    const DriverState x = space.unrank(i);
    double stay = 1.0;
    for (Location u = 0; u < n; ++u) {
      auto chosen = greedy_choice(x, space.grid(), u, origin_first);
      if (!chosen) continue;
      for (Location v = 0; v < n; ++v) {
        const double p = model.p(u, v);
        if (p == 0.0 || *chosen == v || !x.has_room(v)) continue;
        rows[i].push_back({space.rank(apply_move(x, *chosen, v)), p});
        stay -= p;
      }
    }
    if (stay != 0.0) rows[i].push_back({i, stay});
  });
  return TransitionMatrix(space, PolicySpec::greedy(origin_first), std::move(rows));
}

inline TransitionMatrix build_transition(const StateSpace& space, const RequestModel& model,
                                         const PolicySpec& policy, unsigned threads = 1) {
  TransitionMatrix P;
  switch (policy.kind) {
    case PolicyKind::NAdap: P = build_transition_nadap(space, model, policy.alpha, threads); break;
    case PolicyKind::Rand: P = build_transition_rand(space, model, policy.order, threads); break;
    case PolicyKind::Greedy: P = build_transition_greedy(space, model, policy.greedy_origin_first, threads); break;
  }
  P.retag(policy);
  return P;
}

}  // namespace ridemix
