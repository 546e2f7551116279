#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <string>
#include <vector>

#include "ridemix/error.hpp"
#include "ridemix/lower_bound.hpp"
#include "ridemix/parallel.hpp"
#include "ridemix/state_space.hpp"

namespace ridemix {

// d(x,y) = sum_u |x_u - y_u|.
inline int state_distance(const DriverState& x, const DriverState& y) {
  if (x.size() != y.size()) throw InvalidArgument("states of different size");
  int d = 0;
  for (Location u = 0; u < x.size(); ++u) d += std::abs(x[u] - y[u]);
  return d;
}

// One round under request (u,u'): move iff x_u >= 1 and x_{u'} <= c-1, else stay.
inline DriverState serve_request(const DriverState& x, Location u, Location dest) {
  if (auto y = try_apply_move(x, u, dest)) return *std::move(y);
  return x;
}

struct CoupledOutcome {
  DriverState x;
  DriverState y;
  Rational prob;
};

/// Joint one-step law of (x, y) when both copies see the same request.
/// (x, y) must differ by a single driver move.
inline std::vector<CoupledOutcome> coupled_step_distribution(const DriverState& x, const DriverState& y,
                                                             const BasicRequestModel<Rational>& model) {
  if (x.size() != model.n() || y.size() != model.n() || x.capacity() != y.capacity())
    throw InvalidArgument("states do not match the model");
  if (state_distance(x, y) != 2 || x.drivers() != y.drivers())
    throw InvalidArgument("(x, y) is not a neighbouring pair: " + x.to_string() + " / " + y.to_string());
  std::vector<CoupledOutcome> out;
  auto add = [&](DriverState a, DriverState b, Rational p) {
    if (p == Rational(0)) return;
    for (auto& o : out)
      if (o.x == a && o.y == b) {
        o.prob += p;
        return;
      }
    out.push_back({std::move(a), std::move(b), p});
  };
  const Rational idle = model.no_request_mass();
  if (idle < Rational(0)) throw InvalidArgument("arrival mass exceeds 1");
  add(x, y, idle);
  for (Location u = 0; u < model.n(); ++u)
    for (Location v = 0; v < model.n(); ++v)
      add(serve_request(x, u, v), serve_request(y, u, v), model.p(u, v));
  return out;
}

struct PairContraction {
  std::size_t rank_x;
  std::size_t rank_y;
  Rational expected_d;  // E[d(X', Y')]
  Rational ratio;       // expected_d / d(x,y), d(x,y) = 2
};

struct CouplingReport {
  int n = 0, m = 0, c = 0;
  Rational p;
  std::vector<PairContraction> pairs;
  Rational worst_beta;
  Rational bound_beta;  // 1 - 1/n^2
  int diameter = 0;     // D = 2m
  double epsilon = 0.0;
  double tau_bound = 0.0;  // ln(D/eps) / (1 - worst_beta)
  std::size_t violations = 0;
};

struct CouplingOptions {
  unsigned threads = 1;
  bool throw_on_violation = true;
};

/// Exhaustive path-coupling check for uniform arrivals p_r = n^-2 and c <= 2:
/// every neighbouring pair must contract to E[d'] <= (1 - 1/n^2) d.
inline CouplingReport verify_contraction(const Grid& grid, int drivers, int capacity, double epsilon,
                                         const CouplingOptions& opt = {}) {
  if (capacity > 2 || capacity < 1)
    throw OutOfScope("contraction is only established for c in {1, 2}, got c = " + std::to_string(capacity));
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidArgument("epsilon must lie in (0, 1)");
  const long long n = grid.size();
  const Rational p(1, n * n);
  auto model = uniform_request_model<Rational>(grid, p);
  StateSpace space(grid, drivers, capacity);
  auto S = neighbor_pairs(space);

  CouplingReport rep;
  rep.n = static_cast<int>(n);
  rep.m = drivers;
  rep.c = capacity;
  rep.p = p;
  rep.bound_beta = Rational(1) - p;
  rep.diameter = 2 * drivers;
  rep.epsilon = epsilon;
  rep.pairs.resize(S.size());
  parallel_for(S.size(), opt.threads, [&](std::size_t k) {
    const auto x = space.unrank(S[k].from), y = space.unrank(S[k].to);
    Rational e(0);
    for (const auto& o : coupled_step_distribution(x, y, model)) e += o.prob * state_distance(o.x, o.y);
    rep.pairs[k] = {S[k].from, S[k].to, e, e / 2};
  });
  rep.worst_beta = Rational(0);
  for (const auto& pc : rep.pairs) {
    rep.worst_beta = std::max(rep.worst_beta, pc.ratio);
    if (pc.ratio > rep.bound_beta) ++rep.violations;
  }
  rep.tau_bound = rep.worst_beta < Rational(1)
                      ? std::log(rep.diameter / epsilon) / (1.0 - to_double(rep.worst_beta))
                      : INFINITY;
  if (rep.violations && opt.throw_on_violation)
    throw Error(std::to_string(rep.violations) + " neighbouring pairs fail to contract by 1 - 1/n^2");
  return rep;
}

}  // namespace ridemix
