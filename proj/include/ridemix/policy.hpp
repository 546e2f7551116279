#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <string>
#include <vector>

#include "ridemix/error.hpp"
#include "ridemix/grid.hpp"
#include "ridemix/rng.hpp"
#include "ridemix/state_space.hpp"

namespace ridemix {

struct Request {
  Location origin;
  Location dest;
  bool operator==(const Request&) const = default;
};

using DirectionOrder = std::array<Direction, 4>;

enum class PolicyKind { NAdap, Rand, Greedy };

/// A dispatch rule: NAdap(alpha), Rand(order) or Greedy.
struct PolicySpec {
  PolicyKind kind = PolicyKind::NAdap;
  double alpha = 0.8;
  DirectionOrder order = kClockwise;
  // Greedy probes the origin before its neighbours; false sorts the origin with them.
  bool greedy_origin_first = true;
  // A trip whose serving driver already sits at the destination leaves the counts
  // unchanged; by default it needs no room there. true applies the room test anyway.
  bool self_trip_needs_room = false;

  static PolicySpec nadap(double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("NAdap requires 0 < alpha <= 1");
    PolicySpec p;
    p.kind = PolicyKind::NAdap;
    p.alpha = alpha;
    return p;
  }
  static PolicySpec rand(DirectionOrder order = kClockwise) {
    PolicySpec p;
    p.kind = PolicyKind::Rand;
    p.order = order;
    return p;
  }
  static PolicySpec greedy(bool origin_first = true) {
    PolicySpec p;
    p.kind = PolicyKind::Greedy;
    p.greedy_origin_first = origin_first;
    return p;
  }

  bool operator==(const PolicySpec& o) const {
    if (kind != o.kind || self_trip_needs_room != o.self_trip_needs_room) return false;
    switch (kind) {
      case PolicyKind::NAdap: return alpha == o.alpha;
      case PolicyKind::Rand: return order == o.order;
      case PolicyKind::Greedy: return greedy_origin_first == o.greedy_origin_first;
    }
    return false;
  }

  std::string to_string() const;
};

inline std::string order_string(const DirectionOrder& order) {
  std::string s;
  for (auto d : order) s += direction_letter(d);
  return s;
}

inline DirectionOrder parse_order(const std::string& text) {
  if (text.size() != 4) throw InvalidArgument("direction order must be a permutation of NESW");
  DirectionOrder order{};
  std::array<bool, 4> seen{};
  for (std::size_t i = 0; i < 4; ++i) {
    auto pos = std::string("NESW").find(static_cast<char>(std::toupper(text[i])));
    if (pos == std::string::npos || seen[pos])
      throw InvalidArgument("direction order must be a permutation of NESW, got '" + text + "'");
    seen[pos] = true;
    order[i] = static_cast<Direction>(pos);
  }
  return order;
}

/// All 24 orders, lexicographic in N < E < S < W.
inline std::vector<DirectionOrder> all_direction_orders() {
  DirectionOrder order = kClockwise;
  std::vector<DirectionOrder> out;
  do out.push_back(order);
  while (std::next_permutation(order.begin(), order.end()));
  return out;
}

inline std::string PolicySpec::to_string() const {
  const std::string suffix = self_trip_needs_room ? "+strict" : "";
  switch (kind) {
    case PolicyKind::NAdap: return "nadap:" + fmt_real(alpha) + suffix;
    case PolicyKind::Rand: return "rand:" + order_string(order) + suffix;
    case PolicyKind::Greedy: return (greedy_origin_first ? "greedy" : "greedy:sorted") + suffix;
  }
  return {};
}

// Grammar: `nadap:0.8`, `rand:NESW` (or `rand`), `greedy` (or `greedy:sorted`),
// each optionally followed by `+strict` (self-trips need room too).
inline PolicySpec parse_policy(std::string text) {
  bool strict = false;
  if (auto plus = text.rfind("+strict"); plus != std::string::npos && plus + 7 == text.size()) {
    strict = true;
    text.resize(plus);
  }
  auto spec = [&](PolicySpec p) {
    p.self_trip_needs_room = strict;
    return p;
  };
  auto colon = text.find(':');
  std::string name = text.substr(0, colon);
  std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (name == "nadap") {
    if (arg.empty()) throw InvalidArgument("nadap needs an alpha, e.g. nadap:0.8");
    try {
      std::size_t used = 0;
      double a = std::stod(arg, &used);
      if (used != arg.size()) throw std::invalid_argument(arg);
      return spec(PolicySpec::nadap(a));
    } catch (const std::logic_error&) {
      throw InvalidArgument("malformed alpha in '" + text + "'");
    }
  }
  if (name == "rand") return spec(PolicySpec::rand(arg.empty() ? kClockwise : parse_order(arg)));
  if (name == "greedy") {
    if (arg.empty()) return spec(PolicySpec::greedy());
    if (arg == "sorted") return spec(PolicySpec::greedy(false));
  }
  throw InvalidArgument("unknown policy '" + text + "' (expected nadap:A, rand:ORDER or greedy)");
}

struct DispatchOutcome {
  std::optional<Location> chosen;
  bool success = false;
  double profit = 0.0;
};

/// The success rule for a fixed serving location: it must hold a driver and the
/// destination must have room, unless the driver is already there and
/// `self_trip_needs_room` is off.
inline bool can_serve(const DriverState& x, Location from, Location dest, bool self_trip_needs_room = false) {
  return x.has_driver(from) && (x.has_room(dest) || (from == dest && !self_trip_needs_room));
}

/// Applies the success rule once to the chosen location; no fallback to others.
inline DispatchOutcome resolve_dispatch(const DriverState& x, const RequestModel& model,
                                        Request r, std::optional<Location> chosen, bool strict = false) {
  DispatchOutcome out;
  out.chosen = chosen;
  if (chosen && can_serve(x, *chosen, r.dest, strict)) {
    out.success = true;
    out.profit = model.w(r.origin, r.dest);
  }
  return out;
}

// Probe distribution of NAdap(alpha): the origin w.p. alpha, each compass direction
// w.p. (1-alpha)/4. Off-grid directions appear as nullopt (the request is dropped).
template <typename Real>
std::array<std::pair<std::optional<Location>, Real>, 5> nadap_probes(const Grid& grid, Location u,
                                                                     Real alpha) {
  std::array<std::pair<std::optional<Location>, Real>, 5> out;
  out[0] = {u, alpha};
  const Real side = (Real(1) - alpha) / Real(4);
  for (std::size_t i = 0; i < 4; ++i) out[i + 1] = {grid.step(u, kClockwise[i]), side};
  return out;
}

inline DispatchOutcome dispatch_nadap(const DriverState& x, const RequestModel& model, Request r,
                                      double alpha, CounterRng& rng, bool strict = false) {
  const double coin = rng.uniform();
  std::optional<Location> probe;
  if (coin < alpha) {
    probe = r.origin;
  } else {
    auto k = static_cast<std::size_t>((coin - alpha) / ((1.0 - alpha) / 4.0));
    probe = model.grid().step(r.origin, kClockwise[std::min<std::size_t>(k, 3)]);
  }
  return resolve_dispatch(x, model, r, probe, strict);
}

/// First location among (origin, neighbours in `order`) that holds a driver.
inline std::optional<Location> rand_choice(const DriverState& x, const Grid& grid, Location u,
                                           const DirectionOrder& order) {
  if (x.has_driver(u)) return u;
  for (auto d : order)
    if (auto v = grid.step(u, d); v && x.has_driver(*v)) return v;
  return std::nullopt;
}

inline DispatchOutcome dispatch_rand(const DriverState& x, const RequestModel& model, Request r,
                                     const DirectionOrder& order, bool strict = false) {
  return resolve_dispatch(x, model, r, rand_choice(x, model.grid(), r.origin, order), strict);
}

/// Greedy candidate order: origin first, then neighbours by descending count with
/// clockwise-from-North tie-break. With origin_first == false the origin is ranked
/// together with its neighbours (ties favour the origin).
inline std::vector<Location> greedy_order(const DriverState& x, const Grid& grid, Location u,
                                          bool origin_first = true) {
  std::vector<Location> cand = origin_first ? grid.neighbors(u) : grid.closed_neighborhood(u);
  std::stable_sort(cand.begin(), cand.end(), [&](Location a, Location b) { return x[a] > x[b]; });
  if (origin_first) cand.insert(cand.begin(), u);
  return cand;
}

inline std::optional<Location> greedy_choice(const DriverState& x, const Grid& grid, Location u,
                                             bool origin_first = true) {
  for (Location v : greedy_order(x, grid, u, origin_first))
    if (x.has_driver(v)) return v;
  return std::nullopt;
}

inline DispatchOutcome dispatch_greedy(const DriverState& x, const RequestModel& model, Request r,
                                       bool origin_first = true, bool strict = false) {
  return resolve_dispatch(x, model, r, greedy_choice(x, model.grid(), r.origin, origin_first), strict);
}

inline DispatchOutcome dispatch(const PolicySpec& policy, const DriverState& x,
                                const RequestModel& model, Request r, CounterRng& rng) {
  switch (policy.kind) {
    case PolicyKind::NAdap: return dispatch_nadap(x, model, r, policy.alpha, rng, policy.self_trip_needs_room);
    case PolicyKind::Rand: return dispatch_rand(x, model, r, policy.order, policy.self_trip_needs_room);
    case PolicyKind::Greedy:
      return dispatch_greedy(x, model, r, policy.greedy_origin_first, policy.self_trip_needs_room);
  }
  return {};
}

/// Pr[success | state, request] over the policy's internal coin only.
inline double success_probability(const PolicySpec& policy, const DriverState& x, const Grid& grid,
                                  Request r) {
  const bool strict = policy.self_trip_needs_room;
  auto served = [&](std::optional<Location> from) { return from && can_serve(x, *from, r.dest, strict); };
  switch (policy.kind) {
    case PolicyKind::NAdap: {
      double prob = served(r.origin) ? policy.alpha : 0.0;
      const double side = (1.0 - policy.alpha) / 4.0;
      for (Location k : grid.neighbors(r.origin))
        if (served(k)) prob += side;
      return prob;
    }
    case PolicyKind::Rand:
      return served(rand_choice(x, grid, r.origin, policy.order)) ? 1.0 : 0.0;
    case PolicyKind::Greedy:
      return served(greedy_choice(x, grid, r.origin, policy.greedy_origin_first)) ? 1.0 : 0.0;
  }
  return 0.0;
}

/// Expected one-round profit from state x: sum over r of p_r * w_r * Pr[success].
inline double expected_step_profit(const DriverState& x, const RequestModel& model,
                                   const PolicySpec& policy) {
  double total = 0.0;
  const int n = model.n();
  for (Location u = 0; u < n; ++u)
    for (Location v = 0; v < n; ++v) {
      const double pw = model.p(u, v) * model.w(u, v);
      if (pw == 0.0) continue;
      total += pw * success_probability(policy, x, model.grid(), {u, v});
    }
  return total;
}

}  // namespace ridemix
