#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "ridemix/error.hpp"
#include "ridemix/parallel.hpp"
#include "ridemix/policy.hpp"
#include "ridemix/rng.hpp"
#include "ridemix/state_space.hpp"

namespace ridemix {

// Action 0 rejects; 1 serves from the origin; 2..5 from the N, E, S, W neighbour.
inline constexpr int kMdpActions = 6;

/// Decision-time dispatch MDP: a state is a driver configuration plus the pending
/// request (or "no request" when the arrival mass is below one).
class MdpInstance {
 public:
  MdpInstance(const RequestModel& model, int drivers, int capacity, double discount = 0.9,
              std::uint64_t cap = 100'000, bool self_trip_needs_room = false)
      : model_(model), space_(model.grid(), drivers, capacity), discount_(discount) {
    if (!(discount > 0.0 && discount < 1.0)) throw InvalidArgument("discount must lie in (0, 1)");
    model.validate(1e-12);
    const int n = model.n();
    idle_ = std::max(0.0, 1.0 - model.total_mass());
    slots_ = static_cast<std::size_t>(n) * n + (idle_ > 0.0 ? 1 : 0);
    if (space_.size() * slots_ > cap)
      throw SizeLimit("MDP has " + std::to_string(space_.size() * slots_) + " states, cap is " +
                      std::to_string(cap));
    next_.assign(space_.size() * slots_ * kMdpActions, kNone);
    for (std::size_t i = 0; i < space_.size(); ++i) {
      const DriverState x = space_.unrank(i);
      for (std::size_t k = 0; k < static_cast<std::size_t>(n) * n; ++k) {
        const Request r{static_cast<Location>(k / n), static_cast<Location>(k % n)};
        for (int a = 1; a < kMdpActions; ++a) {
          auto from = candidate(r.origin, a);
          if (!from || !can_serve(x, *from, r.dest, self_trip_needs_room)) continue;
          next_[(i * slots_ + k) * kMdpActions + a] = static_cast<std::int64_t>(space_.rank(serve(x, *from, r.dest)));
        }
      }
    }
  }

  const RequestModel& model() const noexcept { return model_; }
  const StateSpace& space() const noexcept { return space_; }
  double discount() const noexcept { return discount_; }
  std::size_t slots() const noexcept { return slots_; }   // pending-request values per configuration
  std::size_t size() const noexcept { return space_.size() * slots_; }
  bool has_idle_slot() const noexcept { return idle_ > 0.0; }
  double idle_mass() const noexcept { return idle_; }

  std::optional<Location> candidate(Location origin, int action) const {
    if (action == 0) return std::nullopt;
    if (action == 1) return origin;
    return model_.grid().step(origin, kClockwise[static_cast<std::size_t>(action - 2)]);
  }

  std::optional<Request> pending(std::size_t slot) const {
    const auto n = static_cast<std::size_t>(model_.n());
    if (slot >= n * n) return std::nullopt;
    return Request{static_cast<Location>(slot / n), static_cast<Location>(slot % n)};
  }

  // Configuration reached by `action`; illegal actions behave like a rejection.
  std::size_t successor(std::size_t config, std::size_t slot, int action) const {
    auto s = next_[(config * slots_ + slot) * kMdpActions + action];
    return s == kNone ? config : static_cast<std::size_t>(s);
  }
  bool legal(std::size_t config, std::size_t slot, int action) const {
    return action != 0 && next_[(config * slots_ + slot) * kMdpActions + action] != kNone;
  }
  double reward(std::size_t config, std::size_t slot, int action) const {
    if (!legal(config, slot, action)) return 0.0;
    auto r = pending(slot);
    return model_.w(r->origin, r->dest);
  }
  double slot_probability(std::size_t slot) const {
    auto r = pending(slot);
    return r ? model_.p(r->origin, r->dest) : idle_;
  }

 private:
  static constexpr std::int64_t kNone = -1;

  static DriverState serve(const DriverState& x, Location from, Location dest) {
    return from == dest ? x : apply_move(x, from, dest);
  }

  RequestModel model_;
  StateSpace space_;
  double discount_;
  double idle_ = 0.0;
  std::size_t slots_ = 0;
  std::vector<std::int64_t> next_;
};

struct ValueIterationResult {
  std::vector<double> value;         // indexed config * slots + slot
  std::vector<std::uint8_t> policy;  // action per MDP state
  double residual = 0.0;
  std::size_t sweeps = 0;
  std::vector<double> residual_history;
};

namespace detail {

// U(x) = sum over pending slots of Pr[slot] * V(x, slot).
inline void continuation(const MdpInstance& mdp, const std::vector<double>& v, std::vector<double>& u) {
  u.assign(mdp.space().size(), 0.0);
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t k = 0; k < mdp.slots(); ++k) u[i] += mdp.slot_probability(k) * v[i * mdp.slots() + k];
}

inline double q_value(const MdpInstance& mdp, const std::vector<double>& u, std::size_t i, std::size_t k, int a) {
  return mdp.reward(i, k, a) + mdp.discount() * u[mdp.successor(i, k, a)];
}

}  // namespace detail

/// Jacobi value iteration until the sup-norm change is at most `tol`; the greedy
/// policy takes the lowest action index among maximisers.
inline ValueIterationResult value_iteration(const MdpInstance& mdp, double tol = 1e-8, unsigned threads = 1,
                                            std::size_t max_sweeps = 100'000) {
  ValueIterationResult res;
  const std::size_t S = mdp.size();
  std::vector<double> v(S, 0.0), next(S, 0.0), u;
  for (;;) {
    detail::continuation(mdp, v, u);
    parallel_for(mdp.space().size(), threads, [&](std::size_t i) {
      for (std::size_t k = 0; k < mdp.slots(); ++k) {
        double best = detail::q_value(mdp, u, i, k, 0);
        for (int a = 1; a < kMdpActions; ++a)
          if (mdp.legal(i, k, a)) best = std::max(best, detail::q_value(mdp, u, i, k, a));
        next[i * mdp.slots() + k] = best;
      }
    });
    double diff = 0.0;
    for (std::size_t s = 0; s < S; ++s) diff = std::max(diff, std::abs(next[s] - v[s]));
    v.swap(next);
    ++res.sweeps;
    res.residual_history.push_back(diff);
    if (diff <= tol) {
      res.residual = diff;
      break;
    }
    if (res.sweeps >= max_sweeps) throw IterationLimit("value iteration did not converge", diff);
  }
  res.value = v;
  res.policy.assign(S, 0);
  detail::continuation(mdp, v, u);
  for (std::size_t i = 0; i < mdp.space().size(); ++i)
    for (std::size_t k = 0; k < mdp.slots(); ++k) {
      double best = detail::q_value(mdp, u, i, k, 0);
      std::uint8_t arg = 0;
      for (int a = 1; a < kMdpActions; ++a) {
        if (!mdp.legal(i, k, a)) continue;
        double q = detail::q_value(mdp, u, i, k, a);
        if (q > best + 1e-12 * std::max(1.0, std::abs(best))) {
          best = q;
          arg = static_cast<std::uint8_t>(a);
        }
      }
      res.policy[i * mdp.slots() + k] = arg;
    }
  return res;
}

/// Sup-norm of T(V) - V for a value vector (a single independent Bellman sweep).
inline double bellman_residual(const MdpInstance& mdp, const std::vector<double>& v) {
  std::vector<double> u;
  detail::continuation(mdp, v, u);
  double diff = 0.0;
  for (std::size_t i = 0; i < mdp.space().size(); ++i)
    for (std::size_t k = 0; k < mdp.slots(); ++k) {
      double best = detail::q_value(mdp, u, i, k, 0);
      for (int a = 1; a < kMdpActions; ++a)
        if (mdp.legal(i, k, a)) best = std::max(best, detail::q_value(mdp, u, i, k, a));
      diff = std::max(diff, std::abs(best - v[i * mdp.slots() + k]));
    }
  return diff;
}

struct OccupancyReport {
  std::vector<double> time_covered;  // % of periods with >= 1 car at the location
  std::vector<double> drop_rate;     // % of periods the location starts or ends a served trip
  std::vector<double> start_pct;     // % of periods the location starts a served trip
};

struct EpisodeStep {
  DriverState state;  // at the start of the period
  std::optional<Request> request;
  int action = 0;
  bool served = false;
};

// Slot index of the pending request drawn with `coin`.
inline std::size_t draw_slot(const MdpInstance& mdp, double coin) {
  double acc = 0.0;
  const auto n = static_cast<std::size_t>(mdp.model().n());
  for (std::size_t k = 0; k < n * n; ++k) {
    acc += mdp.slot_probability(k);
    if (coin < acc) return k;
  }
  return mdp.has_idle_slot() ? n * n : n * n - 1;
}

/// Runs `periods` rounds of the tabulated policy from `start` and reports the
/// per-location activity percentages. The raw log is returned through `log`.
inline OccupancyReport simulate_optimal_episode(const MdpInstance& mdp, const std::vector<std::uint8_t>& policy,
                                                const DriverState& start, std::size_t periods, std::uint64_t seed,
                                                std::vector<EpisodeStep>* log = nullptr) {
  if (policy.size() != mdp.size()) throw InvalidArgument("policy does not cover every MDP state");
  const int n = mdp.model().n();
  std::vector<std::size_t> covered(static_cast<std::size_t>(n), 0), ends(covered), starts(covered);
  CounterRng rng(seed, 0);
  std::size_t config = mdp.space().rank(start);
  for (std::size_t t = 0; t < periods; ++t) {
    rng.seek(t);
    const DriverState x = mdp.space().unrank(config);
    for (Location u = 0; u < n; ++u) covered[u] += x.has_driver(u);
    const std::size_t slot = draw_slot(mdp, rng.uniform());
    const int action = policy[config * mdp.slots() + slot];
    const bool served = mdp.legal(config, slot, action);
    auto r = mdp.pending(slot);
    if (served) {
      ++starts[r->origin];
      ++ends[r->origin];
      if (r->dest != r->origin) ++ends[r->dest];
    }
    if (log) log->push_back({x, r, action, served});
    config = mdp.successor(config, slot, action);
  }
  OccupancyReport rep;
  const double scale = periods ? 100.0 / static_cast<double>(periods) : 0.0;
  for (Location u = 0; u < n; ++u) {
    rep.time_covered.push_back(covered[u] * scale);
    rep.drop_rate.push_back(ends[u] * scale);
    rep.start_pct.push_back(starts[u] * scale);
  }
  return rep;
}

struct ReturnEstimate {
  double mean = 0.0;
  double stderr_mean = 0.0;
};

/// Discounted return of a rule over `episodes` seeded episodes truncated once
/// discount^t < 1e-12. Episode e uses stream (seed, e); the request is the first
/// draw of each round, so different rules see the same request sequence.
template <typename Rule>
ReturnEstimate estimate_discounted_return(const MdpInstance& mdp, const DriverState& start, std::size_t episodes,
                                          std::uint64_t seed, Rule&& rule, unsigned threads = 1) {
  const auto horizon = static_cast<std::size_t>(std::ceil(std::log(1e-12) / std::log(mdp.discount())));
  std::vector<double> returns(episodes);
  const std::size_t start_config = mdp.space().rank(start);
  parallel_for(episodes, threads, [&](std::size_t e) {
    CounterRng rng(seed, e);
    std::size_t config = start_config;
    double total = 0.0, weight = 1.0;
    for (std::size_t t = 0; t < horizon; ++t) {
      rng.seek(t);
      const std::size_t slot = draw_slot(mdp, rng.uniform());
      const int action = rule(config, slot, rng);
      total += weight * mdp.reward(config, slot, action);
      config = mdp.successor(config, slot, action);
      weight *= mdp.discount();
    }
    returns[e] = total;
  });
  ReturnEstimate est;
  for (double r : returns) est.mean += r;
  est.mean /= static_cast<double>(episodes);
  double ss = 0.0;
  for (double r : returns) ss += (r - est.mean) * (r - est.mean);
  est.stderr_mean = episodes > 1 ? std::sqrt(ss / static_cast<double>(episodes - 1) / static_cast<double>(episodes)) : 0.0;
  return est;
}

/// MDP action a dispatch policy takes in (config, slot); NAdap draws its coin from `rng`.
inline int policy_action(const MdpInstance& mdp, const PolicySpec& policy, std::size_t config, std::size_t slot,
                         CounterRng& rng) {
  auto r = mdp.pending(slot);
  if (!r) return 0;
  const DriverState x = mdp.space().unrank(config);
  auto out = dispatch(policy, x, mdp.model(), *r, rng);
  if (!out.success) return 0;
  if (*out.chosen == r->origin) return 1;
  for (int a = 2; a < kMdpActions; ++a)
    if (mdp.candidate(r->origin, a) == out.chosen) return a;
  return 0;
}

}  // namespace ridemix
