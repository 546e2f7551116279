#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ridemix/error.hpp"
#include "ridemix/fit.hpp"
#include "ridemix/parallel.hpp"
#include "ridemix/policy.hpp"
#include "ridemix/replay.hpp"
#include "ridemix/rng.hpp"
#include "ridemix/series.hpp"

namespace ridemix {

enum class Estimator { Conditional, Realized };

struct SimConfig {
  Grid grid{1, 1};
  int drivers = 1;
  int capacity = 1;
  std::int64_t rounds = 1;
  std::int64_t runs = 1;
  std::uint64_t seed = 0;
  PolicySpec policy;
  std::variant<RequestModel, ReplayTrace> arrivals = RequestModel(Grid(1, 1));
  DriverState initial;
  Estimator estimator = Estimator::Conditional;
  unsigned threads = 1;
  bool check_states = false;  // verify conservation and capacity after every round
  bool keep_trace = false;    // record run 0 round by round
};

struct TraceStep {
  std::int64_t round;
  Request request;
  std::optional<Location> chosen;
  bool success;
  double profit;
};

struct EnsembleResult {
  ErrorSeries series;
  std::vector<TraceStep> trace;  // run 0 only, when requested
};

namespace detail {

// Expected step profit maintained incrementally: open(u) = sum over destinations
// with room of p(u,v) w(u,v); the profit is sum_u open(u) * Pr[served from near u].
class StepProfitTracker {
 public:
  StepProfitTracker(const RequestModel& model, const PolicySpec& policy, const DriverState& x)
      : model_(model), policy_(policy), n_(model.n()), open_(static_cast<std::size_t>(n_), 0.0) {
    for (Location u = 0; u < n_; ++u)
      for (Location v = 0; v < n_; ++v)
        if (x.has_room(v)) open_[u] += model.p(u, v) * model.w(u, v);
  }

  void on_move(const DriverState& before, const DriverState& after, Location from, Location to) {
    for (Location z : {from, to}) {
      const bool was = before.has_room(z), now = after.has_room(z);
      if (was == now) continue;
      const double sign = now ? 1.0 : -1.0;
      for (Location u = 0; u < n_; ++u) open_[u] += sign * model_.p(u, z) * model_.w(u, z);
    }
  }

  double value(const DriverState& x) const {
    double total = 0.0;
    for (Location u = 0; u < n_; ++u)
      if (open_[u] != 0.0) total += open_[u] * driver_found(x, u);
    if (policy_.self_trip_needs_room) return total;
    // Full destinations still accept the driver that is already there.
    for (Location v = 0; v < n_; ++v) {
      if (x.has_room(v)) continue;
      for (Location u : model_.grid().closed_neighborhood(v)) {
        const double pw = model_.p(u, v) * model_.w(u, v);
        if (pw != 0.0) total += pw * chosen_probability(x, u, v);
      }
    }
    return total;
  }

 private:
  // Pr[the policy picks a location holding a driver] for a request from u.
  double driver_found(const DriverState& x, Location u) const {
    switch (policy_.kind) {
      case PolicyKind::NAdap: {
        double s = x.has_driver(u) ? policy_.alpha : 0.0;
        for (Location k : model_.grid().neighbors(u))
          if (x.has_driver(k)) s += (1.0 - policy_.alpha) / 4.0;
        return s;
      }
      case PolicyKind::Rand: return rand_choice(x, model_.grid(), u, policy_.order) ? 1.0 : 0.0;
      case PolicyKind::Greedy: return greedy_choice(x, model_.grid(), u, policy_.greedy_origin_first) ? 1.0 : 0.0;
    }
    return 0.0;
  }

  // Pr[the policy picks v] for a request from u, with v holding a driver.
  double chosen_probability(const DriverState& x, Location u, Location v) const {
    switch (policy_.kind) {
      case PolicyKind::NAdap: return u == v ? policy_.alpha : (1.0 - policy_.alpha) / 4.0;
      case PolicyKind::Rand: return rand_choice(x, model_.grid(), u, policy_.order) == v ? 1.0 : 0.0;
      case PolicyKind::Greedy:
        return greedy_choice(x, model_.grid(), u, policy_.greedy_origin_first) == v ? 1.0 : 0.0;
    }
    return 0.0;
  }

  const RequestModel& model_;
  PolicySpec policy_;
  int n_;
  std::vector<double> open_;
};

// Inverse-CDF sampler over the n^2 request types plus the no-request outcome.
class RequestSampler {
 public:
  explicit RequestSampler(const RequestModel& model) : n_(model.n()) {
    double acc = 0.0;
    for (Location u = 0; u < n_; ++u)
      for (Location v = 0; v < n_; ++v) {
        acc += model.p(u, v);
        cdf_.push_back(acc);
      }
  }
  std::optional<Request> sample(double coin) const {
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), coin);
    if (it == cdf_.end()) return std::nullopt;
    auto k = static_cast<int>(it - cdf_.begin());
    // Zero-probability types share their predecessor's cdf value and are never hit.
    return Request{k / n_, k % n_};
  }

 private:
  int n_;
  std::vector<double> cdf_;
};

inline void check_legal(const DriverState& x, int drivers) {
  if (x.drivers() != drivers) throw Error("driver conservation violated: " + x.to_string());
  for (int v : x.counts())
    if (v < 0 || v > x.capacity()) throw Error("capacity violated: " + x.to_string());
}

}  // namespace detail

inline void validate_config(const SimConfig& cfg) {
  if (cfg.rounds < 1 || cfg.runs < 1) throw InvalidArgument("rounds and runs must be at least 1");
  if (cfg.initial.size() != cfg.grid.size() || cfg.initial.capacity() != cfg.capacity ||
      cfg.initial.drivers() != cfg.drivers)
    throw InvalidArgument("initial state " + cfg.initial.to_string() + " is not in the state space");
  if (const auto* model = std::get_if<RequestModel>(&cfg.arrivals)) {
    if (!(model->grid() == cfg.grid)) throw InvalidArgument("request model grid differs");
    model->validate(1e-12);
  } else {
    const auto& trace = std::get<ReplayTrace>(cfg.arrivals);
    trace.validate(cfg.grid);
    if (cfg.estimator == Estimator::Conditional)
      throw InvalidArgument("replay arrivals have no known p; use the realized estimator");
  }
}

/// Per-round profit of one replication (Conditional: expected profit of the
/// pre-move state; Realized: the profit actually earned).
inline std::vector<double> run_replication(const SimConfig& cfg, std::uint64_t run,
                                           std::vector<TraceStep>* trace = nullptr) {
  CounterRng rng(cfg.seed, run);
  DriverState x = cfg.initial;
  std::vector<double> profit(static_cast<std::size_t>(cfg.rounds), 0.0);

  if (const auto* model = std::get_if<RequestModel>(&cfg.arrivals)) {
    detail::RequestSampler sampler(*model);
    std::optional<detail::StepProfitTracker> tracker;
    if (cfg.estimator == Estimator::Conditional) tracker.emplace(*model, cfg.policy, x);
    for (std::int64_t t = 0; t < cfg.rounds; ++t) {
      rng.seek(static_cast<std::uint64_t>(t));
      auto r = sampler.sample(rng.uniform());
      DispatchOutcome out;
      if (r) out = dispatch(cfg.policy, x, *model, *r, rng);
      profit[t] = tracker ? tracker->value(x) : out.profit;
      if (trace && r) trace->push_back({t, *r, out.chosen, out.success, out.profit});
      if (out.success && *out.chosen != r->dest) {
        DriverState y = apply_move(x, *out.chosen, r->dest);
        if (tracker) tracker->on_move(x, y, *out.chosen, r->dest);
        x = std::move(y);
      }
      if (cfg.check_states) detail::check_legal(x, cfg.drivers);
    }
    return profit;
  }

  // Replay: same-round arrivals are served sequentially, each seeing the state
  // left by the previous one. Weights come from the trace.
  const auto& replay = std::get<ReplayTrace>(cfg.arrivals);
  RequestModel weights(cfg.grid);
  std::size_t next = 0;
  for (std::int64_t t = 0; t < cfg.rounds; ++t) {
    rng.seek(static_cast<std::uint64_t>(t));
    while (next < replay.entries.size() && replay.entries[next].round < t) ++next;
    while (next < replay.entries.size() && replay.entries[next].round == t) {
      const auto& e = replay.entries[next++];
      weights.set(e.origin, e.dest, 0.0, e.weight);
      Request r{e.origin, e.dest};
      auto out = dispatch(cfg.policy, x, weights, r, rng);
      profit[t] += out.profit;
      if (trace) trace->push_back({t, r, out.chosen, out.success, out.profit});
      if (out.success && *out.chosen != r.dest) x = apply_move(x, *out.chosen, r.dest);
      if (cfg.check_states) detail::check_legal(x, cfg.drivers);
    }
  }
  return profit;
}

struct Target {
  enum class Kind { Value, TailAverage } kind = Kind::TailAverage;
  double value = 0.0;
  double tail_fraction = 1.0;  // fraction of final rounds averaged for TailAverage

  static Target exact(double v) { return {Kind::Value, v, 1.0}; }
  static Target tail(double fraction = 1.0) { return {Kind::TailAverage, 0.0, fraction}; }
};

/// Fills target, delta and delta_hat of a series whose w and obj are set.
inline void error_curves(ErrorSeries& s, const Target& target) {
  if (s.w.empty()) throw InvalidArgument("empty series");
  if (target.kind == Target::Kind::Value) {
    if (!std::isfinite(target.value)) throw InvalidArgument("target must be finite");
    s.target = target.value;
  } else {
    if (!(target.tail_fraction > 0.0 && target.tail_fraction <= 1.0))
      throw InvalidArgument("tail fraction must lie in (0, 1]");
    auto count = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(target.tail_fraction * static_cast<double>(s.w.size()))));
    double sum = 0.0;
    for (std::size_t t = s.w.size() - count; t < s.w.size(); ++t) sum += s.w[t];
    s.target = sum / static_cast<double>(count);
  }
  if (s.obj.size() != s.w.size()) {
    s.obj.clear();
    double running = 0.0;
    for (std::size_t t = 0; t < s.w.size(); ++t) {
      running += s.w[t];
      s.obj.push_back(running / static_cast<double>(t + 1));
    }
  }
  s.delta.resize(s.w.size());
  s.delta_hat.resize(s.w.size());
  for (std::size_t t = 0; t < s.w.size(); ++t) {
    s.delta[t] = std::abs(s.w[t] - s.target);
    s.delta_hat[t] = std::abs(s.obj[t] - s.target);
  }
}

/// Runs `cfg.runs` independent replications and aggregates per-round means and
/// standard errors. Replications are reduced in run order in fixed-size batches,
/// so the result is bit-identical for any thread count.
inline EnsembleResult run_ensemble(const SimConfig& cfg, const Target& target = Target::tail()) {
  validate_config(cfg);
  const auto T = static_cast<std::size_t>(cfg.rounds);
  const auto R = static_cast<std::size_t>(cfg.runs);
  EnsembleResult result;
  std::vector<double> mean(T, 0.0), m2(T, 0.0);
  double obj_mean = 0.0, obj_m2 = 0.0;
  constexpr std::size_t kBatch = 256;
  std::vector<std::vector<double>> batch;
  std::size_t seen = 0;
  for (std::size_t lo = 0; lo < R; lo += kBatch) {
    const std::size_t hi = std::min(R, lo + kBatch);
    batch.assign(hi - lo, {});
    parallel_for(hi - lo, cfg.threads, [&](std::size_t k) {
      const std::size_t run = lo + k;
      batch[k] = run_replication(cfg, run, (cfg.keep_trace && run == 0) ? &result.trace : nullptr);
    });
    for (const auto& profits : batch) {
      ++seen;
      double avg = 0.0;
      for (double v : profits) avg += v;
      avg /= static_cast<double>(T);
      const double da = avg - obj_mean;
      obj_mean += da / static_cast<double>(seen);
      obj_m2 += da * (avg - obj_mean);
      for (std::size_t t = 0; t < T; ++t) {
        const double d = profits[t] - mean[t];
        mean[t] += d / static_cast<double>(seen);
        m2[t] += d * (profits[t] - mean[t]);
      }
    }
  }
  auto& s = result.series;
  s.runs = R;
  s.w = mean;
  s.stderr_w.resize(T);
  for (std::size_t t = 0; t < T; ++t)
    s.stderr_w[t] = R > 1 ? std::sqrt(m2[t] / static_cast<double>(R - 1)) / std::sqrt(static_cast<double>(R)) : 0.0;
  s.obj_stderr = R > 1 ? std::sqrt(obj_m2 / static_cast<double>(R - 1)) / std::sqrt(static_cast<double>(R)) : 0.0;
  error_curves(s, target);
  return result;
}

}  // namespace ridemix
