#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ridemix/error.hpp"
#include "ridemix/parallel.hpp"
#include "ridemix/series.hpp"
#include "ridemix/stationary.hpp"

namespace ridemix {

inline double tv_distance(const std::vector<double>& mu, const std::vector<double>& nu) {
  if (mu.size() != nu.size()) throw InvalidArgument("tv_distance: length mismatch");
  return 0.5 * l1_distance(mu, nu);
}

// Exact curves computed in double bottom out near 1e-15; comparisons against
// analytic bounds and log-linear fits ignore differences below this.
inline constexpr double kNumericalFloor = 1e-12;

struct Envelope {
  double C = 0.0;
  double beta = 0.0;
};

/// Constants of the uniform special case (p_r = n^-2, c <= 2): d(t) <= C beta^t.
inline Envelope coupling_envelope(int n, int m) {
  if (n < 1 || m < 1) throw InvalidArgument("n and m must be positive");
  const double nn = static_cast<double>(n) * n;
  return {2.0 * m, std::exp(-1.0 / nn)};
}

// Upper bound on |W(t) - W_inf| in the uniform special case.
inline double per_round_error_bound(int n, int m, double sum_w, double t) {
  const double nn = static_cast<double>(n) * n;
  return 4.0 * m * sum_w / (nn * std::exp(t / nn));
}

// Upper bound on |OBJ(T) - W_inf|.
inline double average_error_bound(int m, double sum_w, double T) { return 4.0 * m * sum_w / T; }

// p_r = n^-2 on every ordered pair and c <= 2.
inline bool is_uniform_special_case(const RequestModel& model, int capacity) {
  const double nn = static_cast<double>(model.n()) * model.n();
  if (capacity > 2) return false;
  for (Location u = 0; u < model.n(); ++u)
    for (Location v = 0; v < model.n(); ++v)
      if (std::abs(model.p(u, v) - 1.0 / nn) > 1e-15) return false;
  return true;
}

struct MixingReport {
  std::vector<double> d_curve;  // d(t), t = 0..t_max
  std::map<double, std::size_t> tau;
  std::optional<Envelope> envelope;
  bool non_increasing = true;   // within 1e-10
  bool envelope_respected = true;  // up to kNumericalFloor
  std::size_t start_states = 0;
  std::string caveat;           // set when d(t) is a max over a sample of starts
};

struct MixingOptions {
  unsigned threads = 1;
  std::size_t exact_limit = 2000;
  std::vector<std::size_t> start_sample;  // ranks used above exact_limit
  std::optional<Envelope> envelope;
};

/// d(t) = max_x ||P^t(x,.) - pi||_TV by propagating each start distribution;
/// tau(eps) = min{t : d(t') <= eps for all t' in [t, t_max]}.
inline MixingReport mixing_analysis(const TransitionMatrix& P, const std::vector<double>& pi,
                                    std::vector<double> eps_list, std::size_t t_max,
                                    const MixingOptions& opt = {}) {
  if (t_max < 1) throw InvalidArgument("t_max must be at least 1");
  if (eps_list.empty()) throw InvalidArgument("need at least one epsilon");
  const std::size_t N = P.size();
  if (pi.size() != N) throw InvalidArgument("pi length differs from the chain");

  MixingReport report;
  std::vector<std::size_t> starts;
  if (N <= opt.exact_limit) {
    starts.resize(N);
    for (std::size_t i = 0; i < N; ++i) starts[i] = i;
  } else {
    if (opt.start_sample.empty())
      throw SizeLimit("chain has " + std::to_string(N) + " states; supply a start-state sample");
    starts = opt.start_sample;
    for (auto s : starts)
      if (s >= N) throw InvalidArgument("start state rank out of range");
    report.caveat = "d(t) is a maximum over " + std::to_string(starts.size()) +
                    " sampled start states, not all of the state space";
  }
  report.start_states = starts.size();

  // Each worker owns a max-curve; max is exact, so the reduction is thread-count independent.
  const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(starts.size())));
  std::vector<std::vector<double>> partial(threads, std::vector<double>(t_max + 1, 0.0));
  const std::size_t chunk = (starts.size() + threads - 1) / threads;
  parallel_for(threads, threads, [&](std::size_t w) {
    std::vector<double> mu, next;
    auto& curve = partial[w];
    for (std::size_t k = w * chunk; k < std::min(starts.size(), (w + 1) * chunk); ++k) {
      mu.assign(N, 0.0);
      mu[starts[k]] = 1.0;
      for (std::size_t t = 0; t <= t_max; ++t) {
        curve[t] = std::max(curve[t], tv_distance(mu, pi));
        if (t < t_max) {
          P.left_multiply(mu, next);
          mu.swap(next);
        }
      }
    }
  });
  report.d_curve.assign(t_max + 1, 0.0);
  for (const auto& c : partial)
    for (std::size_t t = 0; t <= t_max; ++t) report.d_curve[t] = std::max(report.d_curve[t], c[t]);

  for (std::size_t t = 1; t <= t_max; ++t)
    if (report.d_curve[t] > report.d_curve[t - 1] + 1e-10) report.non_increasing = false;

  std::sort(eps_list.begin(), eps_list.end());
  if (report.d_curve[t_max] > eps_list.front())
    throw HorizonTooShort("d(t_max) = " + fmt_real(report.d_curve[t_max]) + " exceeds epsilon " +
                              fmt_real(eps_list.front()) + "; increase the horizon",
                          report.d_curve);
  // Suffix maxima give the definition of tau directly.
  std::vector<double> suffix(report.d_curve);
  for (std::size_t t = t_max; t-- > 0;) suffix[t] = std::max(suffix[t], suffix[t + 1]);
  for (double eps : eps_list) {
    std::size_t t = 0;
    while (suffix[t] > eps) ++t;
    report.tau[eps] = t;
  }

  report.envelope = opt.envelope;
  if (report.envelope) {
    for (std::size_t t = 0; t <= t_max; ++t)
      if (report.d_curve[t] > report.envelope->C * std::pow(report.envelope->beta, static_cast<double>(t)) + kNumericalFloor)
        report.envelope_respected = false;
  }
  return report;
}

/// Sum over x of dist(x) * expected_step_profit(x).
inline double expected_profit_under(const StateSpace& space, const std::vector<double>& dist,
                                    const RequestModel& model, const PolicySpec& policy) {
  double total = 0.0;
  for (std::size_t i = 0; i < space.size(); ++i)
    if (dist[i] != 0.0) total += dist[i] * expected_step_profit(space.unrank(i), model, policy);
  return total;
}

inline std::vector<double> step_profit_vector(const StateSpace& space, const RequestModel& model,
                                              const PolicySpec& policy, unsigned threads = 1) {
  std::vector<double> f(space.size());
  parallel_for(space.size(), threads,
               [&](std::size_t i) { f[i] = expected_step_profit(space.unrank(i), model, policy); });
  return f;
}

/// Long-run per-round profit. NAdap uses the gamma occupancy probabilities,
/// sum_r p_r w_r (alpha gamma(u,v) + (1-alpha)/4 sum_{k in N(u)} gamma(k,v)), where a
/// self-trip term gamma(k,k) becomes Pr[x_k >= 1] unless self-trips need room;
/// Rand and Greedy use the pi-weighted per-state expectation.
inline double limiting_objective(const StationaryResult& st, const RequestModel& model,
                                 const PolicySpec& policy) {
  if (!(st.policy == policy))
    throw InvalidArgument("stationary result was computed for " + st.policy.to_string() +
                          ", not " + policy.to_string());
  if (!st.space) throw InvalidArgument("stationary result carries no state space");
  if (!(st.space->grid() == model.grid())) throw InvalidArgument("model grid differs from the chain");
  if (policy.kind != PolicyKind::NAdap) return expected_profit_under(*st.space, st.pi, model, policy);

  // A self-trip from k succeeds whenever k holds a driver unless the strict rule applies.
  std::vector<double> occupied(static_cast<std::size_t>(model.n()), 0.0);
  for (std::size_t i = 0; i < st.space->size(); ++i) {
    const auto x = st.space->unrank(i);
    for (Location k = 0; k < model.n(); ++k)
      if (x.has_driver(k)) occupied[k] += st.pi[i];
  }
  auto served = [&](Location k, Location v) {
    return k == v && !policy.self_trip_needs_room ? occupied[k] : st.gamma(k, v);
  };
  const double side = (1.0 - policy.alpha) / 4.0;
  double total = 0.0;
  for (Location u = 0; u < model.n(); ++u)
    for (Location v = 0; v < model.n(); ++v) {
      const double pw = model.p(u, v) * model.w(u, v);
      if (pw == 0.0) continue;
      double s = policy.alpha * served(u, v);
      for (Location k : model.grid().neighbors(u)) s += side * served(k, v);
      total += pw * s;
    }
  return total;
}

struct ExactDeltaOptions {
  bool track_gamma = false;  // record max_{u,v} |gamma_t(u,v) - gamma(u,v)| per round
  unsigned threads = 1;
};

struct ExactDeltaResult {
  ErrorSeries series;
  std::vector<double> gamma_gap;
  std::vector<double> eta_gap;
};

/// Exact W(t), OBJ(T) and their errors by propagating `start` through P for `rounds` rounds.
inline ExactDeltaResult delta_curves_exact(const TransitionMatrix& P, const StationaryResult& st,
                                           const RequestModel& model, const PolicySpec& policy,
                                           const std::vector<double>& start, std::size_t rounds,
                                           const ExactDeltaOptions& opt = {}) {
  if (!P.space()) throw InvalidArgument("chain carries no state space");
  if (start.size() != P.size()) throw InvalidArgument("start distribution length differs from the chain");
  if (rounds < 1) throw InvalidArgument("need at least one round");
  const StateSpace& space = *P.space();
  const auto f = step_profit_vector(space, model, policy, opt.threads);
  ExactDeltaResult out;
  auto& s = out.series;
  s.target = limiting_objective(st, model, policy);
  s.runs = 0;
  std::vector<double> mu = start, next;
  double running = 0.0;
  PairTable gamma, eta;
  for (std::size_t t = 0; t < rounds; ++t) {
    double w = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) w += mu[i] * f[i];
    s.w.push_back(w);
    s.stderr_w.push_back(0.0);
    running += w;
    s.obj.push_back(running / static_cast<double>(t + 1));
    s.delta.push_back(std::abs(w - s.target));
    s.delta_hat.push_back(std::abs(s.obj.back() - s.target));
    if (opt.track_gamma) {
      occupancy_tables(space, mu, gamma, eta);
      double gg = 0.0, ge = 0.0;
      for (std::size_t k = 0; k < gamma.values.size(); ++k) {
        gg = std::max(gg, std::abs(gamma.values[k] - st.gamma.values[k]));
        ge = std::max(ge, std::abs(eta.values[k] - st.eta.values[k]));
      }
      out.gamma_gap.push_back(gg);
      out.eta_gap.push_back(ge);
    }
    P.left_multiply(mu, next);
    mu.swap(next);
  }
  return out;
}

inline std::vector<double> point_mass(std::size_t size, std::size_t at) {
  std::vector<double> mu(size, 0.0);
  mu.at(at) = 1.0;
  return mu;
}

}  // namespace ridemix
