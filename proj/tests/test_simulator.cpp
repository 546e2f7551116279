#include <gtest/gtest.h>

#include <sstream>

#include "ridemix/mixing.hpp"
#include "ridemix/simulator.hpp"

using namespace ridemix;

namespace {

SimConfig small_config(PolicySpec pol, std::int64_t rounds, std::int64_t runs) {
  SimConfig cfg;
  cfg.grid = Grid(2, 2);
  cfg.drivers = 2;
  cfg.capacity = 2;
  cfg.rounds = rounds;
  cfg.runs = runs;
  cfg.seed = 42;
  cfg.policy = pol;
  cfg.arrivals = uniform_request_model(cfg.grid, 1.0 / 16, 1.0);
  cfg.initial = adversarial_state(cfg.grid, 2, 2);
  return cfg;
}

}  // namespace

TEST(Simulator, TrackerMatchesDirectExpectation) {
  Grid g(2, 3);
  RequestModel model(g);
  for (Location u = 0; u < 6; ++u)
    for (Location v = 0; v < 6; ++v) model.set(u, v, (1.0 + (u * 5 + v) % 3) / 80.0, 1.0 + (u + v) % 4);
  StateSpace space(g, 4, 2);
  for (auto pol : {PolicySpec::nadap(0.7), PolicySpec::rand(parse_order("SWNE")), PolicySpec::greedy(),
                   PolicySpec::greedy(false)})
    for (bool strict : {false, true}) {
      pol.self_trip_needs_room = strict;
      for (const auto& x : space.states()) {
        detail::StepProfitTracker tracker(model, pol, x);
        ASSERT_NEAR(tracker.value(x), expected_step_profit(x, model, pol), 1e-14)
            << pol.to_string() << " " << x.to_string();
      }
    }
}

TEST(Simulator, TrackerFollowsMoves) {
  Grid g(2, 2);
  auto model = uniform_request_model(g, 1.0 / 16);
  auto pol = PolicySpec::greedy();
  DriverState x({2, 0, 0, 0}, 2);
  detail::StepProfitTracker tracker(model, pol, x);
  for (auto [a, b] : {std::pair{0, 1}, {0, 1}, {1, 3}, {1, 2}}) {
    auto y = apply_move(x, a, b);
    tracker.on_move(x, y, a, b);
    x = y;
    EXPECT_NEAR(tracker.value(x), expected_step_profit(x, model, pol), 1e-14);
  }
}

TEST(Simulator, ResultDoesNotDependOnThreads) {
  auto cfg = small_config(PolicySpec::nadap(0.8), 200, 600);
  cfg.threads = 1;
  auto a = run_ensemble(cfg);
  cfg.threads = 4;
  auto b = run_ensemble(cfg);
  EXPECT_EQ(a.series.w, b.series.w);
  EXPECT_EQ(a.series.stderr_w, b.series.stderr_w);
  EXPECT_EQ(a.series.obj_stderr, b.series.obj_stderr);
}

TEST(Simulator, ConditionalEstimatorTracksExactCurve) {
  auto pol = PolicySpec::nadap(0.8);
  auto cfg = small_config(pol, 80, 4000);
  cfg.threads = 4;
  auto sim = run_ensemble(cfg);
  const auto& model = std::get<RequestModel>(cfg.arrivals);
  StateSpace space(cfg.grid, 2, 2);
  auto P = build_transition(space, model, pol);
  auto st = stationary_distribution(P);
  auto exact = delta_curves_exact(P, st, model, pol, point_mass(space.size(), space.rank(cfg.initial)), 80);
  EXPECT_DOUBLE_EQ(sim.series.w[0], exact.series.w[0]);
  for (std::size_t t = 0; t < 80; ++t)
    EXPECT_NEAR(sim.series.w[t], exact.series.w[t], 5 * sim.series.stderr_w[t] + 1e-12) << t;
}

TEST(Simulator, RealizedEstimatorAgreesOnAverage) {
  auto cfg = small_config(PolicySpec::rand(), 400, 400);
  auto cond = run_ensemble(cfg);
  cfg.estimator = Estimator::Realized;
  auto real = run_ensemble(cfg);
  EXPECT_NEAR(cond.series.obj.back(), real.series.obj.back(),
              5 * (cond.series.obj_stderr + real.series.obj_stderr));
}

TEST(Simulator, StatesStayLegal) {
  auto cfg = small_config(PolicySpec::greedy(), 2000, 4);
  cfg.grid = Grid(3, 3);
  cfg.drivers = 5;
  cfg.arrivals = uniform_request_model(cfg.grid, 1.0 / 81);
  cfg.initial = adversarial_state(cfg.grid, 5, 2);
  cfg.check_states = true;
  cfg.keep_trace = true;
  auto res = run_ensemble(cfg);
  EXPECT_FALSE(res.trace.empty());
  for (const auto& s : res.trace) EXPECT_LT(s.round, 2000);
}

TEST(Simulator, ValidationErrors) {
  auto cfg = small_config(PolicySpec::rand(), 10, 1);
  cfg.initial = DriverState({1, 0, 0, 0}, 2);
  EXPECT_THROW(run_ensemble(cfg), InvalidArgument);
  cfg = small_config(PolicySpec::rand(), 0, 1);
  EXPECT_THROW(run_ensemble(cfg), InvalidArgument);
  cfg = small_config(PolicySpec::rand(), 10, 1);
  cfg.arrivals = ReplayTrace{{}, 10};
  EXPECT_THROW(run_ensemble(cfg), InvalidArgument);  // replay needs the realized estimator
}

TEST(Replay, SameRoundRequestsAreServedInOrder) {
  SimConfig cfg;
  cfg.grid = Grid(1, 3);
  cfg.drivers = 1;
  cfg.capacity = 1;
  cfg.rounds = 3;
  cfg.policy = PolicySpec::rand();
  cfg.estimator = Estimator::Realized;
  cfg.initial = DriverState({1, 0, 0}, 1);
  // Round 0: the first trip brings the driver to 1, where the second one finds it.
  cfg.arrivals = ReplayTrace{{{0, 0, 1, 1.0}, {0, 1, 2, 2.0}, {2, 0, 1, 5.0}}, 3};
  std::vector<TraceStep> trace;
  auto profit = run_replication(cfg, 0, &trace);
  EXPECT_EQ(profit, (std::vector<double>{3.0, 0.0, 0.0}));
  ASSERT_EQ(trace.size(), 3u);
  EXPECT_TRUE(trace[1].success);
  EXPECT_FALSE(trace[2].success);  // driver sits at 2; origin 0 and its neighbour 1 are empty
}

TEST(Replay, CsvRoundTrip) {
  ReplayTrace t{{{0, 1, 2, 1.5}, {0, 2, 2, 0.0}, {7, 0, 1, 3.0}}, 10};
  std::stringstream s;
  save_replay(t, s);
  auto back = load_replay(s);
  EXPECT_EQ(back.entries, t.entries);
  EXPECT_EQ(back.rounds, 10);
  std::stringstream bad("round,origin,dest\n");
  EXPECT_THROW(load_replay(bad), SchemaError);
  EXPECT_THROW((ReplayTrace{{{3, 0, 0, 1.0}, {1, 0, 0, 1.0}}, 5}.validate(Grid(1, 1))), InvalidArgument);
}

TEST(ErrorCurves, TargetsAndRunningAverage) {
  ErrorSeries s;
  s.w = {1.0, 3.0, 2.0, 2.0};
  error_curves(s, Target::tail(0.5));
  EXPECT_DOUBLE_EQ(s.target, 2.0);
  EXPECT_EQ(s.obj, (std::vector<double>{1.0, 2.0, 2.0, 2.0}));
  EXPECT_EQ(s.delta, (std::vector<double>{1.0, 1.0, 0.0, 0.0}));
  error_curves(s, Target::exact(0.0));
  EXPECT_EQ(s.delta_hat, s.obj);
  EXPECT_THROW(error_curves(s, Target::tail(0.0)), InvalidArgument);
}
