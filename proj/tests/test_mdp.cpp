#include <gtest/gtest.h>

#include "oracle.hpp"

using namespace ridemix;

using oracle::enumerate_best;
using oracle::evaluate;

TEST(Mdp, ValueIterationMatchesPolicyEnumeration) {
  Grid g(1, 2);
  for (double p : {0.25, 0.125}) {
    RequestModel model(g);
    model.set(0, 1, p, 1.0);
    model.set(1, 0, p, 3.0);
    model.set(0, 0, p, 0.5);
    model.set(1, 1, p, 0.0);
    for (auto [m, c] : {std::pair{1, 1}, {1, 2}}) {
      MdpInstance mdp(model, m, c, 0.9);
      auto vi = value_iteration(mdp, 1e-12);
      auto best = enumerate_best(mdp);
      auto greedy = evaluate(mdp, std::vector<int>(vi.policy.begin(), vi.policy.end()));
      for (std::size_t s = 0; s < mdp.size(); ++s) {
        EXPECT_NEAR(vi.value[s], best[s], 1e-9) << "p=" << p << " s=" << s;
        EXPECT_NEAR(greedy[s], best[s], 1e-9);
      }
    }
  }
}

TEST(Mdp, StructureAndLegality) {
  Grid g(1, 2);
  auto model = uniform_request_model(g, 0.125, 1.0);
  MdpInstance mdp(model, 1, 1);
  EXPECT_TRUE(mdp.has_idle_slot());
  EXPECT_DOUBLE_EQ(mdp.idle_mass(), 0.5);
  EXPECT_EQ(mdp.slots(), 5u);
  EXPECT_EQ(mdp.size(), 10u);
  const auto at0 = mdp.space().rank(DriverState({1, 0}, 1));
  const auto at1 = mdp.space().rank(DriverState({0, 1}, 1));
  // Request (0,1): serve from origin (action 1) moves the driver; East neighbour is empty.
  EXPECT_TRUE(mdp.legal(at0, 1, 1));
  EXPECT_EQ(mdp.successor(at0, 1, 1), at1);
  EXPECT_FALSE(mdp.legal(at0, 1, 3));
  // Request (1,0) from the empty origin: the West neighbour serves.
  EXPECT_TRUE(mdp.legal(at0, 2, 5));
  EXPECT_FALSE(mdp.legal(at0, 4, 1));  // idle slot
  EXPECT_EQ(mdp.successor(at0, 1, 0), at0);
  EXPECT_DOUBLE_EQ(mdp.reward(at0, 1, 2), 0.0);  // North is off-grid
}

TEST(Mdp, SelfTripRuleControlsLegality) {
  Grid g(1, 2);
  auto model = uniform_request_model(g, 0.25, 1.0);
  MdpInstance loose(model, 1, 1), strict(model, 1, 1, 0.9, 100'000, true);
  const auto at0 = loose.space().rank(DriverState({1, 0}, 1));
  EXPECT_TRUE(loose.legal(at0, 0, 1));
  EXPECT_FALSE(strict.legal(at0, 0, 1));
}

TEST(Mdp, ZeroWeightInstanceRejectsEverywhere) {
  Grid g(2, 2);
  auto model = uniform_request_model(g, 1.0 / 16, 0.0);
  MdpInstance mdp(model, 2, 2);
  auto vi = value_iteration(mdp, 1e-10);
  for (double v : vi.value) EXPECT_EQ(v, 0.0);
  for (auto a : vi.policy) EXPECT_EQ(a, 0);
}

TEST(Mdp, SelfTripsFromTheOriginAreNeverWorthServing) {
  // Manhattan weights: a self-trip earns 0 and, served at the origin, changes nothing.
  Grid g(2, 2);
  auto model = uniform_request_model(g, 1.0 / 16);
  MdpInstance mdp(model, 2, 2);
  auto vi = value_iteration(mdp, 1e-10);
  for (std::size_t i = 0; i < mdp.space().size(); ++i)
    for (Location u = 0; u < 4; ++u) EXPECT_NE(vi.policy[i * mdp.slots() + u * 4 + u], 1);
  EXPECT_LE(bellman_residual(mdp, vi.value), 1e-9);
}

TEST(Mdp, Limits) {
  Grid g(3, 3);
  auto model = uniform_request_model(g, 1.0 / 81);
  EXPECT_THROW(MdpInstance(model, 4, 2, 0.9, 1000), SizeLimit);
  EXPECT_THROW(MdpInstance(model, 1, 1, 1.0), InvalidArgument);
  MdpInstance mdp(model, 2, 1);
  EXPECT_THROW(value_iteration(mdp, 1e-12, 1, 3), IterationLimit);
}

TEST(Mdp, ThreadCountDoesNotChangeValues) {
  Grid g(2, 2);
  auto model = uniform_request_model(g, 1.0 / 20, 1.0);
  MdpInstance mdp(model, 3, 2);
  auto a = value_iteration(mdp, 1e-10, 1);
  auto b = value_iteration(mdp, 1e-10, 4);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.policy, b.policy);
}

TEST(Occupancy, RejectEverythingKeepsTheStart) {
  Grid g(2, 2);
  auto model = uniform_request_model(g, 1.0 / 16, 1.0);
  MdpInstance mdp(model, 1, 1);
  std::vector<std::uint8_t> reject(mdp.size(), 0);
  auto rep = simulate_optimal_episode(mdp, reject, DriverState({0, 0, 1, 0}, 1), 100, 3);
  EXPECT_EQ(rep.time_covered, (std::vector<double>{0, 0, 100, 0}));
  EXPECT_EQ(rep.drop_rate, (std::vector<double>{0, 0, 0, 0}));
}

TEST(Occupancy, LogReplaysToTheSameReport) {
  Grid g(2, 2);
  auto model = uniform_request_model(g, 1.0 / 16, 1.0);
  MdpInstance mdp(model, 2, 1);
  auto vi = value_iteration(mdp, 1e-10);
  std::vector<EpisodeStep> log;
  const auto start = DriverState({1, 1, 0, 0}, 1);
  auto rep = simulate_optimal_episode(mdp, vi.policy, start, 500, 11, &log);
  ASSERT_EQ(log.size(), 500u);
  std::vector<double> covered(4, 0), ends(4, 0), starts(4, 0);
  for (std::size_t t = 0; t < log.size(); ++t) {
    const auto& s = log[t];
    for (Location u = 0; u < 4; ++u) covered[u] += s.state.has_driver(u);
    if (s.served) {
      ++starts[s.request->origin];
      ++ends[s.request->origin];
      if (s.request->dest != s.request->origin) ++ends[s.request->dest];
    }
    if (t + 1 < log.size()) {
      const auto cfg = mdp.space().rank(s.state);
      const std::size_t slot = s.request ? static_cast<std::size_t>(s.request->origin * 4 + s.request->dest) : 16;
      EXPECT_EQ(mdp.space().unrank(mdp.successor(cfg, slot, s.action)), log[t + 1].state);
    }
  }
  for (Location u = 0; u < 4; ++u) {
    EXPECT_DOUBLE_EQ(rep.time_covered[u], covered[u] / 5.0);
    EXPECT_DOUBLE_EQ(rep.drop_rate[u], ends[u] / 5.0);
    EXPECT_DOUBLE_EQ(rep.start_pct[u], starts[u] / 5.0);
  }
}

TEST(Returns, OptimalPolicyDominatesHeuristics) {
  Grid g(2, 2);
  auto model = uniform_request_model(g, 1.0 / 16);
  MdpInstance mdp(model, 2, 2);
  auto vi = value_iteration(mdp, 1e-10);
  const auto start = adversarial_state(g, 2, 2);
  auto optimal = estimate_discounted_return(mdp, start, 1000, 5, [&](std::size_t i, std::size_t k, CounterRng&) {
    return static_cast<int>(vi.policy[i * mdp.slots() + k]);
  });
  for (auto pol : {PolicySpec::nadap(0.8), PolicySpec::rand(), PolicySpec::greedy()}) {
    auto other = estimate_discounted_return(mdp, start, 1000, 5, [&](std::size_t i, std::size_t k, CounterRng& rng) {
      return policy_action(mdp, pol, i, k, rng);
    });
    EXPECT_GE(optimal.mean, other.mean) << pol.to_string();
  }
}
