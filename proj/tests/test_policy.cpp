#include <gtest/gtest.h>

#include "ridemix/policy.hpp"

using namespace ridemix;

TEST(PolicyText, RoundTrip) {
  for (std::string s : {"nadap:0.8", "rand:NESW", "rand:WSEN", "greedy", "greedy:sorted",
                        "nadap:1+strict", "greedy+strict"}) {
    auto p = parse_policy(s);
    EXPECT_EQ(parse_policy(p.to_string()), p) << s;
  }
  EXPECT_TRUE(parse_policy("rand+strict").self_trip_needs_room);
  EXPECT_EQ(parse_policy("rand").order, kClockwise);
}

TEST(PolicyText, Rejects) {
  EXPECT_THROW(parse_policy("nadap:0"), InvalidArgument);
  EXPECT_THROW(parse_policy("nadap:1.5"), InvalidArgument);
  EXPECT_THROW(parse_policy("nadap"), InvalidArgument);
  EXPECT_THROW(parse_policy("rand:NNSW"), InvalidArgument);
  EXPECT_THROW(parse_policy("greedy:fast"), InvalidArgument);
  EXPECT_THROW(parse_policy("random"), InvalidArgument);
}

TEST(DirectionOrders, AllTwentyFourDistinct) {
  auto all = all_direction_orders();
  ASSERT_EQ(all.size(), 24u);
  EXPECT_EQ(all.front(), kClockwise);
  for (std::size_t i = 1; i < all.size(); ++i) EXPECT_LT(all[i - 1], all[i]);
}

TEST(NAdap, ProbeFrequenciesMatchCoin) {
  // 3x3, one driver at the centre; a request at the top middle is served only
  // when the coin points South, which happens w.p. (1 - alpha)/4.
  Grid g(3, 3);
  auto model = uniform_request_model(g, 1.0 / 81);
  DriverState x({0, 0, 0, 0, 1, 0, 0, 0, 0}, 1);
  const double alpha = 0.8;
  CounterRng rng(7, 0);
  int hits = 0;
  const int trials = 200000;
  for (int k = 0; k < trials; ++k) hits += dispatch_nadap(x, model, {1, 6}, alpha, rng).success;
  const double freq = static_cast<double>(hits) / trials;
  EXPECT_NEAR(freq, 0.05, 4 * std::sqrt(0.05 * 0.95 / trials));
  EXPECT_DOUBLE_EQ(success_probability(PolicySpec::nadap(alpha), x, g, {1, 6}), 0.05);
}

TEST(NAdap, OffGridProbeLosesTheRequest) {
  Grid g(1, 2);
  auto model = uniform_request_model(g, 0.25);
  DriverState x({1, 0}, 1);
  // Origin 0 has only an East neighbour; N, S, W probes drop the request.
  EXPECT_DOUBLE_EQ(success_probability(PolicySpec::nadap(0.6), x, g, {0, 1}), 0.6);
  EXPECT_DOUBLE_EQ(success_probability(PolicySpec::nadap(0.6), x, g, {1, 1}), 0.1);
}

TEST(Rand, FollowsDirectionOrder) {
  Grid g(3, 3);
  DriverState x({0, 1, 0, 1, 0, 0, 0, 0, 0}, 1);
  EXPECT_EQ(rand_choice(x, g, 4, parse_order("NESW")), 1);
  EXPECT_EQ(rand_choice(x, g, 4, parse_order("WNES")), 3);
  EXPECT_EQ(rand_choice(x, g, 8, kClockwise), std::nullopt);
  DriverState y({0, 1, 0, 1, 1, 0, 0, 0, 0}, 1);
  EXPECT_EQ(rand_choice(y, g, 4, parse_order("WNES")), 4);
}

TEST(Greedy, DescendingCountWithClockwiseTies) {
  Grid g(3, 3);
  DriverState x({0, 1, 0, 2, 0, 2, 0, 0, 0}, 2);
  EXPECT_EQ(greedy_order(x, g, 4), (std::vector<Location>{4, 5, 3, 1, 7}));
  EXPECT_EQ(greedy_choice(x, g, 4), 5);
  DriverState y({0, 1, 0, 2, 1, 2, 0, 0, 0}, 2);
  EXPECT_EQ(greedy_choice(y, g, 4), 4);
  EXPECT_EQ(greedy_choice(y, g, 4, false), 5);
}

TEST(Dispatch, ChosenLocationDecidesWithoutFallback) {
  Grid g(1, 3);
  RequestModel model(g);
  model.set(1, 2, 0.5, 3.0);
  DriverState x({0, 1, 1}, 1);
  // Destination full: the origin's driver cannot go, and nobody else is tried.
  auto out = dispatch_rand(x, model, {1, 2}, kClockwise);
  EXPECT_EQ(out.chosen, 1);
  EXPECT_FALSE(out.success);
  DriverState y({0, 1, 0}, 1);
  out = dispatch_rand(y, model, {1, 2}, kClockwise);
  EXPECT_TRUE(out.success);
  EXPECT_DOUBLE_EQ(out.profit, 3.0);
}

TEST(SelfTrips, FreeByDefaultStrictOnRequest) {
  Grid g(2, 2);
  auto model = uniform_request_model(g, 1.0 / 16, 1.0);
  DriverState x({2, 0, 0, 0}, 2);  // all drivers on one full cell
  for (auto pol : {PolicySpec::greedy(), PolicySpec::rand(), PolicySpec::nadap(1.0)}) {
    EXPECT_DOUBLE_EQ(success_probability(pol, x, g, {0, 0}), 1.0) << pol.to_string();
    pol.self_trip_needs_room = true;
    EXPECT_DOUBLE_EQ(success_probability(pol, x, g, {0, 0}), 0.0) << pol.to_string();
  }
  EXPECT_TRUE(can_serve(x, 0, 0));
  EXPECT_FALSE(can_serve(x, 0, 0, true));
  EXPECT_FALSE(can_serve(x, 1, 1));
}

TEST(ExpectedProfit, HandComputed) {
  // 1x2, one driver at 0, c = 1, p = 1/4 everywhere, w = 1.
  Grid g(1, 2);
  auto model = uniform_request_model(g, 0.25, 1.0);
  DriverState x({1, 0}, 1);
  // Rand: origin 0 -> driver 0 serves (0,0),(0,1); origin 1 -> neighbour 0 serves (1,0),(1,1).
  EXPECT_DOUBLE_EQ(expected_step_profit(x, model, PolicySpec::rand()), 1.0);
  // NAdap(1): only requests from 0.
  EXPECT_DOUBLE_EQ(expected_step_profit(x, model, PolicySpec::nadap(1.0)), 0.5);
  auto strict = PolicySpec::nadap(1.0);
  strict.self_trip_needs_room = true;
  EXPECT_DOUBLE_EQ(expected_step_profit(x, model, strict), 0.25);
}
