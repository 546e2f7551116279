#include <gtest/gtest.h>

#include "ridemix/stationary.hpp"

using namespace ridemix;

TEST(Stationary, UniformArrivalsGiveUniformPi) {
  Grid g(2, 2);
  StateSpace space(g, 2, 2);
  auto model = uniform_request_model(g, 1.0 / 16);
  auto st = stationary_distribution(build_transition(space, model, PolicySpec::nadap(1.0)));
  ASSERT_EQ(st.pi.size(), 10u);
  for (double v : st.pi) EXPECT_NEAR(v, 0.1, 1e-12);
  // gamma(u,v) = m / (n + m - 1) off the diagonal; gamma(u,u) = Pr[x_u = 1].
  for (Location u = 0; u < 4; ++u)
    for (Location v = 0; v < 4; ++v) EXPECT_NEAR(st.gamma(u, v), u == v ? 0.3 : 0.4, 1e-12);
  EXPECT_LT(st.residual, 1e-13);
}

TEST(Stationary, OccupancyTablesByHand) {
  // 1x3, c = 1, m = 1, point mass on the driver at 0.
  Grid g(1, 3);
  StateSpace space(g, 1, 1);
  std::vector<double> dist(space.size(), 0.0);
  dist[space.rank(DriverState({1, 0, 0}, 1))] = 1.0;
  PairTable gamma, eta;
  occupancy_tables(space, dist, gamma, eta);
  EXPECT_EQ(gamma(0, 1), 1.0);
  EXPECT_EQ(gamma(0, 0), 0.0);  // location 0 is full
  EXPECT_EQ(gamma(1, 2), 0.0);
  EXPECT_EQ(eta(1, 2), 1.0);  // 0 is in the closed neighbourhood of 1
  EXPECT_EQ(eta(2, 1), 0.0);
}

TEST(Stationary, PowerIterationAgreesWithDenseSolve) {
  Grid g(2, 3);
  StateSpace space(g, 3, 2);
  RequestModel model(g);
  for (Location u = 0; u < 6; ++u)
    for (Location v = 0; v < 6; ++v) model.set(u, v, (1.0 + ((u * 7 + v * 3) % 5)) / 120.0, 1.0);
  auto P = build_transition(space, model, PolicySpec::rand());
  auto dense = stationary_distribution(P);
  StationaryOptions opt;
  opt.dense_limit = 0;
  opt.tolerance = 1e-15;
  auto power = stationary_distribution(P, opt);
  EXPECT_GT(power.iterations, 0u);
  EXPECT_EQ(dense.iterations, 0u);
  EXPECT_LT(l1_distance(dense.pi, power.pi), 1e-10);
}

TEST(Stationary, IterationLimit) {
  auto P = TransitionMatrix::from_dense({{0.999, 0.001}, {0.002, 0.998}});
  StationaryOptions opt;
  opt.dense_limit = 0;
  opt.max_iterations = 3;
  try {
    stationary_distribution(P, opt);
    FAIL() << "expected IterationLimit";
  } catch (const IterationLimit& e) {
    EXPECT_GT(e.residual(), 0.0);
  }
}

TEST(Structure, IrreducibleAndAperiodic) {
  auto swap = TransitionMatrix::from_dense({{0, 1}, {1, 0}});
  EXPECT_TRUE(check_irreducible(swap));
  EXPECT_FALSE(check_aperiodic(swap));

  auto split = TransitionMatrix::from_dense({{1, 0}, {0, 1}});
  EXPECT_FALSE(check_irreducible(split));
  EXPECT_TRUE(check_aperiodic(split));

  auto lazy_cycle = TransitionMatrix::from_dense({{0.5, 0.5, 0}, {0, 0, 1}, {1, 0, 0}});
  EXPECT_TRUE(check_irreducible(lazy_cycle));
  EXPECT_TRUE(check_aperiodic(lazy_cycle));

  // Cycles of length 2 and 3 through the same node: gcd 1.
  auto mixed = TransitionMatrix::from_dense({{0, 0.5, 0.5, 0}, {1, 0, 0, 0}, {0, 0, 0, 1}, {1, 0, 0, 0}});
  EXPECT_TRUE(check_aperiodic(mixed));

  auto four_cycle = TransitionMatrix::from_dense({{0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}, {1, 0, 0, 0}});
  EXPECT_TRUE(check_irreducible(four_cycle));
  EXPECT_FALSE(check_aperiodic(four_cycle));
}

TEST(Structure, DispatchChainsAreErgodicUnderUniformArrivals) {
  Grid g(3, 3);
  StateSpace space(g, 3, 1);
  auto model = uniform_request_model(g, 1.0 / 81);
  for (auto pol : {PolicySpec::nadap(0.5), PolicySpec::rand(), PolicySpec::greedy()}) {
    auto P = build_transition(space, model, pol);
    EXPECT_TRUE(check_irreducible(P)) << pol.to_string();
    EXPECT_TRUE(check_aperiodic(P)) << pol.to_string();
  }
}
