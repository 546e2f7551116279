#include <gtest/gtest.h>

#include "ridemix/coupling.hpp"

using namespace ridemix;

TEST(Coupling, StateDistance) {
  EXPECT_EQ(state_distance(DriverState({2, 0, 1}, 2), DriverState({1, 1, 1}, 2)), 2);
  EXPECT_EQ(state_distance(DriverState({2, 0, 1}, 2), DriverState({0, 1, 2}, 2)), 4);
}

TEST(Coupling, StepDistributionIsAProbabilityLaw) {
  Grid g(2, 2);
  auto model = uniform_request_model<Rational>(g, Rational(1, 16));
  DriverState x({2, 0, 0, 0}, 2), y({1, 1, 0, 0}, 2);
  auto law = coupled_step_distribution(x, y, model);
  Rational total(0);
  for (const auto& o : law) {
    total += o.prob;
    EXPECT_EQ(o.x.drivers(), 2);
    EXPECT_LE(state_distance(o.x, o.y), 2);
  }
  EXPECT_EQ(total, Rational(1));
  EXPECT_THROW(coupled_step_distribution(x, DriverState({0, 0, 1, 1}, 2), model), InvalidArgument);
}

TEST(Coupling, ContractsOnSmallGrids) {
  for (auto [r, c] : {std::pair{1, 2}, {2, 2}, {2, 3}})
    for (int cap = 1; cap <= 2; ++cap)
      for (int m = 1; m <= 3; ++m) {
        Grid g(r, c);
        if (m > cap * g.size() || m == cap * g.size()) continue;  // a full grid has no pairs
        auto rep = verify_contraction(g, m, cap, 0.01, {2, false});
        EXPECT_EQ(rep.violations, 0u) << r << "x" << c << " m=" << m << " c=" << cap;
        EXPECT_LE(rep.worst_beta, rep.bound_beta);
        EXPECT_EQ(rep.diameter, 2 * m);
      }
}

TEST(Coupling, TwoByTwoWorstCase) {
  auto rep = verify_contraction(Grid(2, 2), 2, 2, 0.01);
  EXPECT_EQ(rep.worst_beta, Rational(15, 16));
  EXPECT_EQ(rep.pairs.size(), 48u);
  EXPECT_NEAR(rep.tau_bound, 16 * std::log(400.0), 1e-9);
}

TEST(Coupling, CapacityThreeIsOutOfScope) {
  EXPECT_THROW(verify_contraction(Grid(2, 2), 3, 3, 0.01), OutOfScope);
  EXPECT_THROW(verify_contraction(Grid(2, 2), 2, 2, 1.5), InvalidArgument);
}

TEST(Coupling, ThreadCountDoesNotChangeTheReport) {
  auto a = verify_contraction(Grid(2, 3), 3, 2, 0.01, {1, false});
  auto b = verify_contraction(Grid(2, 3), 3, 2, 0.01, {4, false});
  ASSERT_EQ(a.pairs.size(), b.pairs.size());
  for (std::size_t k = 0; k < a.pairs.size(); ++k) EXPECT_EQ(a.pairs[k].ratio, b.pairs[k].ratio);
}
