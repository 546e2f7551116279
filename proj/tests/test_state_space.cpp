#include <gtest/gtest.h>

#include <functional>
#include <set>

#include "ridemix/state_space.hpp"

using namespace ridemix;

namespace {

// Brute force: every vector in {0..c}^n with sum m, in lexicographic order.
std::vector<std::vector<int>> brute_force(int n, int m, int c) {
  std::vector<std::vector<int>> out;
  std::vector<int> x(n, 0);
  std::function<void(int, int)> rec = [&](int k, int left) {
    if (k == n) {
      if (left == 0) out.push_back(x);
      return;
    }
    for (int v = 0; v <= std::min(c, left); ++v) {
      x[k] = v;
      rec(k + 1, left - v);
    }
  };
  rec(0, m);
  return out;
}

}  // namespace

TEST(StateSpace, MatchesBruteForceEnumeration) {
  for (auto [r, cl] : {std::pair{1, 2}, {2, 2}, {2, 3}, {3, 3}})
    for (int m = 1; m <= 4; ++m)
      for (int c = 1; c <= 3; ++c) {
        Grid g(r, cl);
        if (m > c * g.size()) {
          EXPECT_THROW(StateSpace(g, m, c), InfeasibleInstance);
          continue;
        }
        StateSpace space(g, m, c);
        auto expected = brute_force(g.size(), m, c);
        ASSERT_EQ(space.size(), expected.size()) << r << "x" << cl << " m=" << m << " c=" << c;
        for (std::size_t i = 0; i < expected.size(); ++i) {
          EXPECT_EQ(space.unrank(i).counts(), expected[i]);
          EXPECT_EQ(space.rank(space.unrank(i)), i);
        }
      }
}

TEST(StateSpace, KnownCounts) {
  EXPECT_EQ(StateSpace(Grid(2, 2), 2, 2).size(), 10u);
  EXPECT_EQ(StateSpace(Grid(1, 1), 1, 1).size(), 1u);
  EXPECT_EQ(StateSpace(Grid(5, 5), 10, 10, 200000000).size(), 131128140u);
}

TEST(StateSpace, SizeCap) {
  EXPECT_THROW(StateSpace(Grid(5, 5), 10, 10, 1000), SizeLimit);
  EXPECT_THROW(StateSpace(Grid(5, 5), 10, 10), SizeLimit);
}

TEST(StateSpace, RankRejectsForeignStates) {
  StateSpace space(Grid(2, 2), 2, 2);
  EXPECT_THROW(space.rank(DriverState({1, 1, 1, 0}, 2)), InvalidArgument);
  EXPECT_FALSE(space.contains(DriverState({0, 0, 0, 1}, 2)));
}

TEST(DriverState, ValidationAndText) {
  EXPECT_THROW(DriverState({3, 0}, 2), InvalidArgument);
  EXPECT_THROW(DriverState({0, 0}, 2), InvalidArgument);
  EXPECT_THROW(DriverState({-1, 2}, 2), InvalidArgument);
  DriverState x({1, 0, 2, 0}, 2);
  EXPECT_EQ(x.to_string(), "1,0,2,0");
  EXPECT_EQ(DriverState::parse("1,0,2,0", 2), x);
  EXPECT_THROW(DriverState::parse("1,a", 2), InvalidArgument);
}

TEST(DriverState, Moves) {
  DriverState x({1, 0, 2, 0}, 2);
  EXPECT_EQ(apply_move(x, 0, 1), DriverState({0, 1, 2, 0}, 2));
  EXPECT_EQ(apply_move(x, 2, 2), x);
  EXPECT_THROW(apply_move(x, 1, 3), InfeasibleMove);
  EXPECT_THROW(apply_move(x, 0, 2), InfeasibleMove);
  EXPECT_FALSE(try_apply_move(x, 0, 2).has_value());
}

TEST(StateSpace, NeighbourPairsDifferByOneMove) {
  StateSpace space(Grid(2, 2), 2, 2);
  auto pairs = neighbor_pairs(space);
  EXPECT_EQ(pairs.size(), 48u);
  for (const auto& p : pairs) {
    auto x = space.unrank(p.from), y = space.unrank(p.to);
    EXPECT_EQ(apply_move(x, p.origin, p.dest), y);
  }
}

TEST(StateSpace, StartStates) {
  Grid g(2, 2);
  EXPECT_EQ(adversarial_state(g, 2, 2).counts(), (std::vector<int>{2, 0, 0, 0}));
  EXPECT_EQ(adversarial_state(g, 5, 2).counts(), (std::vector<int>{2, 2, 1, 0}));
  EXPECT_EQ(spread_state(g, 5, 2).counts(), (std::vector<int>{2, 1, 1, 1}));
  EXPECT_THROW(adversarial_state(g, 9, 2), InfeasibleInstance);
}
