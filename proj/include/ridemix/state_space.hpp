#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ridemix/error.hpp"
#include "ridemix/format.hpp"
#include "ridemix/grid.hpp"

namespace ridemix {

/// Driver counts per location with a shared per-location capacity.
class DriverState {
 public:
  DriverState() = default;
  DriverState(std::vector<int> counts, int capacity)
      : counts_(std::move(counts)), capacity_(capacity) {
    if (capacity_ < 1) throw InvalidArgument("capacity must be positive");
    for (int x : counts_)
      if (x < 0 || x > capacity_)
        throw InvalidArgument("driver count " + std::to_string(x) + " outside [0, capacity]");
    if (drivers() < 1) throw InvalidArgument("state must hold at least one driver");
  }

  const std::vector<int>& counts() const noexcept { return counts_; }
  int operator[](Location u) const { return counts_.at(static_cast<std::size_t>(u)); }
  int size() const noexcept { return static_cast<int>(counts_.size()); }
  int capacity() const noexcept { return capacity_; }
  int drivers() const { return std::accumulate(counts_.begin(), counts_.end(), 0); }

  bool has_driver(Location u) const { return (*this)[u] >= 1; }
  bool has_room(Location u) const { return (*this)[u] < capacity_; }

  bool operator==(const DriverState&) const = default;

  // Comma-joined counts, e.g. "1,0,2,0".
  std::string to_string() const {
    std::string s;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(counts_[i]);
    }
    return s;
  }

  static DriverState parse(const std::string& text, int capacity) {
    std::vector<int> counts;
    for (const auto& f : split(trim(text))) {
      try {
        std::size_t used = 0;
        counts.push_back(std::stoi(f, &used));
        if (used != f.size()) throw std::invalid_argument(f);
      } catch (const std::logic_error&) {
        throw InvalidArgument("malformed state '" + text + "'");
      }
    }
    return DriverState(std::move(counts), capacity);
  }

 private:
  friend std::optional<DriverState> try_apply_move(const DriverState&, Location, Location);
  std::vector<int> counts_;
  int capacity_ = 1;
};

/// Moves one driver u -> dest; nothing when u is empty or dest is full.
/// A self-move returns the state unchanged.
inline std::optional<DriverState> try_apply_move(const DriverState& x, Location u, Location dest) {
  if (u == dest) {
    (void)x[u];
    return x;
  }
  if (!x.has_driver(u) || !x.has_room(dest)) return std::nullopt;
  DriverState y = x;
  --y.counts_[static_cast<std::size_t>(u)];
  ++y.counts_[static_cast<std::size_t>(dest)];
  return y;
}

inline DriverState apply_move(const DriverState& x, Location u, Location dest) {
  if (auto y = try_apply_move(x, u, dest)) return *std::move(y);
  throw InfeasibleMove("cannot move a driver from " + std::to_string(u) + " to " +
                       std::to_string(dest) + " in state " + x.to_string());
}

/// All feasible driver configurations, ordered lexicographically by count vector.
class StateSpace {
 public:
  static constexpr std::uint64_t kDefaultCap = 5'000'000;

  StateSpace(const Grid& grid, int drivers, int capacity, std::uint64_t cap = kDefaultCap)
      : grid_(grid), m_(drivers), c_(capacity) {
    const int n = grid.size();
    if (drivers < 1 || capacity < 1) throw InvalidArgument("drivers and capacity must be positive");
    if (static_cast<long long>(drivers) > static_cast<long long>(capacity) * n)
      throw InfeasibleInstance("m = " + std::to_string(drivers) + " exceeds c*n = " +
                               std::to_string(static_cast<long long>(capacity) * n));
    // ways_[k][s]: number of ways locations k..n-1 hold s drivers (saturating at cap+1).
    const std::uint64_t sat = cap + 1;
    ways_.assign(static_cast<std::size_t>(n) + 1, std::vector<std::uint64_t>(m_ + 1, 0));
    ways_[n][0] = 1;
    for (int k = n - 1; k >= 0; --k)
      for (int s = 0; s <= m_; ++s) {
        std::uint64_t acc = 0;
        for (int v = 0; v <= std::min(c_, s); ++v) acc = std::min(sat, acc + ways_[k + 1][s - v]);
        ways_[k][s] = acc;
      }
    size_ = ways_[0][m_];
    if (size_ > cap)
      throw SizeLimit("state space exceeds " + std::to_string(cap) +
                      " states; use Monte-Carlo mode instead");
  }

  const Grid& grid() const noexcept { return grid_; }
  int n() const noexcept { return grid_.size(); }
  int drivers() const noexcept { return m_; }
  int capacity() const noexcept { return c_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(size_); }

  bool contains(const DriverState& x) const {
    return x.size() == n() && x.capacity() == c_ && x.drivers() == m_;
  }

  std::size_t rank(const DriverState& x) const {
    if (!contains(x)) throw InvalidArgument("state " + x.to_string() + " not in the state space");
    std::uint64_t r = 0;
    int remaining = m_;
    for (int k = 0; k < n(); ++k) {
      for (int v = 0; v < x[k]; ++v) r += ways_[k + 1][remaining - v];
      remaining -= x[k];
    }
    return static_cast<std::size_t>(r);
  }

  DriverState unrank(std::size_t index) const {
    if (index >= size()) throw InvalidArgument("state index " + std::to_string(index) + " out of range");
    std::vector<int> counts(static_cast<std::size_t>(n()), 0);
    std::uint64_t r = index;
    int remaining = m_;
    for (int k = 0; k < n(); ++k) {
      int v = 0;
      while (v <= std::min(c_, remaining) && r >= ways_[k + 1][remaining - v]) {
        r -= ways_[k + 1][remaining - v];
        ++v;
      }
      counts[static_cast<std::size_t>(k)] = v;
      remaining -= v;
    }
    return DriverState(std::move(counts), c_);
  }

  std::vector<DriverState> states() const {
    std::vector<DriverState> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.push_back(unrank(i));
    return out;
  }

 private:
  Grid grid_;
  int m_;
  int c_;
  std::uint64_t size_ = 0;
  std::vector<std::vector<std::uint64_t>> ways_;
};

inline StateSpace enumerate_states(const Grid& grid, int drivers, int capacity,
                                   std::uint64_t cap = StateSpace::kDefaultCap) {
  return StateSpace(grid, drivers, capacity, cap);
}

struct NeighborPair {
  std::size_t from;  // rank of x
  std::size_t to;    // rank of y
  Location origin;
  Location dest;
};

/// Every ordered (x, y) differing by one driver moved origin -> dest, origin != dest.
inline std::vector<NeighborPair> neighbor_pairs(const StateSpace& space) {
  std::vector<NeighborPair> out;
  for (std::size_t i = 0; i < space.size(); ++i) {
    auto x = space.unrank(i);
    for (Location u = 0; u < space.n(); ++u) {
      if (!x.has_driver(u)) continue;
      for (Location v = 0; v < space.n(); ++v) {
        if (v == u || !x.has_room(v)) continue;
        out.push_back({i, space.rank(apply_move(x, u, v)), u, v});
      }
    }
  }
  return out;
}

// Drivers all at location 0, spilling into 1, 2, ... when capacity binds.
inline DriverState adversarial_state(const Grid& grid, int drivers, int capacity) {
  if (static_cast<long long>(drivers) > static_cast<long long>(capacity) * grid.size())
    throw InfeasibleInstance("m exceeds c*n");
  std::vector<int> counts(static_cast<std::size_t>(grid.size()), 0);
  int left = drivers;
  for (auto& x : counts) {
    x = std::min(capacity, left);
    left -= x;
  }
  return DriverState(std::move(counts), capacity);
}

// Round-robin spread, one driver per location in index order.
inline DriverState spread_state(const Grid& grid, int drivers, int capacity) {
  if (static_cast<long long>(drivers) > static_cast<long long>(capacity) * grid.size())
    throw InfeasibleInstance("m exceeds c*n");
  std::vector<int> counts(static_cast<std::size_t>(grid.size()), 0);
  for (int k = 0; k < drivers; ++k) ++counts[static_cast<std::size_t>(k % grid.size())];
  return DriverState(std::move(counts), capacity);
}

}  // namespace ridemix
