#pragma once

#include <array>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "ridemix/error.hpp"
#include "ridemix/format.hpp"

namespace ridemix {

using Location = int;

// Relative neighbour directions, listed clockwise from North.
enum class Direction : int { North = 0, East = 1, South = 2, West = 3 };

inline constexpr std::array<Direction, 4> kClockwise = {Direction::North, Direction::East,
                                                        Direction::South, Direction::West};

inline char direction_letter(Direction d) { return "NESW"[static_cast<int>(d)]; }

/// Rectangular grid of locations indexed row-major.
class Grid {
 public:
  Grid(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows < 1 || cols < 1)
      throw InvalidArgument("grid dimensions must be positive, got " + std::to_string(rows) +
                            "x" + std::to_string(cols));
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  int size() const noexcept { return rows_ * cols_; }

  Location index(int row, int col) const {
    if (row < 0 || row >= rows_ || col < 0 || col >= cols_)
      throw InvalidArgument("coordinate (" + std::to_string(row) + "," + std::to_string(col) +
                            ") outside grid");
    return row * cols_ + col;
  }
  int row(Location u) const { return check(u) / cols_; }
  int col(Location u) const { return check(u) % cols_; }

  // In-grid location one step from u, or nothing at the boundary.
  std::optional<Location> step(Location u, Direction d) const {
    int r = row(u), c = col(u);
    switch (d) {
      case Direction::North: --r; break;
      case Direction::East: ++c; break;
      case Direction::South: ++r; break;
      case Direction::West: --c; break;
    }
    if (r < 0 || r >= rows_ || c < 0 || c >= cols_) return std::nullopt;
    return r * cols_ + c;
  }

  /// Locations at Manhattan distance exactly 1, in clockwise order from North.
  std::vector<Location> neighbors(Location u) const {
    std::vector<Location> out;
    for (auto d : kClockwise)
      if (auto v = step(u, d)) out.push_back(*v);
    return out;
  }

  std::vector<Location> closed_neighborhood(Location u) const {
    auto out = neighbors(u);
    out.insert(out.begin(), u);
    return out;
  }

  int manhattan_distance(Location u, Location v) const {
    return std::abs(row(u) - row(v)) + std::abs(col(u) - col(v));
  }

  bool operator==(const Grid&) const = default;

 private:
  Location check(Location u) const {
    if (u < 0 || u >= size())
      throw InvalidArgument("location " + std::to_string(u) + " outside grid of " +
                            std::to_string(size()));
    return u;
  }

  int rows_;
  int cols_;
};

inline Grid build_grid(int rows, int cols) { return Grid(rows, cols); }

// Parses "RxC".
inline Grid parse_grid(const std::string& spec) {
  auto x = spec.find_first_of("xX");
  if (x == std::string::npos) throw InvalidArgument("grid must look like RxC, got '" + spec + "'");
  try {
    std::size_t used = 0;
    int r = std::stoi(spec.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(spec);
    std::string rest = spec.substr(x + 1);
    int c = std::stoi(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(spec);
    return Grid(r, c);
  } catch (const std::logic_error&) {
    throw InvalidArgument("grid must look like RxC, got '" + spec + "'");
  }
}

/// Per-round arrival probabilities and profits for every ordered pair of locations.
/// `Real` is double in production and an exact rational type in oracle tests.
template <typename Real>
class BasicRequestModel {
 public:
  explicit BasicRequestModel(Grid grid)
      : grid_(grid),
        p_(static_cast<std::size_t>(grid.size()) * grid.size(), Real(0)),
        w_(p_.size(), Real(0)) {}

  const Grid& grid() const noexcept { return grid_; }
  int n() const noexcept { return grid_.size(); }

  const Real& p(Location u, Location v) const { return p_[key(u, v)]; }
  const Real& w(Location u, Location v) const { return w_[key(u, v)]; }

  void set(Location u, Location v, Real prob, Real weight) {
    if (prob < Real(0) || prob > Real(1))
      throw InvalidArgument("arrival probability outside [0,1]");
    if (weight < Real(0)) throw InvalidArgument("weights must be nonnegative");
    p_[key(u, v)] = prob;
    w_[key(u, v)] = weight;
  }

  Real total_mass() const {
    Real s(0);
    for (const auto& x : p_) s += x;
    return s;
  }
  Real no_request_mass() const { return Real(1) - total_mass(); }

  Real w_max() const {
    Real m(0);
    for (const auto& x : w_)
      if (m < x) m = x;
    return m;
  }

  Real total_weight() const {
    Real s(0);
    for (const auto& x : w_) s += x;
    return s;
  }

  // Throws unless the arrival mass is at most one (within `slack`).
  void validate(Real slack = Real(0)) const {
    if (total_mass() > Real(1) + slack)
      throw InvalidArgument("arrival probabilities sum above 1");
  }

  // True when every ordered pair carries the same probability.
  bool is_uniform() const {
    for (const auto& x : p_)
      if (x != p_.front()) return false;
    return true;
  }

 private:
  std::size_t key(Location u, Location v) const {
    if (u < 0 || v < 0 || u >= n() || v >= n())
      throw InvalidArgument("request endpoint outside grid");
    return static_cast<std::size_t>(u) * n() + v;
  }

  Grid grid_;
  std::vector<Real> p_;
  std::vector<Real> w_;
};

using RequestModel = BasicRequestModel<double>;

/// Uniform arrivals p on all n^2 ordered pairs, weights = Manhattan distance.
template <typename Real = double>
BasicRequestModel<Real> uniform_request_model(const Grid& grid, Real p) {
  const int n = grid.size();
  if (p < Real(0) || p * Real(n) * Real(n) > Real(1))
    throw InvalidArgument("uniform arrival probability times n^2 exceeds 1");
  BasicRequestModel<Real> model(grid);
  for (Location u = 0; u < n; ++u)
    for (Location v = 0; v < n; ++v) model.set(u, v, p, Real(grid.manhattan_distance(u, v)));
  return model;
}

/// Same, with every weight set to `weight`.
template <typename Real = double>
BasicRequestModel<Real> uniform_request_model(const Grid& grid, Real p, Real weight) {
  auto model = uniform_request_model<Real>(grid, p);
  for (Location u = 0; u < grid.size(); ++u)
    for (Location v = 0; v < grid.size(); ++v) model.set(u, v, p, weight);
  return model;
}

/// Lowest-index location with positive arrival mass to and from every other location.
template <typename Real>
std::optional<Location> check_hotspot(const BasicRequestModel<Real>& model) {
  const int n = model.n();
  for (Location h = 0; h < n; ++h) {
    bool ok = true;
    for (Location u = 0; u < n && ok; ++u) {
      if (u == h) continue;
      ok = model.p(h, u) > Real(0) && model.p(u, h) > Real(0);
    }
    if (ok) return h;
  }
  return std::nullopt;
}

// CSV with header `origin,dest,p,w`; pairs not listed have p = w = 0.
inline void save_request_model(const RequestModel& model, std::ostream& out) {
  out << "origin,dest,p,w\n";
  for (Location u = 0; u < model.n(); ++u)
    for (Location v = 0; v < model.n(); ++v)
      out << u << ',' << v << ',' << fmt_real(model.p(u, v)) << ',' << fmt_real(model.w(u, v))
          << '\n';
}

inline RequestModel load_request_model(const Grid& grid, std::istream& in) {
  RequestModel model(grid);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("request model CSV is empty");
  auto header = split(trim(line));
  if (header != std::vector<std::string>{"origin", "dest", "p", "w"})
    throw SchemaError("request model CSV header must be origin,dest,p,w");
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split(trim(line));
    if (f.size() != 4) throw SchemaError("line " + std::to_string(lineno) + ": expected 4 fields");
    try {
      model.set(std::stoi(f[0]), std::stoi(f[1]), std::stod(f[2]), std::stod(f[3]));
    } catch (const std::logic_error&) {
      throw SchemaError("line " + std::to_string(lineno) + ": malformed number");
    }
  }
  model.validate(1e-12);
  return model;
}

}  // namespace ridemix
