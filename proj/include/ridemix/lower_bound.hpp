#pragma once

#include <boost/rational.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "ridemix/error.hpp"

namespace ridemix {

using Rational = boost::rational<long long>;

inline double to_double(const Rational& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

/// Four-state projection of the NAdap(1) chain with c = 1, p_r = n^-2, onto the
/// occupancy of locations u* = 1 and v* = m+1. States: s1 = (1,0), s2 = (1,1),
/// s3 = (0,0), s4 = (0,1), written as (x_{u*}, x_{v*}).
class LowerBoundChain {
 public:
  using Matrix = std::array<std::array<Rational, 4>, 4>;

  LowerBoundChain(long long n, long long m) : n_(n), m_(m) {
    if (!(m > 1 && m < n - 1))
      throw InvalidArgument("lower-bound chain needs 1 < m < n - 1");
    const long long nn = n * n;
    auto r = [nn](long long num) { return Rational(num, nn); };
    P_ = {{{r(nn - n + 1), r(m - 1), r(n - m - 1), r(1)},
           {r(n - m), r(nn - 2 * (n - m)), r(0), r(n - m)},
           {r(m), r(0), r(nn - 2 * m), r(m)},
           {r(1), r(m - 1), r(n - m - 1), r(nn - n + 1)}}};
  }

  long long n() const noexcept { return n_; }
  long long m() const noexcept { return m_; }
  const Matrix& matrix() const noexcept { return P_; }

  Rational row_sum(std::size_t i) const {
    Rational s(0);
    for (const auto& v : P_[i]) s += v;
    return s;
  }

  // gamma_{m+1,1} = (m/n)(n-m)/(n-1).
  Rational gamma() const { return Rational(m_ * (n_ - m_), n_ * (n_ - 1)); }

  /// Stationary distribution of the 4x4 chain (exact, by Gaussian elimination).
  std::array<Rational, 4> stationary() const {
    std::array<std::array<Rational, 5>, 4> a{};
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) a[i][j] = P_[j][i] - (i == j ? Rational(1) : Rational(0));
      a[i][4] = 0;
    }
    for (std::size_t j = 0; j < 4; ++j) a[3][j] = 1;
    a[3][4] = 1;
    for (std::size_t col = 0; col < 4; ++col) {
      std::size_t piv = col;
      while (a[piv][col] == Rational(0)) ++piv;
      std::swap(a[piv], a[col]);
      for (std::size_t i = 0; i < 4; ++i) {
        if (i == col || a[i][col] == Rational(0)) continue;
        Rational f = a[i][col] / a[col][col];
        for (std::size_t j = col; j < 5; ++j) a[i][j] -= f * a[col][j];
      }
    }
    std::array<Rational, 4> pi{};
    for (std::size_t i = 0; i < 4; ++i) pi[i] = a[i][4] / a[i][i];
    return pi;
  }

  /// |P^t(s1,s4) - gamma| for t = 0..t_max by repeated multiplication in double.
  std::vector<double> gap_by_power(std::size_t t_max) const {
    std::array<std::array<double, 4>, 4> P{};
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) P[i][j] = to_double(P_[i][j]);
    std::array<double, 4> mu{1.0, 0.0, 0.0, 0.0};
    const double g = to_double(gamma());
    std::vector<double> out;
    for (std::size_t t = 0; t <= t_max; ++t) {
      out.push_back(std::abs(mu[3] - g));
      std::array<double, 4> next{};
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) next[j] += mu[i] * P[i][j];
      mu = next;
    }
    return out;
  }

  /// The closed-form gap as printed with the lower-bound proof:
  /// (1-1/n)^t (2mn-n-2m^2)/(n(n-2)) + (1-2/n+2/n^2)^t (m-1)(n-m-1)/((n-1)(n-2)).
  double printed_gap(double t) const {
    const double n = static_cast<double>(n_), m = static_cast<double>(m_);
    return std::pow(1.0 - 1.0 / n, t) * slow_coefficient() +
           std::pow(1.0 - 2.0 / n + 2.0 / (n * n), t) * (m - 1) * (n - m - 1) / ((n - 1) * (n - 2));
  }

  /// Eigen-expansion of P^t(s1,s4) - gamma: the slow mode enters with a minus sign,
  /// -A (1-1/n)^t + B (1-2/n+2/n^2)^t, with A, B the printed coefficients.
  double signed_gap(double t) const {
    const double n = static_cast<double>(n_), m = static_cast<double>(m_);
    return -std::pow(1.0 - 1.0 / n, t) * slow_coefficient() +
           std::pow(1.0 - 2.0 / n + 2.0 / (n * n), t) * (m - 1) * (n - m - 1) / ((n - 1) * (n - 2));
  }

  // (2m/n) e^{-t/n}, the leading-order gap for 1 << m << n.
  double asymptotic_gap(double t) const {
    const double n = static_cast<double>(n_), m = static_cast<double>(m_);
    return 2.0 * m / n * std::exp(-t / n);
  }

  // 2m * sum_w / (n^3 e^{t/n}): per-round objective error of the instance.
  double asymptotic_rate(double t, double sum_w) const {
    const double n = static_cast<double>(n_);
    return asymptotic_gap(t) * sum_w / (n * n);
  }

 private:
  double slow_coefficient() const {
    const double n = static_cast<double>(n_), m = static_cast<double>(m_);
    return (2 * m * n - n - 2 * m * m) / (n * (n - 2));
  }

  long long n_;
  long long m_;
  Matrix P_;
};

inline LowerBoundChain build_lower_bound_chain(long long n, long long m) { return LowerBoundChain(n, m); }

}  // namespace ridemix
