#pragma once

#include <cmath>
#include <vector>

#include "ridemix/error.hpp"
#include "ridemix/series.hpp"

namespace ridemix {

/// Least squares of log(y) on t, giving y ~ a e^{-b t}. Points with y <= floor (by
/// default the non-positive ones) are dropped and counted; fewer than three usable
/// points is a fit failure.
inline ExponentialFit fit_exponential(const std::vector<double>& t, const std::vector<double>& y,
                                      double floor = 0.0) {
  if (t.size() != y.size()) throw InvalidArgument("fit: t and y lengths differ");
  ExponentialFit fit;
  double st = 0, sl = 0, stt = 0, stl = 0;
  std::vector<double> ts, ls;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y[i] > floor) || !(y[i] > 0.0) || !std::isfinite(y[i])) {
      ++fit.dropped;
      continue;
    }
    ts.push_back(t[i]);
    ls.push_back(std::log(y[i]));
  }
  fit.used = ts.size();
  if (fit.used < 3)
    throw FitFailure("exponential fit needs at least 3 positive points, have " + std::to_string(fit.used));
  const double k = static_cast<double>(fit.used);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    st += ts[i];
    sl += ls[i];
  }
  const double mt = st / k, ml = sl / k;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    stt += (ts[i] - mt) * (ts[i] - mt);
    stl += (ts[i] - mt) * (ls[i] - ml);
  }
  if (stt == 0.0) throw FitFailure("exponential fit needs distinct abscissae");
  const double slope = stl / stt;
  const double intercept = ml - slope * mt;
  fit.a = std::exp(intercept);
  fit.b = -slope;
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double r = ls[i] - (intercept + slope * ts[i]);
    ss_res += r * r;
    ss_tot += (ls[i] - ml) * (ls[i] - ml);
  }
  fit.goodness = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

// Convenience: abscissae 0, 1, 2, ...
inline ExponentialFit fit_exponential(const std::vector<double>& y) {
  std::vector<double> t(y.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  return fit_exponential(t, y);
}

/// y ~ a / T with a the least-squares constant of y*T. Goodness is R^2 of a/T
/// against y on the original scale (the constant model alone has R^2 = 0 by construction).
inline InverseFit fit_inverse(const std::vector<double>& T, const std::vector<double>& y) {
  if (T.size() != y.size()) throw InvalidArgument("fit: T and y lengths differ");
  InverseFit fit;
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(T[i] > 0.0)) throw InvalidArgument("inverse fit needs positive T");
    s += y[i] * T[i];
  }
  fit.used = y.size();
  if (fit.used == 0) throw FitFailure("inverse fit needs at least one point");
  fit.a = s / static_cast<double>(fit.used);
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - fit.a / T[i];
    ss_res += r * r;
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  fit.goodness = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  return fit;
}

// Abscissae T = 1, 2, 3, ...
inline InverseFit fit_inverse(const std::vector<double>& y) {
  std::vector<double> T(y.size());
  for (std::size_t i = 0; i < T.size(); ++i) T[i] = static_cast<double>(i + 1);
  return fit_inverse(T, y);
}

}  // namespace ridemix
