#pragma once

#include <optional>
#include <vector>

namespace ridemix {

struct ExponentialFit {
  double a = 0.0;
  double b = 0.0;
  double goodness = 0.0;  // R^2 of log(y) against t
  std::size_t used = 0;
  std::size_t dropped = 0;
};

struct InverseFit {
  double a = 0.0;
  double goodness = 0.0;  // R^2 of y*T against the constant a
  std::size_t used = 0;
};

/// Per-round profit curve and its convergence errors. Index t counts completed
/// rounds: w[t] is the expected profit of the round played from X(t), and
/// obj[T-1] = (1/T) * sum_{t<T} w[t] is the running average over the first T rounds.
struct ErrorSeries {
  std::vector<double> w;
  std::vector<double> stderr_w;
  std::vector<double> obj;
  double target = 0.0;
  std::vector<double> delta;      // |w[t] - target|
  std::vector<double> delta_hat;  // |obj[T-1] - target|
  std::optional<ExponentialFit> delta_fit;
  std::optional<InverseFit> delta_hat_fit;
  std::size_t runs = 0;
  double obj_stderr = 0.0;  // standard error of obj.back() across runs
};

}  // namespace ridemix
