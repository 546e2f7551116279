#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ridemix {

// All library failures derive from this; `category()` is what the CLI prints.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* category() const noexcept { return "error"; }
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "invalid-argument"; }
};

class InfeasibleInstance : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "infeasible-instance"; }
};

class InfeasibleMove : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "infeasible-move"; }
};

class SizeLimit : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "size-limit"; }
};

class IterationLimit : public Error {
 public:
  IterationLimit(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  const char* category() const noexcept override { return "iteration-limit"; }
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class HorizonTooShort : public Error {
 public:
  HorizonTooShort(const std::string& what, std::vector<double> partial)
      : Error(what), partial_(std::move(partial)) {}
  const char* category() const noexcept override { return "horizon-too-short"; }
  const std::vector<double>& partial_curve() const noexcept { return partial_; }

 private:
  std::vector<double> partial_;
};

class OutOfScope : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "out-of-theorem-scope"; }
};

class FitFailure : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "fit-failure"; }
};

class SchemaError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "schema"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "io"; }
};

}  // namespace ridemix
