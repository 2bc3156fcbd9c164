#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace phantom {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition of a public operation (bad k, empty input, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Instrument or data file failed schema validation.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// One or more columns have zero variance. `columns` holds item ids when
/// they are known, otherwise zero-based column indices rendered as text.
class ZeroVarianceError : public Error {
 public:
  explicit ZeroVarianceError(std::vector<std::string> columns);
  const std::vector<std::string>& columns() const noexcept { return columns_; }

 private:
  std::vector<std::string> columns_;
};

/// Matrix is singular or not positive definite to working precision.
class SingularError : public Error {
 public:
  SingularError(const std::string& what, double smallest_eigenvalue)
      : Error(what), smallest_eigenvalue_(smallest_eigenvalue) {}
  double smallest_eigenvalue() const noexcept { return smallest_eigenvalue_; }

 private:
  double smallest_eigenvalue_;
};

/// Non-finite values or iteration failure inside a numerical routine.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, Eigen::VectorXd last_good = {})
      : Error(what), last_good_(std::move(last_good)) {}
  const Eigen::VectorXd& last_good_point() const noexcept { return last_good_; }

 private:
  Eigen::VectorXd last_good_;
};

/// Transport or authentication failure talking to a chat endpoint.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status = 0) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }
  bool is_auth() const noexcept { return status_ == 401 || status_ == 403; }

 private:
  int status_;
};

}  // namespace phantom
