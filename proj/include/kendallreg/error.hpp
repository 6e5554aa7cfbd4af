#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace kreg {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

/// Invalid argument: dimension mismatch, NaN, out-of-range id.
class ArgumentError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "argument"; }
};

/// Input that is well-formed but carries no usable information
/// (constant covariate, too few observations, all-zero pilot).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "degenerate_input"; }
};

/// No observation receives positive kernel mass at the query point.
class EmptyNeighborhoodError : public Error {
 public:
  explicit EmptyNeighborhoodError(std::vector<double> z)
      : Error(describe(z)), z_(std::move(z)) {}
  const std::vector<double>& point() const noexcept { return z_; }
  const char* kind() const noexcept override { return "empty_neighborhood"; }

 private:
  static std::string describe(const std::vector<double>& z) {
    std::ostringstream os;
    os << "empty kernel neighborhood at z=(";
    for (std::size_t k = 0; k < z.size(); ++k) os << (k ? "," : "") << z[k];
    os << ")";
    return os.str();
  }
  std::vector<double> z_;
};

/// Derivative requested at a knot of a piecewise basis function.
class NonDifferentiableError : public Error {
 public:
  NonDifferentiableError(std::string basis_name, const std::string& what)
      : Error(what), basis_(std::move(basis_name)) {}
  const std::string& basis() const noexcept { return basis_; }
  const char* kind() const noexcept override { return "non_differentiable"; }

 private:
  std::string basis_;
};

/// Singular Gram matrix; carries the names of the basis functions that
/// load on the null directions.
class RankDeficiencyError : public Error {
 public:
  RankDeficiencyError(const std::string& what, std::vector<std::string> null_directions)
      : Error(what), null_(std::move(null_directions)) {}
  const std::vector<std::string>& null_directions() const noexcept { return null_; }
  const char* kind() const noexcept override { return "rank_deficiency"; }

 private:
  std::vector<std::string> null_;
};

/// The estimator cannot be computed at all (every design point failed,
/// every CV fold skipped).
class EstimationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "estimation"; }
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ArgumentError(msg);
}

}  // namespace detail
}  // namespace kreg
