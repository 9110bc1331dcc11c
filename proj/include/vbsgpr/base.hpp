#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>

namespace vbsgpr {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

// Shape/precondition violations (wrong dimensions, bad flag values, ...).
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Numerical failures: factorization breakdown, non-finite intermediates.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input files (CSV, model artifacts).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Warning sink. Defaults to stderr; tests may swap it out to stay quiet or to
// assert that a warning fired.
inline std::function<void(const std::string&)>& warning_handler() {
  static std::function<void(const std::string&)> handler =
      [](const std::string& msg) { std::cerr << "warning: " << msg << "\n"; };
  return handler;
}

inline void warn(const std::string& msg) { warning_handler()(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

template <typename Scalar>
void require_finite(Scalar v, const char* term) {
  if (!std::isfinite(static_cast<double>(v)))
    throw NumericError(std::string("non-finite value in term '") + term + "'");
}

}  // namespace vbsgpr
