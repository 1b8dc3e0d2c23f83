#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace gradpf {

// Every model in the library has state, observation and parameter dimension
// at most kMaxDim, so small vectors and matrices live on the stack.
inline constexpr int kMaxDim = 4;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

// One matrix per differentiation direction (x_k or theta_j). Only the first
// n entries are meaningful, where n is the relevant model dimension.
using Slices = std::array<Mat, kMaxDim>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A covariance failed its Cholesky factorization or symmetry check.
class FactorizationError : public Error {
 public:
  FactorizationError(const std::string& matrix_name, const std::string& detail)
      : Error(matrix_name + ": " + detail), matrix_name_(matrix_name) {}
  const std::string& matrix_name() const { return matrix_name_; }

 private:
  std::string matrix_name_;
};

class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Parameters outside the model's domain (e.g. a non-stationary SV model).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Raised when a state becomes non-finite (Lorenz blow-up) at a time index.
class DivergenceError : public Error {
 public:
  DivergenceError(int time_index, const std::string& detail)
      : Error("divergence at t=" + std::to_string(time_index) + ": " + detail),
        time_index_(time_index) {}
  int time_index() const { return time_index_; }

 private:
  int time_index_;
};

// All particle weights underflowed at a time index.
class WeightUnderflowError : public Error {
 public:
  explicit WeightUnderflowError(int time_index)
      : Error("all particle weights vanished at t=" + std::to_string(time_index)),
        time_index_(time_index) {}
  int time_index() const { return time_index_; }

 private:
  int time_index_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

inline Mat zeros(int rows, int cols) { return Mat::Zero(rows, cols); }
inline Vec zeros(int n) { return Vec::Zero(n); }

// Sum of elementwise products, i.e. trace(A^T B).
inline double contract(const Mat& a, const Mat& b) { return a.cwiseProduct(b).sum(); }

}  // namespace gradpf
