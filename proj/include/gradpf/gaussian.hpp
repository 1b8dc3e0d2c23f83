#pragma once

#include <string_view>

#include "gradpf/types.hpp"

// Small dense Gaussian calculus.
//
// Derivative convention used throughout the library: a partial derivative
// d/dz f(a(z), z) changes only the explicit argument z; a total derivative
// also moves every argument that depends on z. Totals are always assembled
// as  df/da * da/dz + df/dz  from the partials returned here.
namespace gradpf::gauss {

// Finite-difference step and relative tolerance shared by the gradient tests.
inline constexpr double kFdStep = 1e-6;
inline constexpr double kGradRelTol = 1e-5;

double log_normal(const Vec& x, const Vec& mu, const Mat& cov,
                  std::string_view cov_name = "covariance");

struct LogNormalGrad {
  Vec dx;
  Vec dmu;
  Mat dcov;  // full (unsymmetrized) matrix; contract slice-by-slice
};

LogNormalGrad dlog_normal(const Vec& x, const Vec& mu, const Mat& cov,
                          std::string_view cov_name = "covariance");

// Value and partials from a single factorization.
struct LogNormalEval {
  double value = 0.0;
  LogNormalGrad grad;
};

LogNormalEval log_normal_eval(const Vec& x, const Vec& mu, const Mat& cov,
                              std::string_view cov_name = "covariance");

// d(U^-1) for one direction: -U^-1 dU U^-1.
Mat inv_derivative(const Mat& u, const Mat& du);

// Principal symmetric square root of an SPD matrix.
Mat spd_sqrt(const Mat& cov, std::string_view cov_name = "covariance");

// Derivative of the principal square root A of C = AA along a symmetric
// direction dC. Solves A dA + dA A = dC exactly; when dC commutes with C this
// is the closed form 0.5 A^-1 dC.
Mat sqrtm_derivative(const Mat& root, const Mat& dcov);

// Eigendecomposition of a symmetric root, reused across many directions.
class SymmetricRoot {
 public:
  explicit SymmetricRoot(const Mat& cov, std::string_view cov_name = "covariance");

  const Mat& root() const { return root_; }
  Mat derivative(const Mat& dcov) const;

 private:
  Mat root_;
  Mat basis_;
  Vec sqrt_eigs_;
};

void check_spd_shape(const Mat& cov, std::string_view cov_name);

}  // namespace gradpf::gauss
