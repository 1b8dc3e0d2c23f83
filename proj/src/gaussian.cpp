#include "gradpf/gaussian.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace gradpf::gauss {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kSymmetryTol = 1e-12;

std::string name_of(std::string_view s) { return std::string(s); }

void check_same_dim(const Vec& x, const Vec& mu, const Mat& cov) {
  if (x.size() != mu.size() || cov.rows() != x.size()) {
    throw DimensionError("log_normal: dimension mismatch (x=" + std::to_string(x.size()) +
                         ", mu=" + std::to_string(mu.size()) +
                         ", cov=" + std::to_string(cov.rows()) + ")");
  }
}

}  // namespace

void check_spd_shape(const Mat& cov, std::string_view cov_name) {
  if (cov.rows() == 0 || cov.rows() != cov.cols()) {
    throw FactorizationError(name_of(cov_name), "not a non-empty square matrix");
  }
  if (!cov.allFinite()) {
    throw FactorizationError(name_of(cov_name), "non-finite entries");
  }
  const double scale = cov.cwiseAbs().maxCoeff();
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol * scale) {
    throw FactorizationError(name_of(cov_name), "not symmetric");
  }
}

LogNormalEval log_normal_eval(const Vec& x, const Vec& mu, const Mat& cov,
                              std::string_view cov_name) {
  check_same_dim(x, mu, cov);
  const int n = static_cast<int>(x.size());
  LogNormalEval out;
  if (n == 1) {
    const double c = cov(0, 0);
    if (!(c > 0.0) || !std::isfinite(c)) {
      throw FactorizationError(name_of(cov_name), "not positive definite");
    }
    const double d = x(0) - mu(0);
    const double r = d / c;
    out.value = -0.5 * d * r - 0.5 * (kLog2Pi + std::log(c));
    out.grad.dx = Vec::Constant(1, -r);
    out.grad.dmu = Vec::Constant(1, r);
    out.grad.dcov = Mat::Constant(1, 1, -0.5 * (1.0 / c - r * r));
    return out;
  }
  check_spd_shape(cov, cov_name);
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw FactorizationError(name_of(cov_name), "not positive definite");
  }
  const Vec d = x - mu;
  const Vec r = llt.solve(d);
  const Mat cov_inv = llt.solve(Mat::Identity(n, n));
  double logdet = 0.0;
  for (int i = 0; i < n; ++i) logdet += std::log(llt.matrixLLT()(i, i));
  logdet *= 2.0;
  out.value = -0.5 * d.dot(r) - 0.5 * (n * kLog2Pi + logdet);
  out.grad.dx = -r;
  out.grad.dmu = r;
  out.grad.dcov = -0.5 * (cov_inv - r * r.transpose());
  return out;
}

double log_normal(const Vec& x, const Vec& mu, const Mat& cov, std::string_view cov_name) {
  return log_normal_eval(x, mu, cov, cov_name).value;
}

LogNormalGrad dlog_normal(const Vec& x, const Vec& mu, const Mat& cov,
                          std::string_view cov_name) {
  return log_normal_eval(x, mu, cov, cov_name).grad;
}

Mat inv_derivative(const Mat& u, const Mat& du) {
  if (u.rows() != u.cols() || du.rows() != u.rows() || du.cols() != u.cols()) {
    throw DimensionError("inv_derivative: shape mismatch");
  }
  Eigen::FullPivLU<Mat> lu(u);
  if (!lu.isInvertible()) {
    throw SingularMatrixError("inv_derivative: matrix is singular");
  }
  const Mat u_inv = lu.inverse();
  return -u_inv * du * u_inv;
}

SymmetricRoot::SymmetricRoot(const Mat& cov, std::string_view cov_name) {
  const int n = static_cast<int>(cov.rows());
  if (n == 1) {
    const double c = cov(0, 0);
    if (!(c > 0.0) || !std::isfinite(c)) {
      throw FactorizationError(name_of(cov_name), "not positive definite");
    }
    sqrt_eigs_ = Vec::Constant(1, std::sqrt(c));
    basis_ = Mat::Identity(1, 1);
    root_ = Mat::Constant(1, 1, sqrt_eigs_(0));
    return;
  }
  check_spd_shape(cov, cov_name);
  Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
  if (eig.info() != Eigen::Success || !(eig.eigenvalues().minCoeff() > 0.0)) {
    throw FactorizationError(name_of(cov_name), "not positive definite");
  }
  basis_ = eig.eigenvectors();
  sqrt_eigs_ = eig.eigenvalues().cwiseSqrt();
  root_ = basis_ * sqrt_eigs_.asDiagonal() * basis_.transpose();
  root_ = 0.5 * (root_ + root_.transpose()).eval();
}

Mat SymmetricRoot::derivative(const Mat& dcov) const {
  const int n = static_cast<int>(root_.rows());
  if (dcov.rows() != n || dcov.cols() != n) {
    throw DimensionError("sqrtm_derivative: shape mismatch");
  }
  if (n == 1) return Mat::Constant(1, 1, dcov(0, 0) / (2.0 * sqrt_eigs_(0)));
  // In the eigenbasis of A the Sylvester equation A dA + dA A = dC decouples.
  Mat rotated = basis_.transpose() * dcov * basis_;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) rotated(i, j) /= sqrt_eigs_(i) + sqrt_eigs_(j);
  }
  return basis_ * rotated * basis_.transpose();
}

Mat spd_sqrt(const Mat& cov, std::string_view cov_name) {
  return SymmetricRoot(cov, cov_name).root();
}

Mat sqrtm_derivative(const Mat& root, const Mat& dcov) {
  if (root.rows() != root.cols()) throw DimensionError("sqrtm_derivative: root not square");
  Eigen::FullPivLU<Mat> lu(root);
  if (!lu.isInvertible()) throw SingularMatrixError("sqrtm_derivative: root is singular");
  // The root's eigenvectors are those of C = AA; its eigenvalues are the roots.
  const Mat sym = 0.5 * (root + root.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(sym);
  const Vec s = eig.eigenvalues();
  const Mat basis = eig.eigenvectors();
  const int n = static_cast<int>(root.rows());
  Mat rotated = basis.transpose() * dcov * basis;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double denom = s(i) + s(j);
      if (denom == 0.0) throw SingularMatrixError("sqrtm_derivative: root is singular");
      rotated(i, j) /= denom;
    }
  }
  return basis * rotated * basis.transpose();
}

}  // namespace gradpf::gauss
