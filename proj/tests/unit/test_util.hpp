#pragma once

#include <functional>
#include <random>

#include "gradpf/types.hpp"

namespace testutil {

using gradpf::Mat;
using gradpf::Vec;

inline Vec random_vec(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

inline Mat random_mat(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = nd(rng);
  return m;
}

inline Mat random_spd(int n, std::mt19937_64& rng) {
  const Mat a = random_mat(n, n, rng);
  Mat s = a * a.transpose() + 0.5 * Mat::Identity(n, n);
  return 0.5 * (s + s.transpose());
}

inline Mat random_sym(int n, std::mt19937_64& rng) {
  const Mat a = random_mat(n, n, rng);
  return 0.5 * (a + a.transpose());
}

// Central difference of a scalar function of one real.
inline double fd(const std::function<double(double)>& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline Mat fd_mat(const std::function<Mat(double)>& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// |a - b| <= tol * max(|b|, floor).
inline bool close(double a, double b, double tol, double floor = 1.0) {
  return std::abs(a - b) <= tol * std::max(std::abs(b), floor);
}

inline bool close(const Mat& a, const Mat& b, double tol, double floor = 1.0) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  const double scale = std::max(b.cwiseAbs().maxCoeff(), floor);
  return (a - b).cwiseAbs().maxCoeff() <= tol * scale;
}

}  // namespace testutil
