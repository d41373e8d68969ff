#pragma once

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ellobst {

inline constexpr const char* kVersion = "0.3.0";

/// Largest spatial dimension handled anywhere in the library.
inline constexpr int kMaxDim = 4;

/// Point / vector in R^n with n <= kMaxDim; fixed capacity, no heap.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension mismatch, nonpositive lengths, malformed descriptions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Adaptive quadrature or a root finder did not reach its tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

inline Vec make_vec(std::initializer_list<double> values) {
  Vec v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

inline Vec zeros(int n) { return Vec::Zero(n); }

inline Vec unit(int n, int k) {
  Vec v = Vec::Zero(n);
  v[k] = 1.0;
  return v;
}

/// |B_1| in R^n.
inline double unit_ball_volume(int n) {
  return std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

/// |S^{n-1}| = n |B_1|.
inline double unit_sphere_area(int n) { return n * unit_ball_volume(n); }

inline void require_dim(const Vec& x, int n, const char* what) {
  if (x.size() != n)
    throw InvalidArgument(std::string(what) + ": expected dimension " + std::to_string(n) +
                          ", got " + std::to_string(x.size()));
}

}  // namespace ellobst
