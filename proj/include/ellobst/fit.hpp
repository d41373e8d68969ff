#pragma once

#include "ellobst/geometry.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace ellobst {

/// Least-squares quadric x^T A x + b.x = 1 and the axis-aligned ellipsoid read off from it.
struct EllipsoidFit {
  Ellipsoid ellipsoid;
  double residual = 0.0;         ///< RMS of |x^T A x + b.x - 1| over the inputs
  Mat quadratic;                 ///< A (symmetric)
  Vec linear;                    ///< b (zero for the centered fit)
  bool centered = true;          ///< true when the b = 0 model was kept
  double orientation_error = 0;  ///< max over principal directions of 1 - |dominant component|
};

class DegenerateFit : public Error {
 public:
  using Error::Error;
};

namespace detail {

struct QuadricSolve {
  Mat a;
  Vec b;
  double residual;
};

inline QuadricSolve solve_quadric(std::span<const Vec> points, int n, bool with_linear) {
  const int quad_terms = n * (n + 1) / 2;
  const int cols = quad_terms + (with_linear ? n : 0);
  const auto rows = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd design(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vec& x = points[r];
    int c = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) design(r, c++) = (i == j ? 1.0 : 2.0) * x[i] * x[j];
    if (with_linear)
      for (int i = 0; i < n; ++i) design(r, c++) = x[i];
  }
  // column scaling keeps the rank test meaningful for very small or large point clouds
  Eigen::VectorXd scale = design.colwise().norm().transpose();
  for (Eigen::Index c = 0; c < cols; ++c) {
    if (scale[c] == 0.0) throw DegenerateFit("fit_ellipsoid: rank-deficient point set");
    design.col(c) /= scale[c];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < cols) throw DegenerateFit("fit_ellipsoid: rank-deficient point set");
  const Eigen::VectorXd rhs = Eigen::VectorXd::Ones(rows);
  Eigen::VectorXd coeffs = qr.solve(rhs);
  const double rms = std::sqrt((design * coeffs - rhs).squaredNorm() / rows);
  coeffs.array() /= scale.array();

  QuadricSolve out{Mat::Zero(n, n), Vec::Zero(n), rms};
  int c = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      out.a(i, j) = coeffs[c];
      out.a(j, i) = coeffs[c];
      ++c;
    }
  if (with_linear)
    for (int i = 0; i < n; ++i) out.b[i] = coeffs[c++];
  return out;
}

inline EllipsoidFit to_ellipsoid(const QuadricSolve& s, bool centered) {
  const int n = static_cast<int>(s.a.rows());
  Eigen::SelfAdjointEigenSolver<Mat> eig_a(s.a);
  if (eig_a.eigenvalues().minCoeff() <= 0.0)
    throw DegenerateFit("fit_ellipsoid: fitted quadric is not positive definite");
  const Vec center = -0.5 * s.a.ldlt().solve(s.b);
  const double level = 1.0 + center.dot(s.a * center);
  if (!(level > 0.0)) throw DegenerateFit("fit_ellipsoid: fitted quadric has empty interior");

  // map each principal direction to the coordinate axis it is closest to
  Vec axes = Vec::Zero(n);
  double orientation_error = 0.0;
  std::vector<bool> taken(n, false);
  for (int k = 0; k < n; ++k) {
    const Vec v = eig_a.eigenvectors().col(k);
    int best = -1;
    for (int i = 0; i < n; ++i)
      if (!taken[i] && (best < 0 || std::abs(v[i]) > std::abs(v[best]))) best = i;
    taken[best] = true;
    orientation_error = std::max(orientation_error, 1.0 - std::abs(v[best]));
    axes[best] = std::sqrt(level / eig_a.eigenvalues()[k]);
  }
  return EllipsoidFit{Ellipsoid(center, axes), s.residual, s.a, s.b, centered, orientation_error};
}

}  // namespace detail

/// Algebraic ellipsoid fit with normalization "constant term = 1".
///
/// The centered model x^T A x = 1 is tried first; when its residual exceeds
/// `centered_acceptance` the model with a linear term is fitted as well and the better one kept.
inline EllipsoidFit fit_ellipsoid(std::span<const Vec> points, double centered_acceptance = 1e-10) {
  if (points.empty()) throw DegenerateFit("fit_ellipsoid: no points");
  const int n = static_cast<int>(points.front().size());
  for (const auto& p : points) require_dim(p, n, "fit_ellipsoid");
  const std::size_t needed = static_cast<std::size_t>(n * (n + 3) / 2);
  if (points.size() < needed)
    throw DegenerateFit("fit_ellipsoid: need at least " + std::to_string(needed) + " points");

  std::optional<EllipsoidFit> centered;
  try {
    centered = detail::to_ellipsoid(detail::solve_quadric(points, n, false), true);
    if (centered->residual <= centered_acceptance) return *centered;
  } catch (const DegenerateFit&) {
    // fall through to the general model
  }
  try {
    auto general = detail::to_ellipsoid(detail::solve_quadric(points, n, true), false);
    if (!centered || general.residual < centered->residual) return general;
  } catch (const DegenerateFit&) {
    if (!centered) throw;
  }
  return *centered;
}

inline EllipsoidFit fit_ellipsoid(const std::vector<Vec>& points, double centered_acceptance = 1e-10) {
  return fit_ellipsoid(std::span<const Vec>(points.data(), points.size()), centered_acceptance);
}

}  // namespace ellobst
