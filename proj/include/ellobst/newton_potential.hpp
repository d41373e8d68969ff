#pragma once

// Newton potentials NP(x) = c(n) * int_K |x - y|^{2-n} dy, normalized so that Laplacian NP = -1 on K.
//
// Ellipsoids use the classical one-dimensional representation in the confocal parameter s:
//   NP(x) = (prod a_j / 4) * int_{lambda(x)}^inf (1 - sum x_i^2 / (a_i^2 + s)) ds / D(s),
//   D(s) = prod (a_j^2 + s)^{1/2},
// with lambda(x) the ellipsoidal coordinate (0 inside). General convex bodies use polar
// quadrature (see body_potential).

#include "ellobst/geometry.hpp"

#include <algorithm>

namespace ellobst {

/// c(n) = 1 / (n (n-2) |B_1|).
struct PotentialNormalization {
  int dim = 3;
  double kernel_constant = 0.0;

  static PotentialNormalization for_dimension(int n) {
    if (n < 3 || n > kMaxDim)
      throw InvalidArgument("Newton potential requires 3 <= n <= 4, got " + std::to_string(n));
    return {n, 1.0 / (n * (n - 2.0) * unit_ball_volume(n))};
  }

  /// |x|^{2-n} written without pow for the common dimensions.
  double kernel(double distance_squared) const {
    switch (dim) {
      case 3: return 1.0 / std::sqrt(distance_squared);
      case 4: return 1.0 / distance_squared;
      default: return std::pow(distance_squared, 0.5 * (2 - dim));
    }
  }
};

/// Coefficients of -sum kappa_i x_i^2 in the interior potential of a centered ellipsoid.
struct InteriorCoefficients {
  Vec kappa;
};

namespace detail {

inline void check_axes(const Vec& axes) {
  PotentialNormalization::for_dimension(static_cast<int>(axes.size()));
  for (Eigen::Index i = 0; i < axes.size(); ++i)
    if (!(axes[i] > 0.0) || !std::isfinite(axes[i]))
      throw InvalidArgument("Newton potential: semi-axes must be positive");
}

inline double confocal_volume(const Vec& axes, double s) {
  double d = 1.0;
  for (Eigen::Index i = 0; i < axes.size(); ++i) d *= axes[i] * axes[i] + s;
  return std::sqrt(d);
}

}  // namespace detail

/// Integral of ds / ((a_i^2 + s) D(s)) over [lower, inf), scaled by prod a / 4.
inline Vec confocal_integrals(const Vec& axes, double lower = 0.0, double abs_tol = 1e-12) {
  detail::check_axes(axes);
  const double amin2 = axes.minCoeff() * axes.minCoeff();
  const double pref = 0.25 * axes.prod();
  Vec out(axes.size());
  for (Eigen::Index i = 0; i < axes.size(); ++i) {
    const double ai2 = axes[i] * axes[i];
    auto f = [&](double s) { return pref / ((ai2 + s) * detail::confocal_volume(axes, s)); };
    out[i] = quadrature::integrate_half_line(f, lower, amin2 + lower, abs_tol).value;
  }
  return out;
}

inline InteriorCoefficients kappa_coefficients(const Vec& axes, double abs_tol = 1e-12) {
  return {confocal_integrals(axes, 0.0, abs_tol)};
}

/// Largest root lambda of sum x_i^2 / (a_i^2 + lambda) = 1; zero for x in the closed ellipsoid.
inline double ellipsoidal_coordinate(const Vec& axes, const Vec& x) {
  require_dim(x, static_cast<int>(axes.size()), "ellipsoidal_coordinate");
  auto f = [&](double lam) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < axes.size(); ++i) s += x[i] * x[i] / (axes[i] * axes[i] + lam);
    return s - 1.0;
  };
  auto df = [&](double lam) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < axes.size(); ++i) {
      const double d = axes[i] * axes[i] + lam;
      s -= x[i] * x[i] / (d * d);
    }
    return s;
  };
  if (f(0.0) <= 0.0) return 0.0;
  // f is strictly decreasing on [0, inf) and f(|x|^2) < 0
  double lo = 0.0, hi = x.squaredNorm();
  while (hi - lo > 1e-3 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  double lam = 0.5 * (lo + hi);
  for (int it = 0; it < 50; ++it) {
    const double fv = f(lam);
    if (fv == 0.0) break;
    (fv > 0.0 ? lo : hi) = lam;
    double next = lam - fv / df(lam);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = std::abs(next - lam);
    lam = next;
    if (step <= 1e-13 * std::max(1.0, lam)) break;
  }
  return lam;
}

/// NP(0) for the centered ellipsoid with the given semi-axes.
inline double ellipsoid_potential_at_origin(const Vec& axes, double abs_tol = 1e-12) {
  detail::check_axes(axes);
  const double amin2 = axes.minCoeff() * axes.minCoeff();
  const double pref = 0.25 * axes.prod();
  auto f = [&](double s) { return pref / detail::confocal_volume(axes, s); };
  return quadrature::integrate_half_line(f, 0.0, amin2, abs_tol).value;
}

/// Newton potential of the centered ellipsoid, interior and exterior branches.
inline double ellipsoid_potential(const Vec& axes, const Vec& x, double abs_tol = 1e-12) {
  detail::check_axes(axes);
  const double lam = ellipsoidal_coordinate(axes, x);
  if (lam == 0.0) {
    const Vec kappa = kappa_coefficients(axes, abs_tol).kappa;
    return ellipsoid_potential_at_origin(axes, abs_tol) - (kappa.array() * x.array().square()).sum();
  }
  const double amin2 = axes.minCoeff() * axes.minCoeff();
  const double pref = 0.25 * axes.prod();
  auto f = [&](double s) {
    double q = 0.0;
    for (Eigen::Index i = 0; i < axes.size(); ++i) q += x[i] * x[i] / (axes[i] * axes[i] + s);
    return pref * (1.0 - q) / detail::confocal_volume(axes, s);
  };
  return quadrature::integrate_half_line(f, lam, amin2 + lam, abs_tol).value;
}

/// Gradient of ellipsoid_potential: -2 x_i * (prod a / 4) int_lambda^inf ds / ((a_i^2+s) D(s)).
inline Vec ellipsoid_potential_gradient(const Vec& axes, const Vec& x, double abs_tol = 1e-12) {
  detail::check_axes(axes);
  const double lam = ellipsoidal_coordinate(axes, x);
  const Vec integrals = confocal_integrals(axes, lam, abs_tol);
  return -2.0 * integrals.cwiseProduct(x);
}

//---------------------------------------------------------------------------//
// Potentials of general convex bodies
//---------------------------------------------------------------------------//

struct PotentialEstimate {
  double value = 0.0;
  double error = 0.0;  ///< |value(resolution) - value(resolution / 2)|
};

class ResolutionTooCoarse : public Error {
 public:
  using Error::Error;
};

namespace detail {

// Inside the body the rays from x sweep it exactly once, and the kernel times the polar Jacobian
// is r^{2-n} r^{n-1} = r, so each ray contributes t_out^2 / 2 with no singular integrand.
inline double polar_potential(const ConvexBody& body, const Vec& x, int resolution,
                              const PotentialNormalization& norm) {
  const auto sphere = quadrature::sphere_rule(body.dim(), resolution);
  const auto chords = chords_from(body, x, sphere);
  double sum = 0.0;
  for (std::size_t k = 0; k < chords.size(); ++k)
    sum += sphere.weights[k] * 0.5 * (chords[k].t_out * chords[k].t_out - chords[k].t_in * chords[k].t_in);
  return norm.kernel_constant * sum;
}

inline double sampled_potential(const ConvexBody& body, const Vec& x, int resolution,
                                const PotentialNormalization& norm) {
  const auto q = body.sample(resolution);
  double sum = 0.0;
  for (std::size_t k = 0; k < q.nodes.size(); ++k)
    sum += q.weights[k] * norm.kernel((q.nodes[k] - x).squaredNorm());
  return norm.kernel_constant * sum;
}

}  // namespace detail

/// Newton potential of a convex body with a quadrature error estimate.
///
/// For x in the body the integral is taken in polar coordinates about x, which cancels the
/// kernel singularity exactly; outside, the body's own polar sampler is used.
inline PotentialEstimate body_potential(const ConvexBody& body, const Vec& x, int resolution = 48) {
  require_dim(x, body.dim(), "body_potential");
  const auto norm = PotentialNormalization::for_dimension(body.dim());
  if (resolution < 4) throw InvalidArgument("body_potential: resolution must be >= 4");
  const bool inside = body.contains(x);
  auto eval = [&](int res) {
    return inside ? detail::polar_potential(body, x, res, norm)
                  : detail::sampled_potential(body, x, res, norm);
  };
  const double fine = eval(resolution);
  const double coarse = eval(resolution / 2);
  return {fine, std::abs(fine - coarse)};
}

/// As above, but raises when the error estimate exceeds `tolerance`.
inline double body_potential(const ConvexBody& body, const Vec& x, int resolution, double tolerance) {
  const auto est = body_potential(body, x, resolution);
  if (est.error > tolerance)
    throw ResolutionTooCoarse("body_potential: error estimate " + std::to_string(est.error) +
                              " exceeds tolerance " + std::to_string(tolerance) +
                              " at resolution " + std::to_string(resolution));
  return est.value;
}

}  // namespace ellobst
