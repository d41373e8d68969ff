#pragma once

#include "ellobst/common.hpp"

#include <Eigen/QR>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cstdint>
#include <random>
#include <vector>

namespace ellobst::quadrature {

struct Rule1d {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre rule with `count` nodes on [-1, 1], Newton iteration on P_n.
inline Rule1d gauss_legendre(int count) {
  if (count < 1) throw InvalidArgument("gauss_legendre: count must be positive");
  Rule1d rule;
  rule.nodes.resize(count);
  rule.weights.resize(count);
  const int half = (count + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (count + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= count; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = count * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // recompute derivative at the converged node
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= count; ++k) {
      const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = pk;
    }
    dp = count * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[count - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[count - 1 - i] = w;
  }
  if (count % 2 == 1) rule.nodes[count / 2] = 0.0;
  return rule;
}

/// Gauss-Legendre rule mapped to [a, b].
inline Rule1d gauss_legendre(int count, double a, double b) {
  Rule1d rule = gauss_legendre(count);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (int i = 0; i < count; ++i) {
    rule.nodes[i] = mid + half * rule.nodes[i];
    rule.weights[i] *= half;
  }
  return rule;
}

struct IntegralEstimate {
  double value = 0.0;
  double error = 0.0;
};

/// Integrates f(s) over [lower, inf) for integrands decaying like s^{-3/2} or faster.
///
/// The map s = lower + scale * (1/(1-t)^2 - 1) sends t in [0, 1) onto the half line and turns
/// an s^{-k/2} tail into a (1-t)^{k-3} factor, which is bounded for k >= 3; the remaining finite
/// interval goes to adaptive Gauss-Kronrod (31 points).
template <class F>
IntegralEstimate integrate_half_line(F&& f, double lower, double scale, double abs_tol = 1e-12) {
  auto mapped = [&](double t) {
    const double w = 1.0 - t;
    if (w <= 0.0) return 0.0;
    const double inv = 1.0 / (w * w);
    const double s = lower + scale * (inv - 1.0);
    return f(s) * scale * 2.0 * inv / w;
  };
  double error = 0.0, l1 = 0.0;
  // Boost's tolerance is relative to the L1 norm; ask for more and check the absolute bound.
  const double value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      mapped, 0.0, 1.0, 18, 1e-14, &error, &l1);
  if (!std::isfinite(value) || error > std::max(abs_tol, 1e-13 * l1))
    throw ConvergenceError("half-line quadrature: error estimate " + std::to_string(error) +
                           " exceeds tolerance " + std::to_string(abs_tol));
  return {value, error};
}

/// Quadrature rule on the unit sphere S^{n-1}: unit directions with positive weights.
struct SphereRule {
  int dim = 0;
  std::vector<Vec> directions;
  std::vector<double> weights;

  std::size_t size() const { return directions.size(); }
};

/// Haar-distributed rotation drawn from `seed`; seed 0 gives the identity.
inline Mat seeded_rotation(int n, std::uint64_t seed) {
  if (seed == 0) return Mat::Identity(n, n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Mat g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ();
  Mat r = qr.matrixQR();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return q;
}

/// Product rule in hyperspherical coordinates.
///
/// Polar angles use Gauss-Legendre in the angle (with the sin^k Jacobian folded into the
/// weights, `resolution` nodes each); the azimuth uses the trapezoid rule with 2*resolution
/// nodes. The node set is invariant under x -> -x, so centrally symmetric integrands of odd
/// parity cancel exactly.
inline SphereRule sphere_rule(int n, int resolution, std::uint64_t seed = 0) {
  if (n < 2 || n > kMaxDim) throw InvalidArgument("sphere_rule: unsupported dimension");
  if (resolution < 2) throw InvalidArgument("sphere_rule: resolution must be >= 2");
  SphereRule rule;
  rule.dim = n;
  const int azimuth_count = 2 * resolution;
  const double dphi = 2.0 * std::numbers::pi / azimuth_count;
  const Rule1d polar = gauss_legendre(resolution, 0.0, std::numbers::pi);
  const Mat rotation = seeded_rotation(n, seed);

  // angles theta_1..theta_{n-2} in [0, pi], phi in [0, 2pi)
  const int polar_levels = n - 2;
  std::vector<int> index(static_cast<std::size_t>(std::max(polar_levels, 0)), 0);
  std::size_t total = azimuth_count;
  for (int l = 0; l < polar_levels; ++l) total *= static_cast<std::size_t>(resolution);
  rule.directions.reserve(total);
  rule.weights.reserve(total);
  for (std::size_t flat = 0; flat < total / azimuth_count; ++flat) {
    std::size_t rem = flat;
    for (int l = 0; l < polar_levels; ++l) {
      index[l] = static_cast<int>(rem % resolution);
      rem /= resolution;
    }
    double sin_prod = 1.0, weight = dphi;
    Vec dir(n);
    for (int l = 0; l < polar_levels; ++l) {
      const double th = polar.nodes[index[l]];
      dir[l] = sin_prod * std::cos(th);
      weight *= polar.weights[index[l]] * std::pow(std::sin(th), n - 2 - l);
      sin_prod *= std::sin(th);
    }
    for (int a = 0; a < azimuth_count; ++a) {
      const double phi = (a + 0.5) * dphi;
      dir[n - 2] = sin_prod * std::cos(phi);
      dir[n - 1] = sin_prod * std::sin(phi);
      rule.directions.push_back(rotation * dir);
      rule.weights.push_back(weight);
    }
  }
  return rule;
}

}  // namespace ellobst::quadrature
