#pragma once

// The weighted centroid x0 of a convex body K: the point where
//   F(x) = int_K (y - x) / |y - x|^n dy
// vanishes, reached through the fixed points of
//   T^eps(x) = int_K y |y - x|^{eps-n} dy / int_K |y - x|^{eps-n} dy
// as eps -> 0.
//
// All integrals are taken in polar coordinates about x. Along a ray x + t theta the kernels
// times the Jacobian t^{n-1} are powers of t, so the radial integrals over each chord are exact
// and the singularity at y = x never reaches the quadrature.

#include "ellobst/geometry.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace ellobst {

class MembershipViolation : public Error {
 public:
  using Error::Error;
};

struct EpsilonLevel {
  double epsilon = 0.0;
  Vec fixed_point;
  int iterations = 0;
  bool newton = true;  ///< false when the damped fixed-point iteration was needed
};

struct CentroidResult {
  Vec x0;
  std::vector<EpsilonLevel> epsilon_trace;
  double residual = 0.0;     ///< |F(x0)|
  double residual_error = 0.0;
  bool schedule_monotone = true;  ///< |x^eps - x0| decreasing over the last three levels
  int resolution = 0;
  std::uint64_t seed = 0;
};

struct CentroidOptions {
  double tol = 1e-8;
  int resolution = 64;
  std::uint64_t seed = 0;
  int max_fixed_point_iterations = 500;
  int damping_after = 50;
  double min_epsilon = std::ldexp(1.0, -20);
};

namespace detail {

// (t_out^e - t_in^e) / e, continuous as e -> 0 (log ratio) and for t_in = 0 (t_out^e / e)
inline double power_difference_over(double t_in, double t_out, double e) {
  if (t_in <= 0.0) return std::pow(t_out, e) / e;
  return std::exp(e * std::log(t_in)) * std::expm1(e * std::log(t_out / t_in)) / e;
}

struct PolarSums {
  Vec first;          ///< sum w theta (t_out^{1+e} - t_in^{1+e}) / (1+e)
  double zeroth = 0;  ///< sum w (t_out^e - t_in^e) / e
};

inline PolarSums polar_sums(const ConvexBody& body, const Vec& x, double eps, const quadrature::SphereRule& sphere,
                            bool with_zeroth) {
  PolarSums s{Vec::Zero(body.dim()), 0.0};
  for (std::size_t k = 0; k < sphere.size(); ++k) {
    const auto c = body.chord(x, sphere.directions[k]);
    if (!c) continue;
    const double w = sphere.weights[k];
    const double radial = eps == 0.0 ? c->t_out - c->t_in
                                     : (std::pow(c->t_out, 1.0 + eps) - std::pow(c->t_in, 1.0 + eps)) / (1.0 + eps);
    s.first += w * radial * sphere.directions[k];
    if (with_zeroth) s.zeroth += w * power_difference_over(c->t_in, c->t_out, eps);
  }
  return s;
}

}  // namespace detail

/// T^eps(x) by polar quadrature about x. Each ray contributes the exact weighted mean of its
/// chord, so the result is a convex combination of points of K.
inline Vec t_epsilon(const ConvexBody& body, const Vec& x, double eps, int resolution = 64,
                     std::uint64_t seed = 0) {
  require_dim(x, body.dim(), "t_epsilon");
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("t_epsilon: eps must lie in (0, 1)");
  if (x.norm() > body.bounding_radius() * (1.0 + 1e-12))
    throw InvalidArgument("t_epsilon: x must lie in the bounding ball");
  const auto sphere = quadrature::sphere_rule(body.dim(), resolution, seed);
  const auto s = detail::polar_sums(body, x, eps, sphere, true);
  if (!(s.zeroth > 0.0)) throw ConvergenceError("t_epsilon: no quadrature ray meets the body");
  return x + s.first / s.zeroth;
}

struct GravityEstimate {
  Vec value;
  double error = 0.0;  ///< |F(resolution) - F(resolution / 2)|
};

/// F(x) = int_K (y - x) / |y - x|^n dy with a refinement error estimate.
inline GravityEstimate gravity_residual(const ConvexBody& body, const Vec& x, int resolution = 64,
                                        std::uint64_t seed = 0) {
  require_dim(x, body.dim(), "gravity_residual");
  auto eval = [&](int res) {
    return detail::polar_sums(body, x, 0.0, quadrature::sphere_rule(body.dim(), res, seed), false).first;
  };
  const Vec fine = eval(resolution);
  const Vec coarse = eval(std::max(2, resolution / 2));
  return {fine, (fine - coarse).norm()};
}

namespace detail {

// Newton with a forward-difference Jacobian and step halving on |G|; G(x) must stay defined
// on the bounding ball. Returns false when no decrease can be found.
template <class G>
bool newton_root(const G& g, Vec& x, double step_tol, double radius, int max_iterations, int& iterations) {
  const int n = static_cast<int>(x.size());
  Vec gx = g(x);
  for (iterations = 0; iterations < max_iterations; ++iterations) {
    const double fd = 1e-6 * std::max(1.0, radius);
    Mat jac(n, n);
    for (int j = 0; j < n; ++j) {
      Vec xp = x;
      xp[j] += fd;
      jac.col(j) = (g(xp) - gx) / fd;
    }
    const Vec step = jac.fullPivLu().solve(Vec(-gx));
    if (!step.allFinite()) return false;
    double damping = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 20; ++halving, damping *= 0.5) {
      const Vec trial = x + damping * step;
      if (trial.norm() > radius) continue;
      const Vec gt = g(trial);
      if (gt.norm() < gx.norm() || (damping * step).norm() <= step_tol) {
        x = trial;
        gx = gt;
        accepted = true;
        break;
      }
    }
    if (!accepted) return false;
    if ((damping * step).norm() <= step_tol) {
      ++iterations;
      return true;
    }
  }
  return false;
}

}  // namespace detail

/// Weighted centroid by the eps -> 0 continuation of the fixed points of T^eps.
///
/// Each level eps_k = 2^{-k} solves T^eps(x) = x by Newton from the previous fixed point, falling
/// back to the damped iteration x <- x + gamma (T^eps(x) - x) if Newton stalls. The schedule stops
/// once consecutive fixed points differ by less than tol (or eps < min_epsilon); x0 is then the
/// root of the eps = 0 limit F, polished from the last fixed point.
inline CentroidResult weighted_centroid(const ConvexBody& body, const CentroidOptions& opts = {}) {
  if (!(opts.tol > 0.0)) throw InvalidArgument("weighted_centroid: tol must be positive");
  const auto sphere = quadrature::sphere_rule(body.dim(), opts.resolution, opts.seed);
  const double radius = body.bounding_radius();
  const double step_tol = 1e-3 * opts.tol;

  CentroidResult out;
  out.resolution = opts.resolution;
  out.seed = opts.seed;
  Vec x = body.interior_point();
  Vec previous = x;
  for (int k = 1;; ++k) {
    const double eps = std::ldexp(1.0, -k);
    if (eps < opts.min_epsilon) break;
    // zeros of the first polar sum are exactly the fixed points of T^eps
    auto phi = [&](const Vec& p) { return detail::polar_sums(body, p, eps, sphere, false).first; };
    EpsilonLevel level{eps, x, 0, true};
    Vec candidate = x;
    if (!detail::newton_root(phi, candidate, step_tol, radius, 50, level.iterations)) {
      level.newton = false;
      candidate = x;
      for (int it = 1; it <= opts.max_fixed_point_iterations; ++it) {
        const auto s = detail::polar_sums(body, candidate, eps, sphere, true);
        const double gamma = it > opts.damping_after ? 0.5 : 1.0;
        const Vec move = gamma * s.first / s.zeroth;
        candidate += move;
        level.iterations = it;
        if (move.norm() <= step_tol) break;
      }
    }
    x = candidate;
    level.fixed_point = x;
    out.epsilon_trace.push_back(level);
    if (k > 1 && (x - previous).norm() < opts.tol) break;
    previous = x;
  }

  auto gravity = [&](const Vec& p) { return detail::polar_sums(body, p, 0.0, sphere, false).first; };
  int iterations = 0;
  Vec x0 = x;
  if (!detail::newton_root(gravity, x0, step_tol, radius, 50, iterations))
    throw ConvergenceError("weighted_centroid: Newton iteration on F did not converge");
  if (!body.contains(x0))
    throw MembershipViolation("weighted_centroid: the centroid lies outside the body, which contradicts convexity");

  out.x0 = x0;
  const auto est = gravity_residual(body, x0, opts.resolution, opts.seed);
  out.residual = est.value.norm();
  out.residual_error = est.error;
  const auto& tr = out.epsilon_trace;
  if (tr.size() >= 3) {
    const std::size_t m = tr.size();
    const double d1 = (tr[m - 3].fixed_point - x0).norm(), d2 = (tr[m - 2].fixed_point - x0).norm(),
                 d3 = (tr[m - 1].fixed_point - x0).norm();
    out.schedule_monotone = d1 >= d2 && d2 >= d3;
  }
  return out;
}

}  // namespace ellobst
