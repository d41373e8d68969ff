#pragma once

// Numerical experiments for the classification argument: Newton-potential decomposition of
// v = u - x^T Q x, ordering against the rescaled family U_r, first-touch radius with the
// tangent-ball quotients at the contact point, and the end-to-end "K is an ellipsoid" verdict
// for a solved grid field.

#include "ellobst/ellipsoid_solution.hpp"
#include "ellobst/fit.hpp"
#include "ellobst/obstacle_solver.hpp"
#include "ellobst/weighted_centroid.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace ellobst {

using ScalarField = std::function<double(const Vec&)>;

class PreconditionViolation : public Error {
 public:
  using Error::Error;
};

class EmptyMask : public Error {
 public:
  using Error::Error;
};

class MaskTouchesBox : public Error {
 public:
  using Error::Error;
};

/// Central-difference gradient.
inline Vec numeric_gradient(const ScalarField& f, const Vec& x, double step) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec p = x, m = x;
    p[i] += step;
    m[i] -= step;
    g[i] = (f(p) - f(m)) / (2.0 * step);
  }
  return g;
}

//---------------------------------------------------------------------------//
// Decomposition v = v^NP - v^NP(0)
//---------------------------------------------------------------------------//

struct DecompositionReport {
  double max_dev = 0.0;  ///< max |v(x) - (v^NP(x) - v^NP(0))| over probes
  double p0 = 0.0;       ///< v(0) - v^NP(0)
  double grad_p0 = 0.0;  ///< |grad v(0) - grad v^NP(0)|
  double quadrature_error = 0.0;
  std::size_t probes = 0;
};

struct DecompositionOptions {
  int resolution = 48;
  double gradient_step = 1e-4;
};

/// v = u - x^T Q x against the Newton potential of K (polar quadrature). Probes should keep a
/// 2h distance from the boundary of K when u comes from a grid.
inline DecompositionReport verify_decomposition(const ScalarField& u, const QuadraticBlowdown& q, const ConvexBody& k,
                                                const std::vector<Vec>& probes,
                                                const DecompositionOptions& opts = {}) {
  if (k.dim() != q.dim()) throw InvalidArgument("verify_decomposition: dimension mismatch");
  const int n = q.dim();
  const Vec origin = Vec::Zero(n);
  const auto np0 = body_potential(k, origin, opts.resolution);
  DecompositionReport rep;
  rep.quadrature_error = np0.error;
  auto v = [&](const Vec& x) { return u(x) - q(x); };
  rep.p0 = v(origin) - np0.value;
  const Vec grad_v = numeric_gradient(v, origin, opts.gradient_step);
  const double c = PotentialNormalization::for_dimension(n).kernel_constant;
  const Vec grad_np = c * (n - 2) * gravity_residual(k, origin, opts.resolution).value;
  rep.grad_p0 = (grad_v - grad_np).norm();
  for (const auto& x : probes) {
    const auto np = body_potential(k, x, opts.resolution);
    rep.quadrature_error = std::max(rep.quadrature_error, np.error);
    rep.max_dev = std::max(rep.max_dev, std::abs(v(x) - (np.value - np0.value)));
  }
  rep.probes = probes.size();
  return rep;
}

//---------------------------------------------------------------------------//
// Ordering against U_r
//---------------------------------------------------------------------------//

struct ComparisonReport {
  double r = 0.0;
  double min_gap = 0.0;  ///< min of u - U_r over probes outside E_r
  Vec argmin;
  std::size_t probes_used = 0;
  double measure_gap = 0.0;  ///< |E_r| - |K|
  bool strict_expected = false;
};

struct ComparisonOptions {
  int containment_resolution = 24;
  double containment_tolerance = 1e-9;  ///< slack on x^T A x <= 1 for boundary samples of K
  double measure_tolerance = 1e-9;
};

/// Boundary samples of K along a sphere rule about its interior point.
inline std::vector<Vec> boundary_samples(const ConvexBody& k, int resolution) {
  const auto sphere = quadrature::sphere_rule(k.dim(), resolution);
  std::vector<Vec> pts;
  pts.reserve(sphere.size());
  for (const auto& d : sphere.directions) pts.push_back(k.interior_point() + k.radial(d) * d);
  return pts;
}

/// min over probes outside E_r of u - U_r; requires K inside E_r.
inline ComparisonReport comparison_experiment(const ScalarField& u, const EllipsoidSolution& sol, double r,
                                              const ConvexBody& k, const std::vector<Vec>& probes,
                                              const ComparisonOptions& opts = {}) {
  const RescaledSolution ur(sol, r);
  const Ellipsoid er = ur.coincidence_set();
  for (const auto& p : boundary_samples(k, opts.containment_resolution))
    if (quadric_value(er, p) > 1.0 + opts.containment_tolerance)
      throw PreconditionViolation("comparison_experiment: K is not contained in E_r for r = " + std::to_string(r));
  ComparisonReport rep;
  rep.r = r;
  rep.measure_gap = er.volume() - k.volume();
  rep.strict_expected = rep.measure_gap > opts.measure_tolerance;
  rep.min_gap = std::numeric_limits<double>::infinity();
  for (const auto& x : probes) {
    if (contains(er, x)) continue;
    const double gap = u(x) - ur(x);
    ++rep.probes_used;
    if (gap < rep.min_gap) {
      rep.min_gap = gap;
      rep.argmin = x;
    }
  }
  if (rep.probes_used == 0) throw InvalidArgument("comparison_experiment: no probe lies outside E_r");
  return rep;
}

/// Points outside E at the given offsets along the outward normals of a sphere-rule sample.
inline std::vector<Vec> exterior_probes(const Ellipsoid& e, const std::vector<double>& offsets, int resolution = 8,
                                        std::uint64_t seed = 0) {
  const auto sphere = quadrature::sphere_rule(e.dim(), resolution, seed);
  std::vector<Vec> out;
  for (const auto& d : sphere.directions) {
    const Vec b = boundary_point(e, d);
    Vec normal = ((b - e.center()).array() / e.semi_axes().array().square()).matrix();
    normal.normalize();
    for (double t : offsets) out.push_back(b + t * normal);
  }
  return out;
}

//---------------------------------------------------------------------------//
// First touch
//---------------------------------------------------------------------------//

struct TouchingResult {
  double r0 = 0.0;
  Vec x_touch;
  double max_quadric = 0.0;  ///< max over K of x^T A x
};

/// r0 = (max_K x^T A x)^{-1/2}: K lies in E_r exactly for r <= r0.
/// Boundary samples are refined by a shrinking pattern search over directions.
inline TouchingResult find_touching_radius(const ConvexBody& k, const Ellipsoid& e, int resolution = 32) {
  if (!e.is_centered()) throw InvalidArgument("find_touching_radius: E must be centered");
  if (k.dim() != e.dim()) throw InvalidArgument("find_touching_radius: dimension mismatch");
  const auto sphere = quadrature::sphere_rule(k.dim(), resolution);
  auto value_at = [&](const Vec& d) {
    const Vec p = k.interior_point() + k.radial(d) * d;
    return std::make_pair(quadric_value(e, p), p);
  };
  Vec best_dir = sphere.directions.front();
  auto best = value_at(best_dir);
  for (const auto& d : sphere.directions) {
    const auto v = value_at(d);
    if (v.first > best.first) {
      best = v;
      best_dir = d;
    }
  }
  for (double step = 0.05; step > 1e-9; step *= 0.5) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (int i = 0; i < k.dim(); ++i)
        for (double sgn : {-1.0, 1.0}) {
          Vec d = best_dir;
          d[i] += sgn * step;
          d.normalize();
          const auto v = value_at(d);
          if (v.first > best.first) {
            best = v;
            best_dir = d;
            improved = true;
          }
        }
    }
  }
  if (!(best.first > 0.0)) throw InvalidArgument("find_touching_radius: empty body");
  return {1.0 / std::sqrt(best.first), best.second, best.first};
}

/// Mask version: the maximum runs over mask nodes.
inline TouchingResult find_touching_radius(const GridSpec& spec, const std::vector<std::uint8_t>& mask,
                                           const Ellipsoid& e) {
  if (!e.is_centered()) throw InvalidArgument("find_touching_radius: E must be centered");
  if (spec.dim() != e.dim()) throw InvalidArgument("find_touching_radius: dimension mismatch");
  TouchingResult out;
  bool any = false;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const Vec x = spec.node(i);
    const double v = quadric_value(e, x);
    if (!any || v > out.max_quadric) {
      out.max_quadric = v;
      out.x_touch = x;
      any = true;
    }
  }
  if (!any) throw EmptyMask("find_touching_radius: empty mask");
  if (!(out.max_quadric > 0.0)) throw InvalidArgument("find_touching_radius: mask reduces to the origin");
  out.r0 = 1.0 / std::sqrt(out.max_quadric);
  return out;
}

//---------------------------------------------------------------------------//
// Contact point
//---------------------------------------------------------------------------//

enum class TouchVerdict {
  Coincident,         ///< u = U_{r0} outside E_{r0} within noise: K = E_{r0}
  FlatContradiction,  ///< strict ordering outside but zero normal slope: impossible for true solutions
  OrderingViolated,   ///< u < U_{r0} somewhere outside E_{r0}: the pair is not ordered
  HopfSlope,          ///< strict ordering with a normal slope beyond noise
};

inline const char* to_string(TouchVerdict v) {
  switch (v) {
    case TouchVerdict::Coincident: return "K = E_r0";
    case TouchVerdict::FlatContradiction: return "ordering + Hopf contradiction: K != E_r0 impossible for true solutions";
    case TouchVerdict::OrderingViolated: return "ordering violated: not a comparable pair of solutions";
    case TouchVerdict::HopfSlope: return "strict ordering with nonzero normal slope";
  }
  return "unknown";
}

struct TouchReport {
  double r0 = 0.0;
  Vec x_touch;
  double min_gap_outside = 0.0;
  double grad_u_at_touch = 0.0;
  double grad_U_at_touch = 0.0;
  std::vector<double> quotients;  ///< (u - U_{r0})(x + t nu) / t for t = h, 2h, 4h
  double hopf_slope = 0.0;        ///< linear extrapolation of the quotients to t = 0
  double slope_noise = 0.0;       ///< 10 h_probe
  double gap_noise = 0.0;
  TouchVerdict verdict = TouchVerdict::Coincident;
};

struct TouchOptions {
  double gap_noise = 1e-9;
  double collar = 0.0;                  ///< probes within this distance of x_touch are skipped; 0 means 4 h
  double boundary_tolerance = 1e-6;     ///< |x^T A_{r0} x - 1| allowed for x_touch
  std::vector<Vec> probes;              ///< exterior probes; empty means a default shell family
};

/// Quotients of u - U_{r0} along nu, the outward normal of E_{r0} (the inward normal of the
/// exterior tangent ball), gradients at the contact, and the ordering gap away from it.
inline TouchReport hopf_check(const ScalarField& u, const EllipsoidSolution& sol, double r0, const Vec& x_touch,
                              double h_probe, const TouchOptions& opts = {}) {
  if (!(h_probe > 0.0)) throw InvalidArgument("hopf_check: h_probe must be positive");
  const RescaledSolution ur(sol, r0);
  const Ellipsoid er = ur.coincidence_set();
  if (std::abs(quadric_value(er, x_touch) - 1.0) > opts.boundary_tolerance)
    throw InvalidArgument("hopf_check: x_touch is not on the boundary of E_r0");
  TouchReport rep;
  rep.r0 = r0;
  rep.x_touch = x_touch;
  rep.slope_noise = 10.0 * h_probe;
  rep.gap_noise = opts.gap_noise;
  auto w = [&](const Vec& x) { return u(x) - ur(x); };
  rep.grad_u_at_touch = numeric_gradient(u, x_touch, h_probe).norm();
  rep.grad_U_at_touch = ur.gradient(x_touch).norm();

  Vec nu = (x_touch.array() / er.semi_axes().array().square()).matrix();
  nu.normalize();
  const double w0 = w(x_touch);
  std::vector<double> ts;
  for (double t : {h_probe, 2 * h_probe, 4 * h_probe}) {
    ts.push_back(t);
    rep.quotients.push_back((w(Vec(x_touch + t * nu)) - w0) / t);
  }
  // least-squares line through (t, quotient), evaluated at t = 0
  double mt = 0, mq = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    mt += ts[i] / ts.size();
    mq += rep.quotients[i] / ts.size();
  }
  double num = 0, den = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    num += (ts[i] - mt) * (rep.quotients[i] - mq);
    den += (ts[i] - mt) * (ts[i] - mt);
  }
  rep.hopf_slope = mq - (num / den) * mt;

  const double collar = opts.collar > 0.0 ? opts.collar : 4.0 * h_probe;
  const auto probes = opts.probes.empty() ? exterior_probes(er, {2 * h_probe, 0.1, 0.25, 0.5}, 12) : opts.probes;
  rep.min_gap_outside = std::numeric_limits<double>::infinity();
  for (const auto& x : probes) {
    if (contains(er, x) || (x - x_touch).norm() < collar) continue;
    rep.min_gap_outside = std::min(rep.min_gap_outside, w(x));
  }
  const bool flat = std::abs(rep.hopf_slope) <= rep.slope_noise;
  if (rep.min_gap_outside < -rep.gap_noise) rep.verdict = TouchVerdict::OrderingViolated;
  else if (rep.min_gap_outside <= rep.gap_noise) rep.verdict = flat ? TouchVerdict::Coincident : TouchVerdict::HopfSlope;
  else rep.verdict = flat ? TouchVerdict::FlatContradiction : TouchVerdict::HopfSlope;
  return rep;
}

//---------------------------------------------------------------------------//
// Grid pipeline
//---------------------------------------------------------------------------//

/// Convex body {interpolated u < h^2/4} cut out by the coincidence mask of a solved field.
inline ConvexBody mask_body(const GridField& field, const std::vector<std::uint8_t>& mask) {
  const auto& spec = field.spec();
  if (spec.dim() < 3) throw InvalidArgument("mask_body: the pipeline needs n >= 3");
  Vec mean = Vec::Zero(spec.dim());
  double radius = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const Vec x = spec.node(i);
    mean += x;
    radius = std::max(radius, x.norm());
    ++count;
  }
  if (count == 0) throw EmptyMask("mask_body: empty coincidence mask");
  mean /= static_cast<double>(count);
  const double h = spec.spacing();
  const double threshold = 0.25 * h * h;
  const double box = spec.box_radius();
  auto member = [&field, threshold, box](const Vec& x) {
    return x.cwiseAbs().maxCoeff() <= box && field.interpolate(x) < threshold;
  };
  // the mean of the mask nodes may miss the interpolated set only for degenerate masks
  Vec interior = mean;
  if (!member(interior)) {
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) {
        interior = spec.node(i);
        break;
      }
  }
  ConvexBody body(spec.dim(), member, radius + 2.0 * h, interior, std::nullopt, {}, "mask");
  body.set_march_step(0.25 * h);
  return body;
}

inline bool mask_touches_box(const GridSpec& spec, const std::vector<std::uint8_t>& mask) {
  const int m = spec.points_per_axis();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const auto idx = spec.index(i);
    for (int k = 0; k < spec.dim(); ++k)
      if (idx[k] <= 1 || idx[k] >= m - 2) return true;
  }
  return false;
}

/// Free-boundary points near the mask: every non-mask neighbour x of a mask node is moved to
/// x - sqrt(2 u) grad u / |grad u|, using u ~ dist^2 / 2 off the free boundary.
inline std::vector<Vec> refined_boundary_points(const GridField& field, const std::vector<std::uint8_t>& mask) {
  const auto& spec = field.spec();
  const double h = spec.spacing();
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::vector<Vec> pts;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    for (int k = 0; k < spec.dim(); ++k)
      for (int sgn : {-1, 1}) {
        const std::size_t j = sgn > 0 ? i + spec.stride(k) : i - spec.stride(k);
        if (mask[j] || seen[j] || spec.on_boundary(j)) continue;
        seen[j] = 1;
        Vec grad(spec.dim());
        for (int a = 0; a < spec.dim(); ++a)
          grad[a] = (field[j + spec.stride(a)] - field[j - spec.stride(a)]) / (2.0 * h);
        const double u = field[j];
        const double gn = grad.norm();
        if (!std::isfinite(u) || !std::isfinite(gn) || !(gn > 0.0) || u < 0.0) continue;
        const Vec p = spec.node(j) - std::sqrt(2.0 * u) * grad / gn;
        if (p.allFinite()) pts.push_back(p);
      }
  }
  return pts;
}

struct VerdictReport {
  EllipsoidFit fit;
  Vec centroid{};               ///< weighted centroid of the mask body
  Vec expected_axes{};          ///< axes_from_blowdown(Q), product 1
  double scale = 1.0;           ///< (prod fitted axes)^{1/n}
  double axis_mismatch = 0.0;   ///< max |fitted - scale * expected|
  double absolute_mismatch = 0.0;  ///< max |fitted - expected|
  double hausdorff = 0.0;       ///< max distance of refined boundary points to the fitted ellipsoid
  double mask_hausdorff = 0.0;  ///< Hausdorff proxy between mask nodes and the fitted ellipsoid
  std::size_t boundary_points = 0;
  CentroidResult centroid_result{};
};

struct VerdictOptions {
  CentroidOptions centroid{1e-6, 24, 0, 500, 50, std::ldexp(1.0, -20)};
};

/// mask -> weighted centroid -> translate -> refined boundary points -> ellipsoid fit -> compare.
inline VerdictReport verify_ellipsoid_verdict(const GridField& field, const QuadraticBlowdown& q,
                                              const VerdictOptions& opts = {}) {
  const auto& spec = field.spec();
  if (spec.dim() != q.dim()) throw InvalidArgument("verify_ellipsoid_verdict: dimension mismatch");
  const auto mask = coincidence_mask(field);
  if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t v) { return v != 0; }))
    throw EmptyMask("verify_ellipsoid_verdict: the coincidence mask is empty");
  if (mask_touches_box(spec, mask))
    throw MaskTouchesBox("verify_ellipsoid_verdict: the coincidence mask reaches the box boundary");

  const auto body = mask_body(field, mask);
  auto centroid = weighted_centroid(body, opts.centroid);
  auto pts = refined_boundary_points(field, mask);
  for (auto& p : pts) p -= centroid.x0;

  VerdictReport rep{.fit = fit_ellipsoid(pts)};
  rep.centroid = centroid.x0;
  rep.centroid_result = std::move(centroid);
  rep.boundary_points = pts.size();
  rep.expected_axes = axes_from_blowdown(q);
  const Vec& fitted = rep.fit.ellipsoid.semi_axes();
  rep.scale = std::pow(fitted.prod(), 1.0 / q.dim());
  rep.axis_mismatch = (fitted - rep.scale * rep.expected_axes).cwiseAbs().maxCoeff();
  rep.absolute_mismatch = (fitted - rep.expected_axes).cwiseAbs().maxCoeff();
  const Ellipsoid fitted_in_grid = rep.fit.ellipsoid.translated(rep.centroid);
  for (const auto& p : pts) rep.hausdorff = std::max(rep.hausdorff, boundary_distance(rep.fit.ellipsoid, p));
  rep.mask_hausdorff = compare_mask(spec, mask, fitted_in_grid).hausdorff;
  return rep;
}

}  // namespace ellobst
