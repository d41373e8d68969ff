#pragma once

// Ellipsoids, quadratic blow-downs and convex bodies.

#include "ellobst/common.hpp"
#include "ellobst/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace ellobst {

//---------------------------------------------------------------------------//
// Ellipsoid
//---------------------------------------------------------------------------//

/// Axis-aligned ellipsoid {x : sum (x_i - c_i)^2 / a_i^2 <= 1}.
class Ellipsoid {
 public:
  explicit Ellipsoid(Vec semi_axes) : Ellipsoid(Vec::Zero(semi_axes.size()), std::move(semi_axes)) {}

  Ellipsoid(Vec center, Vec semi_axes) : center_(std::move(center)), axes_(std::move(semi_axes)) {
    const auto n = axes_.size();
    if (n < 3 || n > kMaxDim)
      throw InvalidArgument("Ellipsoid: dimension must be 3 or 4, got " + std::to_string(n));
    require_dim(center_, static_cast<int>(n), "Ellipsoid center");
    for (Eigen::Index i = 0; i < n; ++i)
      if (!(axes_[i] > 0.0) || !std::isfinite(axes_[i]))
        throw InvalidArgument("Ellipsoid: semi-axes must be positive and finite");
  }

  int dim() const { return static_cast<int>(axes_.size()); }
  const Vec& center() const { return center_; }
  const Vec& semi_axes() const { return axes_; }
  bool is_centered() const { return center_.isZero(0.0); }

  double volume() const { return unit_ball_volume(dim()) * axes_.prod(); }

  /// Diagonal of A in x^T A x <= 1.
  Vec shape_diagonal() const { return axes_.array().square().inverse().matrix(); }

  Ellipsoid translated(const Vec& t) const { return Ellipsoid(center_ + t, axes_); }

  friend bool operator==(const Ellipsoid& a, const Ellipsoid& b) {
    return a.center_ == b.center_ && a.axes_ == b.axes_;
  }

 private:
  Vec center_;
  Vec axes_;
};

/// Sum of squared scaled offsets from the center; equals 1 on the boundary.
inline double quadric_value(const Ellipsoid& e, const Vec& x) {
  require_dim(x, e.dim(), "quadric_value");
  return ((x - e.center()).array() / e.semi_axes().array()).square().sum();
}

inline bool contains(const Ellipsoid& e, const Vec& x) {
  require_dim(x, e.dim(), "contains");
  return quadric_value(e, x) <= 1.0;
}

/// The member (1/r) E of the rescaled family; E must be centered.
inline Ellipsoid scale(const Ellipsoid& e, double r) {
  if (!(r > 0.0) || !std::isfinite(r)) throw InvalidArgument("scale: r must be positive");
  if (!e.is_centered()) throw InvalidArgument("scale: ellipsoid must be centered at the origin");
  return Ellipsoid(e.center(), e.semi_axes() / r);
}

/// Point of the boundary hit by the ray center + t * direction, t > 0.
inline Vec boundary_point(const Ellipsoid& e, const Vec& direction) {
  require_dim(direction, e.dim(), "boundary_point");
  const double q = (direction.array() / e.semi_axes().array()).square().sum();
  if (!(q > 0.0)) throw InvalidArgument("boundary_point: zero direction");
  return e.center() + direction / std::sqrt(q);
}

namespace detail {

// Largest root of sum (a_i y_i / (a_i^2 + t))^2 = 1 on (lo, hi), the sum being decreasing there.
inline double decreasing_root(const Vec& a, const Vec& y, double lo, double hi) {
  auto f = [&](double t) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      const double d = a[i] * a[i] + t;
      if (y[i] == 0.0) continue;
      if (d <= 0.0) return std::numeric_limits<double>::infinity();
      const double r = a[i] * y[i] / d;
      s += r * r;
    }
    return s - 1.0;
  };
  for (int it = 0; it < 200 && hi - lo > 1e-17 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Euclidean distance from x to the boundary of e (unsigned).
inline double boundary_distance(const Ellipsoid& e, const Vec& x) {
  require_dim(x, e.dim(), "boundary_distance");
  const Vec& a = e.semi_axes();
  const Vec y = (x - e.center()).cwiseAbs();
  const double q = (y.array() / a.array()).square().sum();
  const int n = e.dim();
  auto distance_for = [&](double t) {
    double d2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double z = a[i] * a[i] * y[i] / (a[i] * a[i] + t);
      d2 += (y[i] - z) * (y[i] - z);
    }
    return std::sqrt(d2);
  };
  if (q == 1.0) return 0.0;
  if (q > 1.0) {
    const double hi = a.maxCoeff() * y.norm();
    return distance_for(detail::decreasing_root(a, y, 0.0, hi));
  }
  const double amin = a.minCoeff();
  bool on_min_axis = false;
  for (int i = 0; i < n; ++i)
    if (a[i] == amin && y[i] > 0.0) on_min_axis = true;
  if (on_min_axis) return distance_for(detail::decreasing_root(a, y, -amin * amin, 0.0));

  // y vanishes along every shortest axis: closest point may leave the coordinate subspace
  double reduced = 0.0;
  for (int i = 0; i < n; ++i) {
    if (a[i] == amin) continue;
    const double r = a[i] * y[i] / (a[i] * a[i] - amin * amin);
    reduced += r * r;
  }
  if (reduced < 1.0) {
    double d2 = 0.0, used = 0.0;
    for (int i = 0; i < n; ++i) {
      if (a[i] == amin) continue;
      const double z = a[i] * a[i] * y[i] / (a[i] * a[i] - amin * amin);
      d2 += (y[i] - z) * (y[i] - z);
      used += (z / a[i]) * (z / a[i]);
    }
    return std::sqrt(d2 + amin * amin * std::max(0.0, 1.0 - used));
  }
  return distance_for(detail::decreasing_root(a, y, -amin * amin, 0.0));
}

/// Negative inside, positive outside.
inline double signed_distance(const Ellipsoid& e, const Vec& x) {
  const double d = boundary_distance(e, x);
  return quadric_value(e, x) <= 1.0 ? -d : d;
}

//---------------------------------------------------------------------------//
// Quadratic blow-down
//---------------------------------------------------------------------------//

/// Diagonal positive definite Q with trace 1/2; p(x) = x^T Q x.
class QuadraticBlowdown {
 public:
  static constexpr double kTraceTolerance = 1e-12;

  explicit QuadraticBlowdown(Vec diag) : diag_(std::move(diag)) {
    const auto n = diag_.size();
    if (n < 1 || n > kMaxDim) throw InvalidArgument("QuadraticBlowdown: unsupported dimension");
    for (Eigen::Index i = 0; i < n; ++i)
      if (!(diag_[i] > 0.0) || !std::isfinite(diag_[i]))
        throw InvalidArgument("QuadraticBlowdown: entries must be positive");
    if (std::abs(diag_.sum() - 0.5) > kTraceTolerance)
      throw InvalidArgument("QuadraticBlowdown: trace must be 1/2 (got " +
                            std::to_string(diag_.sum()) + ")");
  }

  /// Rescales positive entries so the trace is exactly 1/2.
  static QuadraticBlowdown normalized(const Vec& entries) {
    for (Eigen::Index i = 0; i < entries.size(); ++i)
      if (!(entries[i] > 0.0)) throw InvalidArgument("QuadraticBlowdown: entries must be positive");
    return QuadraticBlowdown(entries * (0.5 / entries.sum()));
  }

  int dim() const { return static_cast<int>(diag_.size()); }
  const Vec& diag() const { return diag_; }

  double operator()(const Vec& x) const {
    require_dim(x, dim(), "QuadraticBlowdown");
    return (diag_.array() * x.array().square()).sum();
  }

  Vec gradient(const Vec& x) const { return 2.0 * diag_.cwiseProduct(x); }

 private:
  Vec diag_;
};

/// Q = R diag(q) R^T; coordinates in the principal frame are R^T x.
struct PrincipalFrame {
  QuadraticBlowdown blowdown;
  Mat rotation;

  Vec to_frame(const Vec& x) const { return rotation.transpose() * x; }
  Vec from_frame(const Vec& y) const { return rotation * y; }
};

/// Rotates a symmetric positive definite trace-1/2 matrix to diagonal form.
inline PrincipalFrame diagonalize(const Mat& q) {
  if (q.rows() != q.cols()) throw InvalidArgument("diagonalize: matrix must be square");
  if (!q.isApprox(q.transpose(), 1e-12)) throw InvalidArgument("diagonalize: matrix must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> eig(q);
  Vec values = eig.eigenvalues();
  Mat vectors = eig.eigenvectors();
  if (vectors.determinant() < 0) vectors.col(0) *= -1.0;
  return {QuadraticBlowdown(values), vectors};
}

//---------------------------------------------------------------------------//
// Convex bodies
//---------------------------------------------------------------------------//

/// Parameter interval [t_in, t_out] (t_in >= 0) where origin + t * dir lies in a body.
struct Chord {
  double t_in = 0.0;
  double t_out = 0.0;
};

/// Quadrature nodes and weights for integrals over a body.
struct BodyQuadrature {
  std::vector<Vec> nodes;
  std::vector<double> weights;
};

/// Compact convex set with nonempty interior, given by a membership oracle.
///
/// Analytic bodies supply an exact ray clipper; otherwise chords are found by marching along the
/// ray at `march_step` and bisecting the membership predicate.
class ConvexBody {
 public:
  using Membership = std::function<bool(const Vec&)>;
  using ChordFn = std::function<std::optional<Chord>(const Vec& origin, const Vec& dir)>;

  ConvexBody(int dim, Membership membership, double bounding_radius, Vec interior_point,
             std::optional<double> volume_hint = std::nullopt, ChordFn chord = {},
             std::string kind = "custom")
      : dim_(dim),
        membership_(std::move(membership)),
        radius_(bounding_radius),
        interior_(std::move(interior_point)),
        volume_hint_(volume_hint),
        chord_(std::move(chord)),
        kind_(std::move(kind)) {
    if (dim_ < 1 || dim_ > kMaxDim) throw InvalidArgument("ConvexBody: unsupported dimension");
    if (!(radius_ > 0.0)) throw InvalidArgument("ConvexBody: bounding radius must be positive");
    require_dim(interior_, dim_, "ConvexBody interior point");
    if (!membership_(interior_)) throw InvalidArgument("ConvexBody: interior point is not a member");
    march_step_ = radius_ / 512.0;
  }

  int dim() const { return dim_; }
  double bounding_radius() const { return radius_; }
  const Vec& interior_point() const { return interior_; }
  const std::string& kind() const { return kind_; }
  std::optional<double> volume_hint() const { return volume_hint_; }
  bool has_exact_chords() const { return static_cast<bool>(chord_); }

  void set_march_step(double step) { march_step_ = step; }
  double march_step() const { return march_step_; }

  bool contains(const Vec& x) const {
    require_dim(x, dim_, "ConvexBody::contains");
    return membership_(x);
  }

  /// Intersection of the ray origin + t * dir (t >= 0, |dir| = 1) with the body.
  std::optional<Chord> chord(const Vec& origin, const Vec& dir) const {
    if (chord_) return chord_(origin, dir);
    return marched_chord(origin, dir);
  }

  /// Distance from the interior point to the boundary along dir.
  double radial(const Vec& dir) const {
    const auto c = chord(interior_, dir);
    return c ? c->t_out : 0.0;
  }

  /// Polar quadrature about the interior point: sphere rule times radial Gauss-Legendre.
  /// Deterministic in (resolution, seed); every node is a member.
  BodyQuadrature sample(int resolution, std::uint64_t seed = 0) const {
    const auto sphere = quadrature::sphere_rule(dim_, resolution, seed);
    const auto radial_rule = quadrature::gauss_legendre(resolution, 0.0, 1.0);
    BodyQuadrature q;
    q.nodes.reserve(sphere.size() * radial_rule.nodes.size());
    q.weights.reserve(q.nodes.capacity());
    for (std::size_t k = 0; k < sphere.size(); ++k) {
      const Vec& dir = sphere.directions[k];
      const double rho = radial(dir);
      for (std::size_t j = 0; j < radial_rule.nodes.size(); ++j) {
        const double r = rho * radial_rule.nodes[j];
        q.nodes.push_back(interior_ + r * dir);
        q.weights.push_back(sphere.weights[k] * radial_rule.weights[j] * rho * std::pow(r, dim_ - 1));
      }
    }
    return q;
  }

  double volume(int resolution = 48) const {
    if (volume_hint_) return *volume_hint_;
    const auto sphere = quadrature::sphere_rule(dim_, resolution);
    double v = 0.0;
    for (std::size_t k = 0; k < sphere.size(); ++k)
      v += sphere.weights[k] * std::pow(radial(sphere.directions[k]), dim_) / dim_;
    return v;
  }

  ConvexBody translated(const Vec& t) const {
    require_dim(t, dim_, "ConvexBody::translated");
    auto inner = membership_;
    Membership m = [inner, t](const Vec& x) { return inner(x - t); };
    ChordFn c;
    if (chord_) {
      auto inner_chord = chord_;
      c = [inner_chord, t](const Vec& o, const Vec& d) { return inner_chord(o - t, d); };
    }
    ConvexBody out(dim_, std::move(m), radius_ + t.norm(), interior_ + t, volume_hint_, std::move(c),
                   kind_);
    out.march_step_ = march_step_;
    return out;
  }

 private:
  std::optional<Chord> marched_chord(const Vec& origin, const Vec& dir) const {
    // clip the ray to the bounding ball first
    const double b = origin.dot(dir);
    const double c = origin.squaredNorm() - radius_ * radius_;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double far = -b + std::sqrt(disc);
    if (far < 0.0) return std::nullopt;
    const double near = std::max(0.0, -b - std::sqrt(disc));

    auto inside = [&](double t) { return membership_(Vec(origin + t * dir)); };
    auto bisect = [&](double in, double out) {
      for (int it = 0; it < 60 && std::abs(out - in) > 1e-15 * (1.0 + far); ++it) {
        const double mid = 0.5 * (in + out);
        (inside(mid) ? in : out) = mid;
      }
      return 0.5 * (in + out);
    };
    double hit = -1.0;
    if (inside(0.0)) {
      hit = 0.0;
    } else {
      for (double t = near; t <= far + march_step_; t += march_step_) {
        if (inside(std::min(t, far))) {
          hit = std::min(t, far);
          break;
        }
      }
      if (hit < 0.0) return std::nullopt;
    }
    const double t_in = hit == 0.0 ? 0.0 : bisect(hit, std::max(0.0, hit - march_step_));
    const double t_out = inside(far) ? far : bisect(hit, far + march_step_);
    return Chord{t_in, t_out};
  }

  int dim_;
  Membership membership_;
  double radius_;
  Vec interior_;
  std::optional<double> volume_hint_;
  ChordFn chord_;
  std::string kind_;
  double march_step_ = 0.0;
};

namespace detail {

inline std::optional<Chord> clip_interval(double lo, double hi) {
  lo = std::max(lo, 0.0);
  if (!(hi > lo)) return std::nullopt;
  return Chord{lo, hi};
}

}  // namespace detail

inline ConvexBody make_ellipsoid_body(const Ellipsoid& e) {
  const Vec c = e.center();
  const Vec inv = e.shape_diagonal();
  auto membership = [c, inv](const Vec& x) {
    return (inv.array() * (x - c).array().square()).sum() <= 1.0;
  };
  auto chord = [c, inv](const Vec& o, const Vec& d) -> std::optional<Chord> {
    const Vec p = o - c;
    const double qa = (inv.array() * d.array().square()).sum();
    const double qb = (inv.array() * p.array() * d.array()).sum();
    const double qc = (inv.array() * p.array().square()).sum() - 1.0;
    const double disc = qb * qb - qa * qc;
    if (disc <= 0.0) return std::nullopt;
    const double root = std::sqrt(disc);
    // numerically stable pair of roots
    const double k = -(qb + std::copysign(root, qb));
    double t1 = k / qa, t2 = (k != 0.0) ? qc / k : -t1;
    if (t1 > t2) std::swap(t1, t2);
    return detail::clip_interval(t1, t2);
  };
  return ConvexBody(e.dim(), membership, c.norm() + e.semi_axes().maxCoeff(), c, e.volume(), chord,
                    "ellipsoid");
}

inline ConvexBody make_ball(const Vec& center, double radius) {
  if (center.size() >= 3) return make_ellipsoid_body(Ellipsoid(center, Vec::Constant(center.size(), radius)));
  const Vec c = center;
  auto membership = [c, radius](const Vec& x) { return (x - c).squaredNorm() <= radius * radius; };
  auto chord = [c, radius](const Vec& o, const Vec& d) -> std::optional<Chord> {
    const Vec p = o - c;
    const double b = p.dot(d), disc = b * b - (p.squaredNorm() - radius * radius);
    if (disc <= 0.0) return std::nullopt;
    return detail::clip_interval(-b - std::sqrt(disc), -b + std::sqrt(disc));
  };
  return ConvexBody(static_cast<int>(c.size()), membership, c.norm() + radius, c,
                    unit_ball_volume(static_cast<int>(c.size())) * std::pow(radius, c.size()), chord,
                    "ball");
}

/// Axis-aligned box [lower, upper].
inline ConvexBody make_box(const Vec& lower, const Vec& upper) {
  require_dim(upper, static_cast<int>(lower.size()), "make_box");
  for (Eigen::Index i = 0; i < lower.size(); ++i)
    if (!(upper[i] > lower[i])) throw InvalidArgument("make_box: upper must exceed lower");
  auto membership = [lower, upper](const Vec& x) {
    return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
  };
  auto chord = [lower, upper](const Vec& o, const Vec& d) -> std::optional<Chord> {
    double lo = -std::numeric_limits<double>::infinity(), hi = -lo;
    for (Eigen::Index i = 0; i < o.size(); ++i) {
      if (d[i] == 0.0) {
        if (o[i] < lower[i] || o[i] > upper[i]) return std::nullopt;
        continue;
      }
      double t1 = (lower[i] - o[i]) / d[i], t2 = (upper[i] - o[i]) / d[i];
      if (t1 > t2) std::swap(t1, t2);
      lo = std::max(lo, t1);
      hi = std::min(hi, t2);
    }
    return detail::clip_interval(lo, hi);
  };
  const Vec center = 0.5 * (lower + upper);
  const double radius = lower.cwiseAbs().cwiseMax(upper.cwiseAbs()).norm();
  return ConvexBody(static_cast<int>(lower.size()), membership, radius, center,
                    (upper - lower).prod(), chord, "box");
}

/// Convex hull of n+1 affinely independent vertices.
inline ConvexBody make_simplex(const std::vector<Vec>& vertices) {
  if (vertices.empty()) throw InvalidArgument("make_simplex: no vertices");
  const int n = static_cast<int>(vertices.front().size());
  if (static_cast<int>(vertices.size()) != n + 1)
    throw InvalidArgument("make_simplex: need n+1 vertices");
  Mat edges(n, n);
  for (int k = 0; k < n; ++k) {
    require_dim(vertices[k + 1], n, "make_simplex");
    edges.col(k) = vertices[k + 1] - vertices[0];
  }
  const double det = edges.determinant();
  if (std::abs(det) < 1e-14) throw InvalidArgument("make_simplex: degenerate vertices");
  const Mat inverse = edges.inverse();
  const Vec origin = vertices[0];
  // barycentric coordinates (lambda_1..lambda_n) = inverse * (x - v0), lambda_0 = 1 - sum
  auto membership = [inverse, origin](const Vec& x) {
    const Vec l = inverse * (x - origin);
    return (l.array() >= 0.0).all() && l.sum() <= 1.0;
  };
  auto chord = [inverse, origin](const Vec& o, const Vec& d) -> std::optional<Chord> {
    const Vec l = inverse * (o - origin);
    const Vec dl = inverse * d;
    double lo = -std::numeric_limits<double>::infinity(), hi = -lo;
    auto constrain = [&](double value, double slope) {  // value + t * slope >= 0
      if (slope == 0.0) {
        if (value < 0.0) lo = std::numeric_limits<double>::infinity();
        return;
      }
      const double t = -value / slope;
      if (slope > 0.0) lo = std::max(lo, t);
      else hi = std::min(hi, t);
    };
    for (Eigen::Index i = 0; i < l.size(); ++i) constrain(l[i], dl[i]);
    constrain(1.0 - l.sum(), -dl.sum());
    return detail::clip_interval(lo, hi);
  };
  Vec barycenter = Vec::Zero(n);
  double radius = 0.0;
  for (const auto& v : vertices) {
    barycenter += v / (n + 1.0);
    radius = std::max(radius, v.norm());
  }
  double fact = 1.0;
  for (int k = 2; k <= n; ++k) fact *= k;
  return ConvexBody(n, membership, radius, barycenter, std::abs(det) / fact, chord, "simplex");
}

/// {x : sum |(x_i - c_i) / a_i|^p <= 1}, convex for p >= 1.
inline ConvexBody make_superellipsoid(const Vec& center, const Vec& axes, double exponent) {
  require_dim(axes, static_cast<int>(center.size()), "make_superellipsoid");
  if (!(exponent >= 1.0)) throw InvalidArgument("make_superellipsoid: exponent must be >= 1");
  for (Eigen::Index i = 0; i < axes.size(); ++i)
    if (!(axes[i] > 0.0)) throw InvalidArgument("make_superellipsoid: axes must be positive");
  auto gauge = [axes, exponent](const Vec& p) {
    return ((p.array() / axes.array()).abs().pow(exponent)).sum();
  };
  auto membership = [center, gauge](const Vec& x) { return gauge(x - center) <= 1.0; };
  ConvexBody body(static_cast<int>(center.size()), membership, center.norm() + axes.norm(), center,
                  std::nullopt, {}, "superellipsoid");
  body.set_march_step(axes.minCoeff() / 256.0);
  return body;
}

/// Chords of the rays from x along every direction of a sphere rule; misses give {0, 0}.
inline std::vector<Chord> chords_from(const ConvexBody& body, const Vec& x,
                                      const quadrature::SphereRule& sphere) {
  require_dim(x, body.dim(), "chords_from");
  std::vector<Chord> out(sphere.size());
  for (std::size_t k = 0; k < sphere.size(); ++k)
    if (auto c = body.chord(x, sphere.directions[k])) out[k] = *c;
  return out;
}

/// Fraction of sampled member pairs whose midpoint fails membership.
inline double convexity_violation_rate(const ConvexBody& body, int pairs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-body.bounding_radius(), body.bounding_radius());
  auto draw_member = [&]() {
    Vec x(body.dim());
    for (int attempt = 0; attempt < 100000; ++attempt) {
      for (int i = 0; i < body.dim(); ++i) x[i] = coord(rng);
      if (body.contains(x)) return x;
    }
    throw Error("convexity_violation_rate: could not sample members");
  };
  int bad = 0;
  for (int k = 0; k < pairs; ++k) {
    const Vec a = draw_member(), b = draw_member();
    if (!body.contains(Vec(0.5 * (a + b)))) ++bad;
  }
  return static_cast<double>(bad) / pairs;
}

}  // namespace ellobst
