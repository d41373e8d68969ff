#pragma once

// Exact global obstacle solutions with ellipsoidal coincidence set:
//   u(x) = p(x) - NP_E(0) + NP_E(x),  p(x) = x^T Q x,
// where E is chosen so that the interior potential of E is NP_E(0) - p(x).

#include "ellobst/newton_potential.hpp"

#include <vector>

namespace ellobst {

class AxesNotConverged : public ConvergenceError {
 public:
  AxesNotConverged(const std::string& what, Vec last_iterate, double residual)
      : ConvergenceError(what), last_iterate_(std::move(last_iterate)), residual_(residual) {}

  const Vec& last_iterate() const { return last_iterate_; }
  double residual() const { return residual_; }

 private:
  Vec last_iterate_;
  double residual_;
};

struct AxesSolveOptions {
  double fd_step = 1e-6;
  int max_iterations = 60;
  double target_residual = 1e-13;
  double accept_residual = 1e-9;
};

/// Semi-axes (normalized to prod a_i = 1) whose interior coefficients reproduce Q.
///
/// Damped Newton in log-axes theta_i = log a_i restricted to sum theta_i = 0, with a forward
/// difference Jacobian; starts from the ball and halves the step until the residual drops.
inline Vec axes_from_blowdown(const QuadraticBlowdown& q, const AxesSolveOptions& opts = {}) {
  const int n = q.dim();
  PotentialNormalization::for_dimension(n);
  const int m = n - 1;
  auto axes_of = [&](const Eigen::VectorXd& z) {
    Vec theta(n);
    theta.head(m) = z;
    theta[m] = -z.sum();
    return Vec(theta.array().exp().matrix());
  };
  auto residual_of = [&](const Eigen::VectorXd& z) {
    return Vec(kappa_coefficients(axes_of(z)).kappa - q.diag());
  };
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
  Vec r = residual_of(z);
  double norm = r.cwiseAbs().maxCoeff();
  for (int it = 0; it < opts.max_iterations && norm > opts.target_residual; ++it) {
    Eigen::MatrixXd jac(m, m);
    for (int j = 0; j < m; ++j) {
      Eigen::VectorXd zp = z;
      zp[j] += opts.fd_step;
      jac.col(j) = (residual_of(zp) - r).head(m) / opts.fd_step;
    }
    const Eigen::VectorXd step = jac.fullPivLu().solve(Eigen::VectorXd(-r.head(m)));
    double damping = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 30; ++halving, damping *= 0.5) {
      const Eigen::VectorXd trial = z + damping * step;
      const Vec rt = residual_of(trial);
      const double nt = rt.cwiseAbs().maxCoeff();
      if (nt < norm) {
        z = trial;
        r = rt;
        norm = nt;
        improved = true;
        break;
      }
    }
    if (!improved) break;  // stagnated at quadrature noise level
  }
  const Vec axes = axes_of(z);
  if (!(norm <= opts.accept_residual))
    throw AxesNotConverged("axes_from_blowdown: Newton iteration did not converge (residual " +
                               std::to_string(norm) + ")",
                           axes, norm);
  return axes;
}

/// u^E for a blow-down Q: zero on E, positive outside, Laplacian = indicator of the complement.
class EllipsoidSolution {
 public:
  static constexpr double kZeroClamp = 1e-12;
  static constexpr double kDefiningTolerance = 1e-9;

  explicit EllipsoidSolution(const QuadraticBlowdown& q, const AxesSolveOptions& opts = {})
      : EllipsoidSolution(axes_from_blowdown(q, opts), q) {}

  /// Rebuilds a solution from stored axes; checks the defining equation kappa(axes) = Q.
  EllipsoidSolution(Vec axes, QuadraticBlowdown q)
      : axes_(std::move(axes)), q_(std::move(q)), kappa_(kappa_coefficients(axes_).kappa) {
    require_dim(axes_, q_.dim(), "EllipsoidSolution");
    if ((kappa_ - q_.diag()).cwiseAbs().maxCoeff() > kDefiningTolerance)
      throw InvalidArgument("EllipsoidSolution: axes do not realize the blow-down");
    np0_ = ellipsoid_potential_at_origin(axes_);
  }

  int dim() const { return q_.dim(); }
  const Vec& axes() const { return axes_; }
  const QuadraticBlowdown& blowdown() const { return q_; }
  const Vec& kappa() const { return kappa_; }
  double np_at_origin() const { return np0_; }
  Ellipsoid ellipsoid() const { return Ellipsoid(axes_); }

  double operator()(const Vec& x) const {
    require_dim(x, dim(), "EllipsoidSolution");
    double u;
    if (quadric(x) <= 1.0) {
      u = ((q_.diag() - kappa_).array() * x.array().square()).sum();
    } else {
      u = q_(x) - np0_ + ellipsoid_potential(axes_, x);
    }
    return std::abs(u) < kZeroClamp ? 0.0 : u;
  }

  Vec gradient(const Vec& x) const {
    require_dim(x, dim(), "EllipsoidSolution::gradient");
    if (quadric(x) <= 1.0) return Vec::Zero(dim());
    return q_.gradient(x) + ellipsoid_potential_gradient(axes_, x);
  }

 private:
  double quadric(const Vec& x) const { return (x.array() / axes_.array()).square().sum(); }

  Vec axes_;
  QuadraticBlowdown q_;
  Vec kappa_;
  double np0_ = 0.0;
};

inline double eval(const EllipsoidSolution& sol, const Vec& x) { return sol(x); }

/// U_r(x) = u^E(r x) / r^2, with coincidence set E_r = E / r.
class RescaledSolution {
 public:
  RescaledSolution(EllipsoidSolution base, double r) : base_(std::move(base)), r_(r) {
    if (!(r > 0.0) || !std::isfinite(r)) throw InvalidArgument("RescaledSolution: r must be positive");
  }

  const EllipsoidSolution& base() const { return base_; }
  double r() const { return r_; }
  Ellipsoid coincidence_set() const { return scale(base_.ellipsoid(), r_); }

  double operator()(const Vec& x) const { return base_(Vec(r_ * x)) / (r_ * r_); }
  Vec gradient(const Vec& x) const { return base_.gradient(Vec(r_ * x)) / r_; }

 private:
  EllipsoidSolution base_;
  double r_;
};

inline double eval_rescaled(const RescaledSolution& rs, const Vec& x) { return rs(x); }

struct BlowdownReport {
  std::vector<double> radii;
  std::vector<double> errors;  ///< max over sphere samples of |u(r theta)/r^2 - theta^T Q theta|
  bool decreasing = false;
  double bound_constant = 0.0;  ///< errors.back() * radii.back()
};

/// Uniform convergence of u(r x)/r^2 to the blow-down on the unit sphere.
inline BlowdownReport blowdown_limit_check(const EllipsoidSolution& sol, const std::vector<double>& radii,
                                           int sphere_resolution = 8) {
  for (std::size_t i = 1; i < radii.size(); ++i)
    if (!(radii[i] > radii[i - 1])) throw InvalidArgument("blowdown_limit_check: radii must increase");
  auto dirs = quadrature::sphere_rule(sol.dim(), sphere_resolution).directions;
  for (int k = 0; k < sol.dim(); ++k) dirs.push_back(unit(sol.dim(), k));
  BlowdownReport rep;
  rep.radii = radii;
  for (double r : radii) {
    double worst = 0.0;
    for (const auto& theta : dirs)
      worst = std::max(worst, std::abs(sol(Vec(r * theta)) / (r * r) - sol.blowdown()(theta)));
    rep.errors.push_back(worst);
  }
  rep.decreasing = true;
  for (std::size_t i = 1; i < rep.errors.size(); ++i)
    if (!(rep.errors[i] < rep.errors[i - 1])) rep.decreasing = false;
  if (!radii.empty()) rep.bound_constant = rep.errors.back() * radii.back();
  return rep;
}

}  // namespace ellobst
