#include "ellobst/newton_potential.hpp"
#include "ellobst/weighted_centroid.hpp"
#include "support/surface_oracle.hpp"

#include <gtest/gtest.h>

#include <array>
#include <random>

using namespace ellobst;
using ellobst::oracle::oracle_root;
using ellobst::oracle::surface_gravity;

namespace {

std::vector<Vec> unit_simplex_vertices() {
  return {make_vec({0, 0, 0}), make_vec({1, 0, 0}), make_vec({0, 1, 0}), make_vec({0, 0, 1})};
}

}  // namespace

TEST(SurfaceOracle, RegularSimplexCenterIsRoot) {
  const double s = 1.0 / std::sqrt(2.0);
  const std::vector<Vec> reg = {make_vec({1, 0, -s}), make_vec({-1, 0, -s}), make_vec({0, 1, s}),
                                make_vec({0, -1, s})};
  EXPECT_LT(surface_gravity(reg, Vec::Zero(3)).norm(), 1e-12);
}

TEST(TEpsilon, CenterIsFixedForCenteredEllipsoid) {
  const auto body = make_ellipsoid_body(Ellipsoid(make_vec({2, 1, 0.5})));
  for (double eps : {0.5, 0.1, 1e-3})
    EXPECT_LT(t_epsilon(body, Vec::Zero(3), eps).norm(), 1e-13);
}

TEST(TEpsilon, SelfMapBound) {
  const std::vector<ConvexBody> bodies = {
      make_ellipsoid_body(Ellipsoid(make_vec({0.5, 0.2, 0}), make_vec({2, 1, 0.5}))),
      make_simplex(unit_simplex_vertices()), make_box(make_vec({-1, 0, 0}), make_vec({1, 0.5, 2}))};
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0), e(0.01, 0.99);
  int checked = 0;
  for (const auto& body : bodies) {
    const double r = body.bounding_radius();
    for (int k = 0; k < 34; ++k) {
      Vec x = make_vec({u(rng), u(rng), u(rng)});
      x *= r * std::abs(u(rng)) / x.norm();
      const Vec t = t_epsilon(body, x, e(rng), 16);
      EXPECT_LE(t.norm(), r);
      EXPECT_TRUE(body.contains(t) || t.norm() <= r);
      ++checked;
    }
  }
  EXPECT_GE(checked, 100);
}

TEST(TEpsilon, SimplexMatchesRefinement) {
  const auto body = make_simplex(unit_simplex_vertices());
  const Vec x = make_vec({0.25, 0.25, 0.25});
  const Vec fine = t_epsilon(body, x, 0.25, 256);
  const Vec mid = t_epsilon(body, x, 0.25, 128);
  EXPECT_LT((fine - mid).norm(), 1e-6);
}

TEST(TEpsilon, RejectsBadInput) {
  const auto body = make_ball(Vec::Zero(3), 1.0);
  EXPECT_THROW(t_epsilon(body, Vec::Zero(3), 0.0), InvalidArgument);
  EXPECT_THROW(t_epsilon(body, Vec::Zero(3), 1.0), InvalidArgument);
  EXPECT_THROW(t_epsilon(body, make_vec({3, 0, 0}), 0.5), InvalidArgument);
}

TEST(GravityResidual, BallExamples) {
  const auto ball = make_ball(Vec::Zero(3), 1.0);
  EXPECT_LT(gravity_residual(ball, Vec::Zero(3)).value.norm(), 1e-10);
  // inside the unit ball F(x) = -(4 pi / 3) x
  const auto g = gravity_residual(ball, make_vec({0.3, 0, 0}));
  EXPECT_LT(g.value[0], 0.0);
  EXPECT_NEAR(g.value[0], -4.0 * std::numbers::pi / 3.0 * 0.3, 1e-10);
  EXPECT_LT(g.error, 1e-10);
}

TEST(GravityResidual, MatchesSurfaceOracleOnSimplex) {
  const auto v = unit_simplex_vertices();
  const auto body = make_simplex(v);
  for (const Vec& x : {make_vec({0.2, 0.2, 0.2}), make_vec({0.1, 0.3, 0.15})}) {
    const auto g = gravity_residual(body, x, 128);
    EXPECT_LT((g.value - surface_gravity(v, x)).norm(), 1e-4);
  }
}

TEST(GravityResidual, AntisymmetricUnderReflection) {
  const auto box = make_box(make_vec({-1, -0.5, -2}), make_vec({1, 0.5, 2}));
  const Vec x = make_vec({0.2, -0.1, 0.3});
  const Vec a = gravity_residual(box, x, 32).value;
  const Vec b = gravity_residual(box, Vec(-x), 32).value;
  EXPECT_LT((a + b).norm(), 1e-12);
}

TEST(WeightedCentroid, SymmetricBodiesGiveCenters) {
  struct Case {
    ConvexBody body;
    Vec center;
  };
  const std::vector<Case> cases = {
      {make_ellipsoid_body(Ellipsoid(make_vec({1, 2, 3}), make_vec({1.5, 0.7, 0.4}))), make_vec({1, 2, 3})},
      {make_box(make_vec({0, 0, 0}), make_vec({1, 1, 1})), make_vec({0.5, 0.5, 0.5})},
      {make_ball(make_vec({-0.5, 0.2, 0.1}), 0.8), make_vec({-0.5, 0.2, 0.1})},
  };
  for (const auto& c : cases) {
    CentroidOptions opts;
    opts.tol = 1e-8;
    opts.resolution = 32;
    const auto res = weighted_centroid(c.body, opts);
    EXPECT_LT((res.x0 - c.center).norm(), 1e-6) << c.body.kind();
    EXPECT_TRUE(c.body.contains(res.x0));
  }
}

TEST(WeightedCentroid, OffsetStartStillFindsCenter) {
  // interior point deliberately off center
  const Ellipsoid e(make_vec({2, 1, 1}));
  const auto exact = make_ellipsoid_body(e);
  auto in = [e](const Vec& x) { return contains(e, x); };
  const ConvexBody body(3, in, 2.0, make_vec({1.2, 0.3, -0.2}), e.volume());
  CentroidOptions opts;
  opts.resolution = 24;
  const auto res = weighted_centroid(body, opts);
  EXPECT_LT(res.x0.norm(), 1e-6);
  EXPECT_GE(res.epsilon_trace.size(), 2u);
  for (const auto& level : res.epsilon_trace) EXPECT_TRUE(body.contains(level.fixed_point));
}

TEST(WeightedCentroid, SimplexMatchesSurfaceOracle) {
  const auto v = unit_simplex_vertices();
  const auto body = make_simplex(v);
  CentroidOptions opts;
  opts.resolution = 160;
  opts.tol = 1e-7;
  const auto res = weighted_centroid(body, opts);
  const Vec oracle = oracle_root(v);
  EXPECT_LT((res.x0 - oracle).norm(), 1e-5) << res.x0.transpose() << " vs " << oracle.transpose();
  // the weighted centroid differs from the barycenter
  EXPECT_GT((oracle - make_vec({0.25, 0.25, 0.25})).norm(), 1e-3);
  // all coordinates equal by symmetry of the simplex under coordinate permutations
  EXPECT_NEAR(oracle[0], oracle[1], 1e-10);
}

TEST(WeightedCentroid, TraceConvergesToCentroid) {
  const auto body = make_simplex(unit_simplex_vertices());
  CentroidOptions opts;
  opts.resolution = 32;
  opts.tol = 1e-6;
  const auto res = weighted_centroid(body, opts);
  EXPECT_TRUE(res.schedule_monotone);
  EXPECT_LT((res.epsilon_trace.back().fixed_point - res.x0).norm(), 1e-5);
  EXPECT_LT(res.residual, opts.tol * unit_sphere_area(3) * body.bounding_radius());
  for (std::size_t k = 1; k < res.epsilon_trace.size(); ++k)
    EXPECT_DOUBLE_EQ(res.epsilon_trace[k].epsilon, 0.5 * res.epsilon_trace[k - 1].epsilon);
}

TEST(WeightedCentroid, PotentialGradientVanishesAtCentroid) {
  // smooth convex body without central symmetry: {|x|^2 + x_1^3 / 5 <= 1} inside B_2
  auto in = [](const Vec& x) { return x.squaredNorm() <= 4.0 && x.squaredNorm() + 0.2 * std::pow(x[0], 3) <= 1.0; };
  const ConvexBody egg(3, in, 2.0, Vec::Zero(3));
  CentroidOptions opts;
  opts.resolution = 32;
  opts.tol = 1e-9;
  const auto res = weighted_centroid(egg, opts);
  EXPECT_GT(std::abs(res.x0[0]), 1e-3);
  const double c = PotentialNormalization::for_dimension(3).kernel_constant;
  auto grad = [&](const Vec& x, int i) {
    auto d = [&](double step) {
      Vec p = x, m = x;
      p[i] += step;
      m[i] -= step;
      return (body_potential(egg, p, 32).value - body_potential(egg, m, 32).value) / (2 * step);
    };
    return (4.0 * d(0.005) - d(0.01)) / 3.0;
  };
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(grad(res.x0, i), 0.0, 1e-5);
  // away from x0 the gradient is c(n) (n-2) F
  const Vec x = make_vec({0.3, -0.2, 0.1});
  const Vec f = gravity_residual(egg, x, 32).value;
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(grad(x, i), c * f[i], 1e-5);
  EXPECT_GT(f.norm(), 0.1);
}

TEST(WeightedCentroid, DeterministicForSeed) {
  const auto body = make_superellipsoid(make_vec({0.1, 0, 0}), make_vec({1, 0.8, 0.6}), 3.0);
  CentroidOptions opts;
  opts.resolution = 16;
  opts.tol = 1e-6;
  opts.seed = 5;
  const auto a = weighted_centroid(body, opts), b = weighted_centroid(body, opts);
  EXPECT_EQ(a.x0, b.x0);
  EXPECT_LT((a.x0 - make_vec({0.1, 0, 0})).norm(), 1e-6);
}
