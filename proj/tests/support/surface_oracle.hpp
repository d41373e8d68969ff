#pragma once

#include "ellobst/quadrature.hpp"

#include <Eigen/Dense>

#include <array>
#include <vector>

namespace ellobst::oracle {

// Independent oracle: by the divergence theorem F(x) = -sum_faces nu_f int_f dS / |y - x|.
// Faces are integrated with a collapsed (Duffy) Gauss-Legendre product rule, which is smooth
// here because x stays away from the faces.
inline Vec surface_gravity(const std::vector<Vec>& v, const Vec& x) {
  const auto gl = quadrature::gauss_legendre(48, 0.0, 1.0);
  const Vec centroid = (v[0] + v[1] + v[2] + v[3]) / 4.0;
  Vec f = Vec::Zero(3);
  for (int skip = 0; skip < 4; ++skip) {
    std::array<Vec, 3> tri;
    int c = 0;
    for (int k = 0; k < 4; ++k)
      if (k != skip) tri[c++] = v[k];
    const Eigen::Vector3d e1 = tri[1] - tri[0], e2 = tri[2] - tri[0];
    Eigen::Vector3d normal = e1.cross(e2);
    const double area2 = normal.norm();
    normal /= area2;
    if (normal.dot(Eigen::Vector3d(tri[0] - centroid)) < 0) normal = -normal;
    double integral = 0.0;
    for (std::size_t i = 0; i < gl.nodes.size(); ++i)
      for (std::size_t j = 0; j < gl.nodes.size(); ++j) {
        const double s = gl.nodes[i], t = gl.nodes[j] * (1.0 - s);
        const Vec y = tri[0] + s * Vec(e1) + t * Vec(e2);
        integral += gl.weights[i] * gl.weights[j] * (1.0 - s) * area2 / (y - x).norm();
      }
    f -= integral * Vec(normal);
  }
  return f;
}

inline Vec oracle_root(const std::vector<Vec>& v) {
  Vec x = make_vec({0.25, 0.25, 0.25});
  for (int it = 0; it < 30; ++it) {
    const Vec fx = surface_gravity(v, x);
    Mat jac(3, 3);
    for (int j = 0; j < 3; ++j) {
      Vec xp = x, xm = x;
      xp[j] += 1e-5;
      xm[j] -= 1e-5;
      jac.col(j) = (surface_gravity(v, xp) - surface_gravity(v, xm)) / 2e-5;
    }
    const Vec step = jac.fullPivLu().solve(Vec(-fx));
    x += step;
    if (step.norm() < 1e-13) break;
  }
  return x;
}

}  // namespace ellobst::oracle
