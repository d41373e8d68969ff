#pragma once

// JSON documents for solutions, body descriptions, centroid results and verification reports.

#include "ellobst/ellipsoid_solution.hpp"
#include "ellobst/fit.hpp"
#include "ellobst/obstacle_solver.hpp"
#include "ellobst/weighted_centroid.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace ellobst::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSolutionSchema = "ellobst.solution/1";
inline constexpr const char* kCentroidSchema = "ellobst.centroid/1";
inline constexpr const char* kReportSchema = "ellobst.verification/1";

inline Json to_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vec vec_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.empty() || j.size() > static_cast<std::size_t>(kMaxDim))
    throw InvalidArgument(std::string(what) + ": expected an array of 1 to 4 numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InvalidArgument(std::string(what) + ": entries must be numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

//---------------------------------------------------------------------------//
// EllipsoidSolution
//---------------------------------------------------------------------------//

inline Json to_json(const EllipsoidSolution& sol) {
  return Json{{"schema", kSolutionSchema},
              {"dim", sol.dim()},
              {"axes", to_json(sol.axes())},
              {"q", to_json(sol.blowdown().diag())},
              {"kappa", to_json(sol.kappa())},
              {"np_at_origin", sol.np_at_origin()}};
}

/// Rebuilds from (axes, Q); the defining equation is rechecked on load.
inline EllipsoidSolution solution_from_json(const Json& j) {
  if (j.value("schema", "") != kSolutionSchema) throw InvalidArgument("solution: unknown schema");
  return EllipsoidSolution(vec_from_json(j.at("axes"), "solution.axes"),
                           QuadraticBlowdown(vec_from_json(j.at("q"), "solution.q")));
}

//---------------------------------------------------------------------------//
// Body descriptions
//---------------------------------------------------------------------------//

/// {"kind": "ellipsoid", "center": [...], "axes": [...]}
/// {"kind": "box", "lower": [...], "upper": [...]}
/// {"kind": "simplex", "vertices": [[...], ...]}
/// {"kind": "superellipsoid", "center": [...], "axes": [...], "exponent": p}
inline ConvexBody body_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("kind")) throw InvalidArgument("body: missing kind");
  const auto kind = j.at("kind").get<std::string>();
  auto center_or_origin = [&](int n) {
    return j.contains("center") ? vec_from_json(j.at("center"), "body.center") : Vec(Vec::Zero(n));
  };
  if (kind == "ellipsoid") {
    const Vec axes = vec_from_json(j.at("axes"), "body.axes");
    return make_ellipsoid_body(Ellipsoid(center_or_origin(static_cast<int>(axes.size())), axes));
  }
  if (kind == "box") return make_box(vec_from_json(j.at("lower"), "body.lower"), vec_from_json(j.at("upper"), "body.upper"));
  if (kind == "simplex") {
    std::vector<Vec> vertices;
    for (const auto& v : j.at("vertices")) vertices.push_back(vec_from_json(v, "body.vertices"));
    return make_simplex(vertices);
  }
  if (kind == "superellipsoid") {
    const Vec axes = vec_from_json(j.at("axes"), "body.axes");
    return make_superellipsoid(center_or_origin(static_cast<int>(axes.size())), axes, j.at("exponent").get<double>());
  }
  throw InvalidArgument("body: unknown kind '" + kind + "'");
}

//---------------------------------------------------------------------------//
// CentroidResult
//---------------------------------------------------------------------------//

inline Json to_json(const CentroidResult& r) {
  Json trace = Json::array();
  for (const auto& level : r.epsilon_trace)
    trace.push_back({{"epsilon", level.epsilon},
                     {"fixed_point", to_json(level.fixed_point)},
                     {"iterations", level.iterations},
                     {"method", level.newton ? "newton" : "damped"}});
  return Json{{"schema", kCentroidSchema},
              {"x0", to_json(r.x0)},
              {"residual", r.residual},
              {"residual_error", r.residual_error},
              {"schedule_monotone", r.schedule_monotone},
              {"resolution", r.resolution},
              {"seed", r.seed},
              {"epsilon_trace", trace}};
}

//---------------------------------------------------------------------------//
// Grid and fit
//---------------------------------------------------------------------------//

inline Json to_json(const GridSpec& s) {
  return Json{{"dim", s.dim()}, {"m", s.points_per_axis()}, {"box_radius", s.box_radius()}, {"h", s.spacing()}};
}

/// Quadric x^T A x + b.x = 1 with the ellipsoid read off from it.
inline Json to_json(const EllipsoidFit& fit) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < fit.quadratic.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < fit.quadratic.cols(); ++k) row.push_back(fit.quadratic(i, k));
    a.push_back(row);
  }
  return Json{{"A", a},
              {"b", to_json(fit.linear)},
              {"centered", fit.centered},
              {"center", to_json(fit.ellipsoid.center())},
              {"axes", to_json(fit.ellipsoid.semi_axes())},
              {"residual", fit.residual},
              {"orientation_error", fit.orientation_error}};
}

//---------------------------------------------------------------------------//
// VerificationReport
//---------------------------------------------------------------------------//

struct InvariantResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::string detail;
};

struct VerificationReport {
  Json tolerances = Json::object();
  Json grid = Json::object();
  Json fit = nullptr;
  Json extra = Json::object();
  std::vector<InvariantResult> invariants;

  bool pass() const {
    return !invariants.empty() &&
           std::all_of(invariants.begin(), invariants.end(), [](const InvariantResult& r) { return r.pass; });
  }

  /// value <= threshold; NaN fails.
  void check_le(const std::string& name, double value, double threshold, std::string detail = {}) {
    invariants.push_back({name, value, threshold, value <= threshold, std::move(detail)});
  }

  void fail(const std::string& name, std::string detail) {
    invariants.push_back({name, std::numeric_limits<double>::quiet_NaN(), 0.0, false, std::move(detail)});
  }
};

// JSON has no NaN or infinity; those values are written as strings
inline Json number_or_string(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline Json to_json(const VerificationReport& r) {
  Json inv = Json::array();
  for (const auto& i : r.invariants) {
    Json e{{"name", i.name},
           {"value", number_or_string(i.value)},
           {"threshold", number_or_string(i.threshold)},
           {"pass", i.pass}};
    if (!i.detail.empty()) e["detail"] = i.detail;
    inv.push_back(e);
  }
  return Json{{"schema", kReportSchema},
              {"version", kVersion},
              {"pass", r.pass()},
              {"tolerances", r.tolerances},
              {"grid", r.grid},
              {"fitted_quadric", r.fit},
              {"diagnostics", r.extra},
              {"invariants", inv}};
}

}  // namespace ellobst::io
