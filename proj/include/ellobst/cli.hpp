#pragma once

// Batch driver: make-solution, solve, verify, centroid, bench-sweep.
//
// Configuration is merged as defaults <- JSON file (--config) <- flags. Every run writes
// <out>/manifest.json with the merged config, the library version and the files produced.
// Exit codes: 0 pass, 1 verification failure, 2 usage or validation error, 3 non-convergence.

#include "ellobst/io.hpp"
#include "ellobst/theorem_verifier.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

namespace ellobst::cli {

using io::Json;

enum ExitCode : int { kPass = 0, kVerificationFailure = 1, kUsageError = 2, kNonConvergence = 3 };

inline Json default_config() {
  return Json::parse(R"({
    "seed": 0,
    "out": "out",
    "q": [0.16666666666666666, 0.16666666666666666, 0.16666666666666666],
    "solution_file": null,
    "boundary": "exact",
    "field": null,
    "sample": false,
    "grid": {"m": 65, "box_radius": 3.0},
    "solver": {"tol": null, "omega": null, "order": "lexicographic", "max_sweeps": 100000, "cascade": true},
    "verify": {"residual_factor": 100.0, "fit_residual_factor": 4.0, "axis_factor": 2.0,
               "hausdorff_factor": 2.0, "touch_factor": 2.0, "decomposition_factor": 10.0,
               "probes": 100, "centroid_tol": 1e-6, "centroid_resolution": 24},
    "body": {"kind": "box", "lower": [-1.0, -1.0, -1.0], "upper": [1.0, 1.0, 1.0]},
    "centroid": {"tol": 1e-8, "resolution": 64, "oracle": null, "oracle_tol": 1e-5},
    "bench": {"m": [17, 33, 65]}
  })");
}

struct Flags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> q;
  std::optional<int> m;
  std::optional<double> box_radius;
  std::optional<double> tol;
};

/// "0.3,0.1,0.1" -> [0.3, 0.1, 0.1]
inline Json parse_list(const std::string& text) {
  Json out = Json::array();
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw InvalidArgument("--q: cannot parse '" + item + "'");
    }
    if (used != item.size()) throw InvalidArgument("--q: cannot parse '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw InvalidArgument("--q: empty list");
  return out;
}

inline Json merge_config(const std::string& command, const Flags& f) {
  Json cfg = default_config();
  if (f.config) cfg.merge_patch(io::read_json_file(*f.config));
  if (f.seed) cfg["seed"] = *f.seed;
  if (f.out) cfg["out"] = *f.out;
  if (f.q) {
    cfg["q"] = parse_list(*f.q);
    cfg["solution_file"] = nullptr;
  }
  if (f.m) {
    cfg["grid"]["m"] = *f.m;
    if (command == "bench-sweep") {
      Json levels = Json::array();
      for (int m = *f.m; m >= 17 && m % 2 == 1; m = (m + 1) / 2) levels.insert(levels.begin(), m);
      cfg["bench"]["m"] = levels;
    }
    if (command == "make-solution") cfg["sample"] = true;
  }
  if (f.box_radius) cfg["grid"]["box_radius"] = *f.box_radius;
  if (f.tol) {
    if (command == "centroid") cfg["centroid"]["tol"] = *f.tol;
    else cfg["solver"]["tol"] = *f.tol;
  }
  cfg["command"] = command;
  return cfg;
}

/// Output directory plus the list of files written, recorded in the manifest.
class Run {
 public:
  explicit Run(Json config) : config_(std::move(config)), dir_(config_.at("out").get<std::string>()) {
    std::filesystem::create_directories(dir_);
  }

  const Json& config() const { return config_; }

  std::ofstream open(const std::string& name, bool binary = false) {
    outputs_.push_back(name);
    std::ofstream os(dir_ / name, binary ? std::ios::binary : std::ios::out);
    if (!os) throw InvalidArgument("cannot write " + (dir_ / name).string());
    return os;
  }

  void write_json(const std::string& name, const Json& j) { open(name) << j.dump(2) << '\n'; }

  void write_manifest() {
    Json m{{"tool", "ellobst"}, {"version", kVersion}, {"config", config_}, {"outputs", outputs_}};
    std::ofstream os(dir_ / "manifest.json");
    os << m.dump(2) << '\n';
  }

 private:
  Json config_;
  std::filesystem::path dir_;
  std::vector<std::string> outputs_;
};

//---------------------------------------------------------------------------//
// Shared pieces
//---------------------------------------------------------------------------//

/// Checks positivity and trace 1/2 within 1e-9, then renormalizes to trace exactly 1/2.
inline QuadraticBlowdown blowdown_from_list(const Json& q) {
  const Vec raw = io::vec_from_json(q, "q");
  for (Eigen::Index i = 0; i < raw.size(); ++i)
    if (!(raw[i] > 0.0) || !std::isfinite(raw[i])) throw InvalidArgument("q entries must be positive");
  if (std::abs(raw.sum() - 0.5) > 1e-9) throw InvalidArgument("trace must be 1/2");
  return QuadraticBlowdown::normalized(raw);
}

inline EllipsoidSolution solution_from_config(const Json& cfg) {
  if (!cfg.at("solution_file").is_null())
    return io::solution_from_json(io::read_json_file(cfg.at("solution_file").get<std::string>()));
  return EllipsoidSolution(blowdown_from_list(cfg.at("q")));
}

inline GridSpec grid_from_config(const Json& cfg, int dim) {
  const auto& g = cfg.at("grid");
  return GridSpec(dim, g.at("box_radius").get<double>(), g.at("m").get<int>());
}

inline SolveParams params_from_config(const Json& cfg, const GridSpec& spec) {
  const auto& s = cfg.at("solver");
  SolveParams p;
  p.omega = s.at("omega").is_null() ? optimal_omega(spec) : s.at("omega").get<double>();
  if (!s.at("tol").is_null()) p.tol = s.at("tol").get<double>();
  p.max_sweeps = s.at("max_sweeps").get<std::size_t>();
  const auto order = s.at("order").get<std::string>();
  if (order == "lexicographic") p.order = SweepOrder::Lexicographic;
  else if (order == "red-black") p.order = SweepOrder::RedBlack;
  else throw InvalidArgument("solver.order must be lexicographic or red-black");
  return p;
}

inline Json residual_json(const Complementarity& c) {
  return Json{{"max_negative_u", io::number_or_string(c.max_neg_u)},
              {"max_excess_laplacian", io::number_or_string(c.max_excess_laplacian)},
              {"max_product", io::number_or_string(c.max_product)},
              {"finite", c.finite}};
}

inline void write_mask(std::ostream& os, const GridSpec& s, const std::vector<std::uint8_t>& mask) {
  os << s.dim() << ' ' << s.points_per_axis() << ' ' << format_double(s.box_radius()) << ' '
     << format_double(s.spacing()) << '\n';
  os.write(reinterpret_cast<const char*>(mask.data()), static_cast<std::streamsize>(mask.size()));
}

struct Solved {
  SolveResult result;
  std::optional<EllipsoidSolution> exact;
};

/// Solves with the configured boundary datum and writes field.bin, mask.bin, slice.csv and
/// solve_report.json.
inline Solved solve_and_export(Run& run) {
  const auto& cfg = run.config();
  const auto datum = cfg.at("boundary").get<std::string>();
  std::optional<EllipsoidSolution> sol;
  int dim = 0;
  if (datum == "exact") {
    sol = solution_from_config(cfg);
    dim = sol->dim();
  } else if (datum == "zero") {
    dim = static_cast<int>(cfg.at("q").size());
  } else {
    throw InvalidArgument("boundary must be exact or zero");
  }
  const GridSpec spec = grid_from_config(cfg, dim);
  const SolveParams params = params_from_config(cfg, spec);
  std::function<double(const Vec&)> g = [](const Vec&) { return 0.0; };
  if (sol) g = [&sol](const Vec& x) { return (*sol)(x); };
  auto res = cfg.at("solver").at("cascade").get<bool>() ? solve_obstacle_cascade(spec, g, params)
                                                        : solve_obstacle(spec, g, params);

  const auto mask = coincidence_mask(res.field);
  Json report{{"converged", res.converged},
              {"sweeps", res.sweeps},
              {"last_update", io::number_or_string(res.last_update)},
              {"tol", res.tol},
              {"omega", params.omega},
              {"grid", io::to_json(spec)},
              {"residual", residual_json(res.residual)},
              {"mask_nodes", std::count(mask.begin(), mask.end(), std::uint8_t{1})}};
  if (sol) {
    const auto cmp = compare_mask(spec, mask, sol->ellipsoid());
    double err = 0.0;
    for (std::size_t i = 0; i < res.field.size(); ++i) {
      const Vec x = spec.node(i);
      if (std::abs(signed_distance(sol->ellipsoid(), x)) <= 3.0 * spec.spacing()) continue;
      err = std::max(err, std::abs(res.field[i] - (*sol)(x)));
    }
    report["exact"] = Json{{"axes", io::to_json(sol->axes())},
                           {"mask_hausdorff", cmp.hausdorff},
                           {"mask_volume", cmp.mask_volume},
                           {"ellipsoid_volume", sol->ellipsoid().volume()},
                           {"max_error_outside_3h_collar", err}};
  }
  { auto os = run.open("field.bin", true); write_field(os, res.field); }
  { auto os = run.open("mask.bin", true); write_mask(os, spec, mask); }
  if (spec.dim() >= 2) { auto os = run.open("slice.csv"); write_slice_csv(os, res.field); }
  run.write_json("solve_report.json", report);
  return {std::move(res), std::move(sol)};
}

//---------------------------------------------------------------------------//
// Commands
//---------------------------------------------------------------------------//

inline int cmd_make_solution(Run& run) {
  const auto& cfg = run.config();
  const auto q = blowdown_from_list(cfg.at("q"));
  const EllipsoidSolution sol(q);
  Json doc = io::to_json(sol);
  doc["kappa_residual"] = (sol.kappa() - q.diag()).cwiseAbs().maxCoeff();
  run.write_json("solution.json", doc);
  if (cfg.at("sample").get<bool>()) {
    const GridSpec spec = grid_from_config(cfg, sol.dim());
    GridField field(spec, 0.0);
    for (std::size_t i = 0; i < field.size(); ++i) field[i] = sol(spec.node(i));
    { auto os = run.open("solution_field.bin", true); write_field(os, field); }
    if (spec.dim() >= 2) { auto os = run.open("solution_slice.csv"); write_slice_csv(os, field); }
  }
  std::cout << "axes";
  for (Eigen::Index i = 0; i < sol.axes().size(); ++i) std::cout << ' ' << format_double(sol.axes()[i]);
  std::cout << '\n';
  return kPass;
}

inline int cmd_solve(Run& run) {
  const auto s = solve_and_export(run);
  std::cout << (s.result.converged ? "converged" : "not converged") << " after " << s.result.sweeps << " sweeps\n";
  return s.result.converged ? kPass : kNonConvergence;
}

/// Full verification of a solved field against the blow-down Q.
inline io::VerificationReport verify_field(const GridField& field, const QuadraticBlowdown& q, const Json& cfg) {
  const auto& v = cfg.at("verify");
  const auto& spec = field.spec();
  const double h = spec.spacing();
  double scale = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i)
    if (spec.on_boundary(i) && std::isfinite(field[i])) scale = std::max(scale, std::abs(field[i]));
  const auto& st = cfg.at("solver").at("tol");
  const double tol = st.is_null() ? 1e-10 * (scale > 0.0 ? scale : 1.0) : st.get<double>();

  io::VerificationReport rep;
  rep.grid = io::to_json(spec);
  const double fr = v.at("residual_factor"), ff = v.at("fit_residual_factor"), fa = v.at("axis_factor"),
               fh = v.at("hausdorff_factor"), ft = v.at("touch_factor"), fd = v.at("decomposition_factor");
  rep.tolerances = Json{{"solver_tol", tol},
                        {"complementarity", fr * tol},
                        {"fit_residual", ff * h * h},
                        {"axis_mismatch", fa * h},
                        {"hausdorff", fh * h},
                        {"touching_radius", ft * h},
                        {"decomposition", fd * h * h},
                        {"centroid_tol", v.at("centroid_tol")}};

  if (spec.dim() != q.dim()) throw InvalidArgument("verify: field and q dimensions differ");
  const auto c = complementarity_residual(field);
  rep.extra["residual"] = residual_json(c);
  {
    std::ostringstream d;
    d << "max(-u) " << c.max_neg_u << ", max(lap u - 1) " << c.max_excess_laplacian << ", max|u (lap u - 1)| "
      << c.max_product << (c.finite ? "" : ", non-finite values present");
    rep.check_le("complementarity", c.finite ? c.worst() : std::numeric_limits<double>::infinity(), fr * tol, d.str());
  }

  VerdictOptions vo;
  vo.centroid.tol = v.at("centroid_tol");
  vo.centroid.resolution = v.at("centroid_resolution");
  vo.centroid.seed = cfg.at("seed");
  std::optional<VerdictReport> verdict;
  try {
    verdict = verify_ellipsoid_verdict(field, q, vo);
  } catch (const Error& e) {
    rep.fail("ellipsoid_verdict", e.what());
    return rep;
  }
  const auto& vr = *verdict;
  rep.fit = io::to_json(vr.fit);
  rep.extra["centroid"] = io::to_json(vr.centroid);
  rep.extra["centroid_epsilon_levels"] = vr.centroid_result.epsilon_trace.size();
  rep.extra["expected_axes"] = io::to_json(vr.expected_axes);
  rep.extra["scale"] = vr.scale;
  rep.extra["absolute_axis_mismatch"] = vr.absolute_mismatch;
  rep.extra["boundary_points"] = vr.boundary_points;

  rep.check_le("fit_residual", vr.fit.residual, ff * h * h);
  rep.check_le("axis_mismatch", vr.axis_mismatch, fa * h, "fitted axes against the scaled blow-down axes");
  rep.check_le("boundary_hausdorff", vr.hausdorff, fh * h, "refined free-boundary points to the fitted ellipsoid");
  rep.check_le("mask_hausdorff", vr.mask_hausdorff, fh * h);

  // first touch of the mask by the fitted ellipsoid about the centroid
  const auto mask = coincidence_mask(field);
  const Ellipsoid fitted(vr.fit.ellipsoid.semi_axes());
  double qmax = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) qmax = std::max(qmax, quadric_value(fitted, Vec(spec.node(i) - vr.centroid)));
  const double r0 = 1.0 / std::sqrt(qmax);
  rep.extra["touching_radius"] = r0;
  rep.check_le("touching_radius", std::abs(r0 - 1.0), ft * h / fitted.semi_axes().minCoeff());

  // v = u - x^T Q x against the potential of the fitted ellipsoid, away from its boundary
  std::mt19937_64 rng(cfg.at("seed").get<std::uint64_t>());
  const double reach = spec.box_radius() - 2.0 * h;
  std::uniform_real_distribution<double> coord(-reach, reach);
  std::vector<Vec> probes;
  const int wanted = v.at("probes");
  for (int tries = 0; static_cast<int>(probes.size()) < wanted && tries < 100 * wanted; ++tries) {
    Vec x(spec.dim());
    for (int k = 0; k < spec.dim(); ++k) x[k] = coord(rng);
    if ((x + vr.centroid).cwiseAbs().maxCoeff() > reach) continue;
    if (std::abs(signed_distance(fitted, x)) <= 3.0 * h) continue;
    probes.push_back(x);
  }
  const ScalarField shifted = [&field, &vr](const Vec& x) { return field.interpolate(Vec(x + vr.centroid)); };
  const auto dec = verify_decomposition(shifted, q, make_ellipsoid_body(fitted), probes);
  rep.extra["decomposition"] = Json{{"p0", dec.p0}, {"grad_p0", dec.grad_p0}, {"probes", dec.probes}};
  rep.check_le("decomposition", dec.max_dev, fd * h * h, "max |v - (v_NP - v_NP(0))| outside a 3h collar");
  return rep;
}

inline int cmd_verify(Run& run) {
  const auto& cfg = run.config();
  std::optional<GridField> field;
  QuadraticBlowdown q = cfg.at("solution_file").is_null()
                            ? blowdown_from_list(cfg.at("q"))
                            : solution_from_config(cfg).blowdown();
  if (!cfg.at("field").is_null()) {
    const auto path = cfg.at("field").get<std::string>();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + path);
    field = read_field(in);
  } else {
    auto s = solve_and_export(run);
    if (!s.result.converged) {
      std::cerr << "solve did not converge\n";
      return kNonConvergence;
    }
    field = std::move(s.result.field);
  }
  const auto rep = verify_field(*field, q, cfg);
  run.write_json("verification_report.json", io::to_json(rep));
  for (const auto& i : rep.invariants)
    if (!i.pass) std::cerr << "FAIL " << i.name << ": value " << i.value << " > " << i.threshold
                           << (i.detail.empty() ? "" : " (" + i.detail + ")") << '\n';
  std::cout << (rep.pass() ? "verification passed" : "verification failed") << '\n';
  return rep.pass() ? kPass : kVerificationFailure;
}

inline int cmd_centroid(Run& run) {
  const auto& cfg = run.config();
  const auto body = io::body_from_json(cfg.at("body"));
  const auto& c = cfg.at("centroid");
  CentroidOptions opts;
  opts.tol = c.at("tol");
  opts.resolution = c.at("resolution");
  opts.seed = cfg.at("seed");
  CentroidResult res;
  try {
    res = weighted_centroid(body, opts);
  } catch (const MembershipViolation& e) {
    std::cerr << e.what() << '\n';
    return kVerificationFailure;
  }
  Json doc = io::to_json(res);
  int code = kPass;
  if (!c.at("oracle").is_null()) {
    const auto oracle = io::read_json_file(c.at("oracle").get<std::string>());
    const Vec expected = io::vec_from_json(oracle.at("x0"), "oracle.x0");
    require_dim(expected, body.dim(), "oracle.x0");
    const double diff = (res.x0 - expected).norm();
    const double tol = c.at("oracle_tol");
    doc["oracle"] = Json{{"x0", io::to_json(expected)}, {"distance", diff}, {"tol", tol}, {"pass", diff <= tol}};
    if (!(diff <= tol)) code = kVerificationFailure;
  }
  run.write_json("centroid.json", doc);
  std::cout << "x0";
  for (Eigen::Index i = 0; i < res.x0.size(); ++i) std::cout << ' ' << format_double(res.x0[i]);
  std::cout << '\n';
  return code;
}

/// PSOR sweep counts and errors for both orderings over a ladder of grids.
inline int cmd_bench_sweep(Run& run) {
  const auto& cfg = run.config();
  const auto sol = solution_from_config(cfg);
  Json rows = Json::array();
  std::ostringstream csv;
  csv << "m,h,order,sweeps,converged,max_error\n";
  bool all_converged = true;
  std::vector<std::pair<double, double>> errors;
  for (const auto& mj : cfg.at("bench").at("m")) {
    Json c = cfg;
    c["grid"]["m"] = mj;
    const GridSpec spec = grid_from_config(c, sol.dim());
    for (const auto* order : {"lexicographic", "red-black"}) {
      c["solver"]["order"] = order;
      const auto params = params_from_config(c, spec);
      const auto t0 = std::chrono::steady_clock::now();
      const auto res = solve_obstacle(spec, [&sol](const Vec& x) { return sol(x); }, params);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      double err = 0.0;
      for (std::size_t i = 0; i < res.field.size(); ++i) {
        const Vec x = spec.node(i);
        if (std::abs(signed_distance(sol.ellipsoid(), x)) <= 3.0 * spec.spacing()) continue;
        err = std::max(err, std::abs(res.field[i] - sol(x)));
      }
      all_converged = all_converged && res.converged;
      if (std::string(order) == "lexicographic") errors.emplace_back(spec.spacing(), err);
      rows.push_back({{"m", spec.points_per_axis()}, {"h", spec.spacing()}, {"order", order},
                      {"sweeps", res.sweeps}, {"converged", res.converged}, {"max_error", err}});
      csv << spec.points_per_axis() << ',' << format_double(spec.spacing()) << ',' << order << ',' << res.sweeps
          << ',' << (res.converged ? 1 : 0) << ',' << format_double(err) << '\n';
      // wall time goes to stdout only so the files stay reproducible
      std::cout << "m=" << spec.points_per_axis() << ' ' << order << ": " << res.sweeps << " sweeps, "
                << seconds << " s, error " << err << '\n';
    }
  }
  Json orders = Json::array();
  for (std::size_t i = 1; i < errors.size(); ++i)
    orders.push_back(std::log(errors[i - 1].second / errors[i].second) / std::log(errors[i - 1].first / errors[i].first));
  run.write_json("bench.json", Json{{"axes", io::to_json(sol.axes())}, {"runs", rows}, {"observed_orders", orders}});
  run.open("bench.csv") << csv.str();
  return all_converged ? kPass : kNonConvergence;
}

//---------------------------------------------------------------------------//
// Entry point
//---------------------------------------------------------------------------//

inline int dispatch(const std::string& command, Run& run) {
  if (command == "make-solution") return cmd_make_solution(run);
  if (command == "solve") return cmd_solve(run);
  if (command == "verify") return cmd_verify(run);
  if (command == "centroid") return cmd_centroid(run);
  if (command == "bench-sweep") return cmd_bench_sweep(run);
  throw InvalidArgument("unknown command " + command);
}

// numerical failures map to 3, everything else raised by the library to 2
inline int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNonConvergence;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
  }
  return kUsageError;
}

inline int run_command(const std::string& command, const Flags& flags) {
  std::optional<Run> run;
  const int setup = guarded([&] {
    run.emplace(merge_config(command, flags));
    return kPass;
  });
  if (setup != kPass) return setup;
  const int code = guarded([&] { return dispatch(command, *run); });
  run->write_manifest();
  return code;
}

inline int main(int argc, char** argv) {
  CLI::App app{"ellobst: obstacle problems with ellipsoidal coincidence sets"};
  app.require_subcommand(1);
  Flags f;
  std::string command;
  for (const auto* name : {"make-solution", "solve", "verify", "centroid", "bench-sweep"}) {
    auto* sub = app.add_subcommand(name);
    sub->fallthrough();
    sub->callback([&command, name] { command = name; });
  }
  app.add_option("--config", f.config, "JSON configuration file");
  app.add_option("--seed", f.seed, "seed for sampling rules and probes");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--q", f.q, "blow-down diagonal, comma separated");
  app.add_option("--m", f.m, "grid points per axis (odd)");
  app.add_option("--box-radius", f.box_radius, "half width of the box");
  app.add_option("--tol", f.tol, "solver or centroid tolerance");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kPass : kUsageError;
  }
  return run_command(command, f);
}

}  // namespace ellobst::cli
