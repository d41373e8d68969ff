#include "ellobst/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <set>

using namespace ellobst;
namespace fs = std::filesystem;
using cli::Flags;
using cli::Json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ellobst_cli_test" / name;
  fs::remove_all(dir);
  return dir;
}

Flags flags_for(const fs::path& out) {
  Flags f;
  f.out = out.string();
  return f;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Json manifest(const fs::path& dir) { return io::read_json_file((dir / "manifest.json").string()); }

fs::path write_config(const fs::path& path, const Json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream(path) << j.dump();
  return path;
}

int run_argv(std::vector<std::string> args) {
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli::main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST(CliMakeSolution, TraceValidation) {
  auto f = flags_for(scratch("trace"));
  f.q = "0.2,0.1,0.1";
  EXPECT_EQ(cli::run_command("make-solution", f), cli::kUsageError);
  f.q = "0.3,-0.1,0.3";
  EXPECT_EQ(cli::run_command("make-solution", f), cli::kUsageError);
  f.q = "0.3,x,0.1";
  EXPECT_EQ(cli::run_command("make-solution", f), cli::kUsageError);
}

TEST(CliMakeSolution, NearBallInputIsRenormalized) {
  const auto dir = scratch("nearball");
  auto f = flags_for(dir);
  f.q = "0.1667,0.1667,0.1666";
  ASSERT_EQ(cli::run_command("make-solution", f), cli::kPass);
  const auto sol = io::solution_from_json(io::read_json_file((dir / "solution.json").string()));
  EXPECT_NEAR(sol.blowdown().diag().sum(), 0.5, 1e-15);
  // the input is a spheroid 1e-4 away from the ball, and its axes follow suit
  EXPECT_LT((sol.axes() - Vec::Ones(3)).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(CliMakeSolution, RoundtripThroughKappa) {
  const auto dir = scratch("roundtrip");
  auto f = flags_for(dir);
  f.q = "0.3,0.1,0.1";
  f.m = 17;
  ASSERT_EQ(cli::run_command("make-solution", f), cli::kPass);
  const auto doc = io::read_json_file((dir / "solution.json").string());
  const Vec axes = io::vec_from_json(doc.at("axes"), "axes");
  const Vec kappa = kappa_coefficients(axes).kappa;
  EXPECT_LT((kappa - make_vec({0.3, 0.1, 0.1})).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_TRUE(fs::exists(dir / "solution_field.bin"));
  std::ifstream in(dir / "solution_field.bin", std::ios::binary);
  EXPECT_EQ(read_field(in).spec(), GridSpec(3, 3.0, 17));
}

TEST(CliSolve, EvenGridRejected) {
  auto f = flags_for(scratch("even"));
  f.m = 64;
  EXPECT_EQ(cli::run_command("solve", f), cli::kUsageError);
}

TEST(CliSolve, ZeroBoundaryGivesZeroField) {
  const auto dir = scratch("zero");
  auto f = flags_for(dir);
  f.config = write_config(dir.parent_path() / "zero.json", Json{{"boundary", "zero"}}).string();
  f.m = 17;
  ASSERT_EQ(cli::run_command("solve", f), cli::kPass);
  std::ifstream in(dir / "field.bin", std::ios::binary);
  const auto field = read_field(in);
  for (double v : field.values()) EXPECT_EQ(v, 0.0);
  EXPECT_LE(io::read_json_file((dir / "solve_report.json").string()).at("sweeps").get<int>(), 1);
}

TEST(CliSolve, BallRunWithinTolerances) {
  const auto dir = scratch("ball");
  auto f = flags_for(dir);
  f.m = 33;
  ASSERT_EQ(cli::run_command("solve", f), cli::kPass);
  const auto rep = io::read_json_file((dir / "solve_report.json").string());
  const double tol = rep.at("tol");
  EXPECT_TRUE(rep.at("converged").get<bool>());
  EXPECT_LE(rep.at("residual").at("max_excess_laplacian").get<double>(), 10 * tol);
  EXPECT_LE(rep.at("exact").at("mask_hausdorff").get<double>(), 2 * 0.1875);
}

TEST(CliSolve, NonConvergenceExitCode) {
  const auto dir = scratch("nonconv");
  auto f = flags_for(dir);
  f.config = write_config(dir.parent_path() / "nonconv.json",
                          Json{{"solver", {{"max_sweeps", 3}, {"cascade", false}}}})
                 .string();
  f.m = 17;
  EXPECT_EQ(cli::run_command("solve", f), cli::kNonConvergence);
  EXPECT_FALSE(io::read_json_file((dir / "solve_report.json").string()).at("converged").get<bool>());
}

TEST(CliRun, OutputsAreByteIdentical) {
  const auto a = scratch("ident_a"), b = scratch("ident_b");
  for (const auto& dir : {a, b}) {
    auto f = flags_for(dir);
    f.q = "0.3,0.1,0.1";
    f.m = 33;
    ASSERT_EQ(cli::run_command("verify", f), cli::kPass);
  }
  const auto listed = manifest(a).at("outputs");
  ASSERT_GE(listed.size(), 5u);
  for (const auto& name : listed) {
    const auto file = name.get<std::string>();
    EXPECT_EQ(slurp(a / file), slurp(b / file)) << file;
  }
}

TEST(CliRun, ManifestListsEveryOutput) {
  const auto dir = scratch("manifest");
  auto f = flags_for(dir);
  f.m = 33;
  ASSERT_EQ(cli::run_command("solve", f), cli::kPass);
  std::set<std::string> listed, present;
  const auto m = manifest(dir);
  for (const auto& name : m.at("outputs")) listed.insert(name.get<std::string>());
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().filename() != "manifest.json") present.insert(entry.path().filename().string());
  EXPECT_EQ(listed, present);
  EXPECT_EQ(manifest(dir).at("version"), kVersion);
}

TEST(CliRun, FlagsOverrideFileOverrideDefaults) {
  const auto dir = scratch("precedence");
  const auto cfg = write_config(dir.parent_path() / "precedence.json",
                                Json{{"grid", {{"m", 17}, {"box_radius", 2.5}}}, {"seed", 4}});
  auto f = flags_for(dir);
  f.config = cfg.string();
  f.m = 19;
  ASSERT_EQ(cli::run_command("solve", f), cli::kPass);
  const auto c = manifest(dir).at("config");
  EXPECT_EQ(c.at("grid").at("m"), 19);
  EXPECT_EQ(c.at("grid").at("box_radius"), 2.5);
  EXPECT_EQ(c.at("seed"), 4);
  EXPECT_EQ(c.at("solver").at("order"), "lexicographic");
}

TEST(CliRun, ThreadCountDoesNotChangeOutput) {
  const auto a = scratch("threads_a"), b = scratch("threads_b");
  const auto cfg = write_config(a.parent_path() / "threads.json", Json{{"solver", {{"order", "red-black"}}}});
  int i = 0;
  for (const auto& dir : {a, b}) {
    ::setenv("ELLOBST_THREADS", i++ == 0 ? "1" : "3", 1);
    auto f = flags_for(dir);
    f.config = cfg.string();
    f.m = 33;
    ASSERT_EQ(cli::run_command("solve", f), cli::kPass);
  }
  ::unsetenv("ELLOBST_THREADS");
  EXPECT_EQ(slurp(a / "field.bin"), slurp(b / "field.bin"));
}

TEST(CliRun, UsageErrors) {
  EXPECT_EQ(run_argv({"ellobst"}), cli::kUsageError);
  EXPECT_EQ(run_argv({"ellobst", "frobnicate"}), cli::kUsageError);
  EXPECT_EQ(run_argv({"ellobst", "solve", "--m", "abc"}), cli::kUsageError);
  auto f = flags_for(scratch("missing_config"));
  f.config = "/nonexistent/config.json";
  EXPECT_EQ(cli::run_command("solve", f), cli::kUsageError);
}

TEST(CliVerify, BallRunPassesWithCentroidAtOrigin) {
  const auto dir = scratch("verify_ball");
  auto f = flags_for(dir);
  f.m = 33;
  ASSERT_EQ(cli::run_command("verify", f), cli::kPass);
  const auto rep = io::read_json_file((dir / "verification_report.json").string());
  EXPECT_EQ(rep.at("schema"), io::kReportSchema);
  EXPECT_TRUE(rep.at("pass").get<bool>());
  EXPECT_LE(io::vec_from_json(rep.at("diagnostics").at("centroid"), "centroid").norm(), 0.1875);
  EXPECT_TRUE(rep.at("fitted_quadric").contains("A"));
  EXPECT_TRUE(rep.at("tolerances").contains("axis_mismatch"));
}

TEST(CliVerify, InjectedNaNFails) {
  const auto solved = scratch("nan_source");
  auto f = flags_for(solved);
  f.m = 33;
  ASSERT_EQ(cli::run_command("solve", f), cli::kPass);
  GridField field = [&] {
    std::ifstream in(solved / "field.bin", std::ios::binary);
    return read_field(in);
  }();
  field[field.spec().flat({16, 16, 16})] = std::numeric_limits<double>::quiet_NaN();
  const auto bad = solved.parent_path() / "nan_field.bin";
  {
    std::ofstream os(bad, std::ios::binary);
    write_field(os, field);
  }
  const auto dir = scratch("nan_verify");
  auto g = flags_for(dir);
  g.config = write_config(dir.parent_path() / "nan.json", Json{{"field", bad.string()}}).string();
  EXPECT_EQ(cli::run_command("verify", g), cli::kVerificationFailure);
  const auto rep = io::read_json_file((dir / "verification_report.json").string());
  EXPECT_FALSE(rep.at("pass").get<bool>());
  EXPECT_EQ(rep.at("invariants").at(0).at("name"), "complementarity");
  EXPECT_FALSE(rep.at("invariants").at(0).at("pass").get<bool>());
}

TEST(CliCentroid, CubeAndShiftedEllipsoid) {
  const auto cube = scratch("cube");
  ASSERT_EQ(cli::run_command("centroid", flags_for(cube)), cli::kPass);
  const auto x = io::vec_from_json(io::read_json_file((cube / "centroid.json").string()).at("x0"), "x0");
  EXPECT_LT(x.norm(), 1e-8);

  const auto ell = scratch("ellipsoid");
  auto f = flags_for(ell);
  f.config = write_config(ell.parent_path() / "ell.json",
                          Json{{"body", {{"kind", "ellipsoid"}, {"center", {1, 2, 3}}, {"axes", {2, 1, 0.5}}}}})
                 .string();
  ASSERT_EQ(cli::run_command("centroid", f), cli::kPass);
  const auto doc = io::read_json_file((ell / "centroid.json").string());
  EXPECT_LT((io::vec_from_json(doc.at("x0"), "x0") - make_vec({1, 2, 3})).norm(), 1e-8);
  EXPECT_FALSE(doc.at("epsilon_trace").empty());
}

TEST(CliCentroid, SimplexMatchesCommittedOracle) {
  const auto dir = scratch("simplex");
  const fs::path oracle = fs::path(ELLOBST_TEST_DATA) / "simplex_centroid_oracle.json";
  const auto ref = io::read_json_file(oracle.string());
  auto f = flags_for(dir);
  f.config = write_config(dir.parent_path() / "simplex.json",
                          Json{{"body", ref.at("body")},
                               {"centroid", {{"resolution", 160}, {"oracle", oracle.string()}}}})
                 .string();
  ASSERT_EQ(cli::run_command("centroid", f), cli::kPass);
  const auto doc = io::read_json_file((dir / "centroid.json").string());
  EXPECT_LE(doc.at("oracle").at("distance").get<double>(), 1e-5);
}

TEST(CliCentroid, InvalidBodyIsUsageError) {
  const auto dir = scratch("badbody");
  auto f = flags_for(dir);
  f.config = write_config(dir.parent_path() / "bad.json", Json{{"body", {{"kind", "torus"}}}}).string();
  EXPECT_EQ(cli::run_command("centroid", f), cli::kUsageError);
  f.config = write_config(dir.parent_path() / "bad2.json",
                          Json{{"body", {{"kind", "box"}, {"lower", {1, 1, 1}}, {"upper", {0, 0, 0}}}}})
                 .string();
  EXPECT_EQ(cli::run_command("centroid", f), cli::kUsageError);
}

TEST(CliBench, SweepLadder) {
  const auto dir = scratch("bench");
  auto f = flags_for(dir);
  f.m = 33;
  ASSERT_EQ(cli::run_command("bench-sweep", f), cli::kPass);
  const auto doc = io::read_json_file((dir / "bench.json").string());
  EXPECT_EQ(doc.at("runs").size(), 4u);
  EXPECT_EQ(doc.at("observed_orders").size(), 1u);
  EXPECT_EQ(manifest(dir).at("config").at("bench").at("m"), Json::parse("[17, 33]"));
}

TEST(Io, SolutionRoundtrip) {
  const EllipsoidSolution sol(QuadraticBlowdown(make_vec({0.3, 0.1, 0.1})));
  const auto back = io::solution_from_json(Json::parse(io::to_json(sol).dump()));
  EXPECT_EQ(back.axes(), sol.axes());
  EXPECT_EQ(back.np_at_origin(), sol.np_at_origin());
  auto broken = io::to_json(sol);
  broken["axes"][0] = 1.0;
  EXPECT_THROW(io::solution_from_json(broken), InvalidArgument);
  broken = io::to_json(sol);
  broken["schema"] = "other";
  EXPECT_THROW(io::solution_from_json(broken), InvalidArgument);
}

TEST(Io, BodyZoo) {
  const auto e = io::body_from_json(Json::parse(R"({"kind": "ellipsoid", "center": [1, 0, 0], "axes": [1, 2, 3]})"));
  EXPECT_TRUE(e.contains(make_vec({1, 1.9, 0})));
  EXPECT_FALSE(e.contains(make_vec({0, 1.9, 0})));
  const auto b = io::body_from_json(Json::parse(R"({"kind": "box", "lower": [0, 0], "upper": [1, 2]})"));
  EXPECT_EQ(b.dim(), 2);
  EXPECT_NEAR(b.volume(), 2.0, 1e-6);
  const auto s = io::body_from_json(
      Json::parse(R"({"kind": "simplex", "vertices": [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]})"));
  EXPECT_NEAR(s.volume(), 1.0 / 6.0, 1e-4);
  const auto p = io::body_from_json(Json::parse(R"({"kind": "superellipsoid", "axes": [1, 1, 1], "exponent": 4})"));
  EXPECT_TRUE(p.contains(make_vec({0.8, 0.8, 0.0})));
  EXPECT_THROW(io::body_from_json(Json::parse(R"({"axes": [1, 1]})")), InvalidArgument);
  EXPECT_THROW(io::body_from_json(Json::parse(R"({"kind": "ellipsoid", "axes": [1, 1, 1, 1, 1]})")),
               InvalidArgument);
}

TEST(Io, NonFiniteNumbersBecomeStrings) {
  io::VerificationReport r;
  r.check_le("a", std::numeric_limits<double>::quiet_NaN(), 1.0);
  r.check_le("b", 0.5, 1.0);
  const auto j = io::to_json(r);
  EXPECT_EQ(j.at("invariants").at(0).at("value"), "nan");
  EXPECT_FALSE(j.at("invariants").at(0).at("pass").get<bool>());
  EXPECT_FALSE(j.at("pass").get<bool>());
  EXPECT_NO_THROW(Json::parse(j.dump()));
}
