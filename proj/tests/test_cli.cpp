#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "commands.hpp"
#include "problem_io.hpp"

namespace fs = std::filesystem;
using namespace egmu::cli;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("egmu_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
};

void put(const fs::path& file, const std::string& text) {
  std::ofstream out(file);
  REQUIRE(out.good());
  out << text;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// report.csv and weights.csv are plain key/value and row tables; split on
// the first comma per line, skipping the header.
std::map<std::string, std::string> read_report(const fs::path& file) {
  std::ifstream in(file);
  REQUIRE(in.good());
  std::map<std::string, std::string> out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    REQUIRE(comma != std::string::npos);
    out[line.substr(0, comma)] = line.substr(comma + 1);
  }
  return out;
}

struct WeightRow {
  double benchmark = 0.0;
  double weight = 0.0;
  std::string weight_text;
  std::string active;
};

std::map<std::string, WeightRow> read_weights(const fs::path& file) {
  CsvTable t = read_csv(file);
  REQUIRE(t.header ==
          std::vector<std::string>(
              {"asset_id", "benchmark", "weight", "active_constraints"}));
  std::map<std::string, WeightRow> out;
  for (const auto& row : t.rows)
    out[row[0]] = {parse_double(row[1], "benchmark"),
                   parse_double(row[2], "weight"), row[2], row[3]};
  return out;
}

// Two assets, one factor with exposures (0, 1): the target is the weight
// of the second asset, so every output has a closed form.
fs::path two_asset_problem(const fs::path& dir, const std::string& target,
                           const std::string& extra_sections = "") {
  put(dir / "benchmark.csv", "asset_id,weight\nAAA,0.5\nBBB,0.5\n");
  put(dir / "exposures.csv", "asset_id,mkt\nAAA,0\nBBB,1\n");
  put(dir / "targets.csv", "factor,value\nmkt," + target + "\n");
  put(dir / "problem.ini",
      "[data]\n"
      "benchmark = benchmark.csv\n"
      "exposures = exposures.csv\n"
      "targets = targets.csv\n" +
          extra_sections);
  return dir / "problem.ini";
}

int solve_into(const fs::path& problem, const fs::path& out,
               SolveOptions opt = {}) {
  opt.out = out;
  std::ostringstream err;
  return run_solve(problem, opt, err);
}

}  // namespace

TEST_CASE("solve: two-asset closed form end to end") {
  TempDir tmp("solve_basic");
  const auto problem = two_asset_problem(tmp.path, "0.75");
  const auto out = tmp.path / "out";

  REQUIRE(solve_into(problem, out) == kExitOk);

  const auto w = read_weights(out / "weights.csv");
  CHECK(std::abs(w.at("AAA").weight - 0.25) < 1e-9);
  CHECK(std::abs(w.at("BBB").weight - 0.75) < 1e-9);
  CHECK(w.at("AAA").benchmark == 0.5);
  CHECK(w.at("AAA").active.empty());

  const auto rep = read_report(out / "report.csv");
  CHECK(rep.at("status") == "Converged");
  CHECK(rep.at("solver") == "newton");
  CHECK(rep.at("mode") == "equality");
  CHECK(std::abs(parse_double(rep.at("kl"), "kl") - 0.13081203594113697) <
        1e-10);
  CHECK(std::abs(parse_double(rep.at("theta.mkt"), "theta") - std::log(3.0)) <
        1e-8);
  CHECK(std::abs(parse_double(rep.at("residual.mkt"), "resid")) < 1e-8);
  CHECK(rep.count("trace.0.objective") == 1);
}

TEST_CASE("solve: ipf agrees with newton through the CLI") {
  TempDir tmp("solve_ipf");
  const auto problem = two_asset_problem(tmp.path, "0.75");

  REQUIRE(solve_into(problem, tmp.path / "nt") == kExitOk);
  SolveOptions opt;
  opt.solver = "ipf";
  REQUIRE(solve_into(problem, tmp.path / "ipf", opt) == kExitOk);

  const auto a = read_weights(tmp.path / "nt" / "weights.csv");
  const auto b = read_weights(tmp.path / "ipf" / "weights.csv");
  for (const auto& [id, row] : a)
    CHECK(std::abs(row.weight - b.at(id).weight) < 1e-6);
  CHECK(read_report(tmp.path / "ipf" / "report.csv").at("solver") == "ipf");
}

TEST_CASE("solve: weights survive a 17-digit round trip exactly") {
  TempDir tmp("roundtrip");
  const auto problem = two_asset_problem(tmp.path, "0.75");
  const auto out = tmp.path / "out";
  REQUIRE(solve_into(problem, out) == kExitOk);

  for (const auto& [id, row] : read_weights(out / "weights.csv")) {
    (void)id;
    CHECK(format_full(parse_double(row.weight_text, "w")) == row.weight_text);
  }
  const auto rep = read_report(out / "report.csv");
  const std::string theta = rep.at("theta.mkt");
  CHECK(format_full(parse_double(theta, "theta")) == theta);
}

TEST_CASE("solve: unknown factor in targets is a validation failure") {
  TempDir tmp("bad_factor");
  const auto problem = two_asset_problem(tmp.path, "0.75");
  put(tmp.path / "targets.csv", "factor,value\nmomentum,0.75\n");

  std::ostringstream err;
  SolveOptions opt;
  opt.out = tmp.path / "out";
  CHECK(run_solve(problem, opt, err) == kExitProblem);
  CHECK(err.str().find("mkt") != std::string::npos);
}

TEST_CASE("solve: missing input file maps to the I/O exit code") {
  TempDir tmp("missing_file");
  const auto problem = two_asset_problem(tmp.path, "0.75");
  fs::remove(tmp.path / "exposures.csv");

  std::ostringstream err;
  SolveOptions opt;
  opt.out = tmp.path / "out";
  CHECK(run_solve(problem, opt, err) == kExitIo);
}

TEST_CASE("solve: reruns are byte identical") {
  TempDir tmp("determinism");
  const auto problem = two_asset_problem(tmp.path, "0.6180339887498949");

  REQUIRE(solve_into(problem, tmp.path / "a") == kExitOk);
  REQUIRE(solve_into(problem, tmp.path / "b") == kExitOk);

  CHECK(slurp(tmp.path / "a" / "weights.csv") ==
        slurp(tmp.path / "b" / "weights.csv"));
  CHECK(slurp(tmp.path / "a" / "report.csv") ==
        slurp(tmp.path / "b" / "report.csv"));
}

TEST_CASE("solve: elastic via --soft satisfies the soft identity") {
  TempDir tmp("elastic");
  const auto problem = two_asset_problem(tmp.path, "0.9");
  SolveOptions opt;
  opt.soft = 5.0;
  REQUIRE(solve_into(problem, tmp.path / "out", opt) == kExitOk);

  const auto rep = read_report(tmp.path / "out" / "report.csv");
  CHECK(rep.at("solver") == "elastic");
  CHECK(parse_double(rep.at("lambda_soft"), "lam") == 5.0);
  // residual here is the dual gradient t - X'w - theta/lambda, so at the
  // optimum it vanishes; reconstruct the soft identity from the weights.
  const auto w = read_weights(tmp.path / "out" / "weights.csv");
  const double moment = w.at("BBB").weight;
  const double theta = parse_double(rep.at("theta.mkt"), "theta");
  CHECK(std::abs(5.0 * (0.9 - moment) - theta) < 1e-7);
}

TEST_CASE("solve: infeasible cap reports without converging and exits 2") {
  TempDir tmp("cap_infeasible");
  // Equality demands w_BBB = 0.75, cap forbids anything above 0.6.
  const auto problem =
      two_asset_problem(tmp.path, "0.75", "[constraints]\ncap = 0.6\n");

  std::ostringstream err;
  SolveOptions opt;
  opt.out = tmp.path / "out";
  CHECK(run_solve(problem, opt, err) == kExitSolver);
  const auto rep = read_report(tmp.path / "out" / "report.csv");
  CHECK(rep.at("solver") == "dykstra");
  CHECK(rep.at("status") == "EmptyIntersectionSuspected");
  CHECK(rep.at("message").find("intersect") != std::string::npos);
  CHECK(fs::exists(tmp.path / "out" / "weights.csv"));
}

TEST_CASE("solve: binding cap is listed in active_constraints") {
  TempDir tmp("cap_binding");
  // Tight tol keeps the converged weight within the 1e-8 binding window.
  const auto problem = two_asset_problem(
      tmp.path, "0.75", "[constraints]\ncap = 0.75\n[solver]\ntol = 1e-10\n");
  REQUIRE(solve_into(problem, tmp.path / "out") == kExitOk);

  const auto w = read_weights(tmp.path / "out" / "weights.csv");
  CHECK(std::abs(w.at("BBB").weight - 0.75) < 1e-7);
  CHECK(w.at("BBB").active == "cap_BBB");
  CHECK(w.at("AAA").active.empty());  // 0.25 sits far from its 0.75 cap
}

TEST_CASE("solve: inactive cap leaves active_constraints empty") {
  TempDir tmp("cap_loose");
  const auto problem =
      two_asset_problem(tmp.path, "0.75", "[constraints]\ncap = 0.9\n");
  REQUIRE(solve_into(problem, tmp.path / "out") == kExitOk);
  const auto w = read_weights(tmp.path / "out" / "weights.csv");
  CHECK(std::abs(w.at("BBB").weight - 0.75) < 1e-7);
  CHECK(w.at("BBB").active.empty());
}

TEST_CASE("solve: multi-period blends the prior before solving") {
  TempDir tmp("multiperiod");
  put(tmp.path / "prev.csv", "asset_id,weight\nAAA,0.9\nBBB,0.1\n");
  const auto problem = two_asset_problem(
      tmp.path, "0.75", "[multi_period]\ngamma = 1\nprev_weights = prev.csv\n");
  REQUIRE(solve_into(problem, tmp.path / "out") == kExitOk);

  const auto rep = read_report(tmp.path / "out" / "report.csv");
  // gamma=1 blend of (0.5,0.5) and (0.9,0.1) has the closed form below.
  CHECK(std::abs(parse_double(rep.at("prior.AAA"), "p") - 0.75) < 1e-12);
  CHECK(std::abs(parse_double(rep.at("prior.BBB"), "p") - 0.25) < 1e-12);
  CHECK(parse_double(rep.at("gamma"), "g") == 1.0);

  // Weights still satisfy the target; the prior only moves the objective.
  const auto w = read_weights(tmp.path / "out" / "weights.csv");
  CHECK(std::abs(w.at("BBB").weight - 0.75) < 1e-8);
  // The benchmark column keeps the original prior, not the blend.
  CHECK(w.at("AAA").benchmark == 0.5);
}

TEST_CASE("check: solver output passes, tampered weights fail") {
  TempDir tmp("check");
  const auto problem = two_asset_problem(tmp.path, "0.75");
  REQUIRE(solve_into(problem, tmp.path / "out") == kExitOk);

  std::ostringstream report, err;
  CHECK(run_check(problem, tmp.path / "out" / "weights.csv", report, err) ==
        kExitOk);
  CHECK(report.str().find("verdict=pass") != std::string::npos);

  put(tmp.path / "tampered.csv",
      "asset_id,weight\nAAA,0.35\nBBB,0.65\n");
  std::ostringstream report2, err2;
  CHECK(run_check(problem, tmp.path / "tampered.csv", report2, err2) ==
        kExitSolver);
  CHECK(report2.str().find("verdict=fail") != std::string::npos);
}

TEST_CASE("check: flags the benchmark itself when targets move it") {
  TempDir tmp("check_bench");
  const auto problem = two_asset_problem(tmp.path, "0.75");
  put(tmp.path / "bench_as_weights.csv", "asset_id,weight\nAAA,0.5\nBBB,0.5\n");

  std::ostringstream report, err;
  CHECK(run_check(problem, tmp.path / "bench_as_weights.csv", report, err) ==
        kExitSolver);
  CHECK(report.str().find("verdict=fail") != std::string::npos);
}

TEST_CASE("path: endpoint matches a direct solve") {
  TempDir tmp("path_endpoint");
  // Start exactly at the benchmark moments so lambda=0 is trivially solved.
  const auto problem = two_asset_problem(tmp.path, "0.5");

  PathOptions opt;
  opt.delta = "mkt=0.25";
  opt.h = 0.1;
  opt.out = tmp.path / "out";
  std::ostringstream err;
  REQUIRE(run_path(problem, opt, err) == kExitOk);

  CsvTable t = read_csv(tmp.path / "out" / "path.csv");
  REQUIRE(t.header[0] == "lambda");
  REQUIRE(t.rows.size() == 11);

  // Terminal row equals the solution of the shifted problem.
  TempDir end("path_endpoint_ref");
  const auto ref_problem = two_asset_problem(end.path, "0.75");
  REQUIRE(solve_into(ref_problem, end.path / "out") == kExitOk);
  const auto ref = read_report(end.path / "out" / "report.csv");

  const auto& last = t.rows.back();
  CHECK(std::abs(parse_double(last[0], "lambda") - 1.0) < 1e-15);
  const double theta_end = parse_double(last[1], "theta");
  CHECK(std::abs(theta_end - parse_double(ref.at("theta.mkt"), "t")) < 1e-6);

  // KL grows monotonically away from the benchmark start.
  double prev = -1e-18;
  const auto kl_col = static_cast<std::size_t>(t.column("kl"));
  for (const auto& row : t.rows) {
    const double kl = parse_double(row[kl_col], "kl");
    CHECK(kl >= prev - 1e-12);
    prev = kl;
  }
}

TEST_CASE("path: zero delta leaves every sample at the anchor") {
  TempDir tmp("path_zero");
  const auto problem = two_asset_problem(tmp.path, "0.75");
  PathOptions opt;
  opt.delta = "mkt=0";
  opt.h = 0.25;
  opt.out = tmp.path / "out";
  std::ostringstream err;
  REQUIRE(run_path(problem, opt, err) == kExitOk);

  CsvTable t = read_csv(tmp.path / "out" / "path.csv");
  REQUIRE(t.rows.size() == 5);
  const auto theta_col = static_cast<std::size_t>(t.column("theta_mkt"));
  const double first = parse_double(t.rows.front()[theta_col], "theta");
  for (const auto& row : t.rows)
    CHECK(std::abs(parse_double(row[theta_col], "theta") - first) < 1e-9);
}

TEST_CASE("path: delta file and unknown factors") {
  TempDir tmp("path_delta_file");
  const auto problem = two_asset_problem(tmp.path, "0.5");
  put(tmp.path / "delta.csv", "factor,value\nmkt,0.25\n");

  PathOptions opt;
  opt.delta = (tmp.path / "delta.csv").string();
  opt.out = tmp.path / "out";
  std::ostringstream err;
  CHECK(run_path(problem, opt, err) == kExitOk);

  PathOptions bad;
  bad.delta = "size=0.1";
  bad.out = tmp.path / "out2";
  std::ostringstream err2;
  CHECK(run_path(problem, bad, err2) == kExitProblem);
}

TEST_CASE("sensitivity: two-asset closed form through the CLI") {
  TempDir tmp("sens");
  const auto problem = two_asset_problem(tmp.path, "0.75");
  std::ostringstream err;
  REQUIRE(run_sensitivity(problem, tmp.path / "out", err) == kExitOk);

  CsvTable dt = read_csv(tmp.path / "out" / "dtheta_dt.csv");
  REQUIRE(dt.rows.size() == 1);
  CHECK(std::abs(parse_double(dt.rows[0][1], "dt") - 16.0 / 3.0) < 1e-6);

  CsvTable dw = read_csv(tmp.path / "out" / "dw_dt.csv");
  REQUIRE(dw.rows.size() == 2);
  const double a = parse_double(dw.rows[0][1], "dw");
  const double b = parse_double(dw.rows[1][1], "dw");
  CHECK(std::abs(a + 1.0) < 1e-6);
  CHECK(std::abs(b - 1.0) < 1e-6);
  CHECK(std::abs(a + b) < 1e-10);

  CsvTable tm = read_csv(tmp.path / "out" / "top_movers.csv");
  REQUIRE(tm.rows.size() == 1);
  CHECK(tm.rows[0][0] == "mkt");
}

TEST_CASE("solve: robust mode dispatches to proxgrad under auto") {
  TempDir tmp("robust");
  const auto problem = two_asset_problem(
      tmp.path, "0.9", "[mode]\nkind = robust_l2\nrho = 0.2\n");
  REQUIRE(solve_into(problem, tmp.path / "out") == kExitOk);

  const auto rep = read_report(tmp.path / "out" / "report.csv");
  CHECK(rep.at("solver") == "proxgrad");
  CHECK(rep.at("mode") == "robust_l2");
  // Ball of radius 0.2 around 0.9: the moment stops at 0.7.
  const auto w = read_weights(tmp.path / "out" / "weights.csv");
  CHECK(std::abs(w.at("BBB").weight - 0.7) < 1e-6);
}

TEST_CASE("solve: conflicting solver picks are validation errors") {
  TempDir tmp("conflicts");
  const auto problem = two_asset_problem(
      tmp.path, "0.75", "[constraints]\ncap = 0.8\n");

  SolveOptions opt;
  opt.solver = "newton";
  opt.out = tmp.path / "out";
  std::ostringstream err;
  CHECK(run_solve(problem, opt, err) == kExitProblem);
  CHECK(err.str().find("dykstra") != std::string::npos);
}

// The remaining cases drive the installed binary itself; they need the
// EGMU_BIN environment variable that the test harness sets.
namespace {

const char* egmu_bin() { return std::getenv("EGMU_BIN"); }

int run_shell(const std::string& cmd, const fs::path& dir) {
  const std::string full = cmd + " > " + (dir / "stdout.txt").string() +
                           " 2> " + (dir / "stderr.txt").string();
  const int raw = std::system(full.c_str());
  REQUIRE(raw != -1);
  return WEXITSTATUS(raw);
}

int run_binary(const std::string& args, const fs::path& dir) {
  return run_shell(std::string(egmu_bin()) + " " + args, dir);
}

}  // namespace

TEST_CASE("binary: solve, check, and exit codes") {
  if (!egmu_bin()) {
    MESSAGE("EGMU_BIN not set; skipping binary test");
    return;
  }
  TempDir tmp("binary");
  const auto problem = two_asset_problem(tmp.path, "0.75");
  const auto out = tmp.path / "out";

  REQUIRE(run_binary("solve " + problem.string() + " --out " + out.string(),
                     tmp.path) == 0);
  const auto w = read_weights(out / "weights.csv");
  CHECK(std::abs(w.at("BBB").weight - 0.75) < 1e-9);

  CHECK(run_binary("check " + problem.string() + " " +
                       (out / "weights.csv").string(),
                   tmp.path) == 0);
  CHECK(slurp(tmp.path / "stdout.txt").find("verdict=pass") !=
        std::string::npos);

  // Unknown subcommand and missing files map to the documented codes.
  CHECK(run_binary("solve " + (tmp.path / "nope.ini").string(), tmp.path) ==
        3);
  put(tmp.path / "targets.csv", "factor,value\nwrong,0.75\n");
  CHECK(run_binary("solve " + problem.string() + " --out " + out.string(),
                   tmp.path) == 1);
}

TEST_CASE("binary: thread cap does not change the bytes") {
  if (!egmu_bin()) {
    MESSAGE("EGMU_BIN not set; skipping binary test");
    return;
  }
  TempDir tmp("binary_threads");
  const auto problem = two_asset_problem(tmp.path, "0.6");

  const std::string base =
      std::string(egmu_bin()) + " solve " + problem.string() + " --out ";
  REQUIRE(run_shell("EGMU_THREADS=1 " + base + (tmp.path / "a").string(),
                    tmp.path) == 0);
  REQUIRE(run_shell("EGMU_THREADS=4 " + base + (tmp.path / "b").string(),
                    tmp.path) == 0);
  CHECK(slurp(tmp.path / "a" / "weights.csv") ==
        slurp(tmp.path / "b" / "weights.csv"));
  CHECK(slurp(tmp.path / "a" / "report.csv") ==
        slurp(tmp.path / "b" / "report.csv"));
}
