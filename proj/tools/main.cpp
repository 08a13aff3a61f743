#include <Eigen/Core>
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "commands.hpp"

namespace {

// EGMU_THREADS caps internal parallelism; unset means all cores.
void configure_threads() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("EGMU_THREADS")) {
    char* end = nullptr;
    const long parsed = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && parsed > 0)
      n = static_cast<int>(parsed);
  }
  if (n > 0) Eigen::setNbThreads(n);
}

}  // namespace

int main(int argc, char** argv) {
  configure_threads();

  CLI::App app{"Entropy-tilted portfolio construction"};
  // The path subcommand's step option is spelled --h, so help cannot own
  // the short -h anywhere.
  app.set_help_flag("--help", "Print help and exit");
  app.require_subcommand(1);

  std::string problem;
  egmu::cli::SolveOptions solve_opt;
  auto* solve = app.add_subcommand("solve", "Solve for tilted weights");
  solve->add_option("problem", problem, "Problem file")->required();
  solve->add_option("--solver", solve_opt.solver,
                    "newton|elastic|ipf|dykstra|proxgrad|auto");
  double soft = 0.0;
  auto* soft_flag =
      solve->add_option("--soft", soft, "Soft-target penalty weight");
  solve->add_option("--tol", solve_opt.tol, "Convergence tolerance");
  solve->add_option("--max-iter", solve_opt.max_iter, "Iteration cap");
  solve->add_option("--out", solve_opt.out, "Output directory");

  std::string sens_problem;
  std::filesystem::path sens_out = ".";
  auto* sens = app.add_subcommand("sensitivity", "Target sensitivities");
  sens->add_option("problem", sens_problem, "Problem file")->required();
  sens->add_option("--out", sens_out, "Output directory");

  std::string path_problem;
  egmu::cli::PathOptions path_opt;
  bool no_correct = false;
  auto* path = app.add_subcommand("path", "Trace a target homotopy");
  path->set_help_flag("--help", "Print help and exit");
  path->add_option("problem", path_problem, "Problem file")->required();
  path->add_option("--delta", path_opt.delta,
                   "Target move: file or inline factor=value,...")
      ->required();
  path->add_option("--h", path_opt.h, "Step size in (0,1]");
  path->add_option("--integrator", path_opt.integrator, "rk2|euler");
  path->add_flag("--no-correct", no_correct, "Skip Newton correction");
  path->add_option("--out", path_opt.out, "Output directory");

  std::string check_problem, check_weights;
  auto* check = app.add_subcommand("check", "Audit a weights file");
  check->add_option("problem", check_problem, "Problem file")->required();
  check->add_option("weights", check_weights, "Weights file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? egmu::cli::kExitOk : egmu::cli::kExitProblem;
  }

  if (solve->parsed()) {
    if (soft_flag->count() > 0) solve_opt.soft = soft;
    return egmu::cli::run_solve(problem, solve_opt, std::cerr);
  }
  if (sens->parsed())
    return egmu::cli::run_sensitivity(sens_problem, sens_out, std::cerr);
  if (path->parsed()) {
    path_opt.correct = !no_correct;
    return egmu::cli::run_path(path_problem, path_opt, std::cerr);
  }
  return egmu::cli::run_check(check_problem, check_weights, std::cout,
                              std::cerr);
}
