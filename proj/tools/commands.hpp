#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace egmu::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitProblem = 1;  // input the user must fix
inline constexpr int kExitSolver = 2;   // solver failed or tolerances missed
inline constexpr int kExitIo = 3;       // filesystem trouble

struct SolveOptions {
  std::string solver = "auto";  // newton|elastic|ipf|dykstra|proxgrad|auto
  std::optional<double> soft;   // overrides the [mode] block
  std::optional<double> tol;
  std::optional<int> max_iter;
  std::filesystem::path out = ".";
};

struct PathOptions {
  std::string delta;  // targets-file path or inline "factor=value,..."
  double h = 0.02;
  std::string integrator = "rk2";  // rk2|euler
  bool correct = true;
  std::filesystem::path out = ".";
};

// Each runner returns the process exit code and reports human-readable
// trouble on err; machine-readable results go to files under out.
int run_solve(const std::filesystem::path& problem_path,
              const SolveOptions& opt, std::ostream& err);
int run_sensitivity(const std::filesystem::path& problem_path,
                    const std::filesystem::path& out_dir, std::ostream& err);
int run_path(const std::filesystem::path& problem_path, const PathOptions& opt,
             std::ostream& err);
int run_check(const std::filesystem::path& problem_path,
              const std::filesystem::path& weights_path, std::ostream& out,
              std::ostream& err);

}  // namespace egmu::cli
