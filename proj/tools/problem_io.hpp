#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "egmu/model.hpp"

namespace egmu::cli {

// Input the user can fix: bad values, missing columns, mismatched ids.
struct ProblemError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem-level trouble: unreadable input, unwritable output.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// 17 significant digits: enough for the decimal round trip to be exact.
std::string format_full(double v);
double parse_double(const std::string& s, const std::string& context);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  Eigen::Index column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// One [section] of the problem file; keys keep file order for reporting.
struct IniSection {
  std::vector<std::pair<std::string, std::string>> entries;

  std::optional<std::string> get(const std::string& key) const;
};

std::map<std::string, IniSection> read_ini(const std::filesystem::path& path);

// A fully resolved problem: data loaded, names aligned, constraints
// expanded to rows. Construction validates everything that does not need
// a solver; numeric feasibility is the solver's business.
struct Problem {
  std::vector<std::string> asset_ids;
  std::vector<std::string> factor_names;
  Instance instance;
  VectorXd target;
  TargetMode mode = TargetMode::Equality;
  double lambda_soft = 0.0;  // elastic
  double rho = 0.0;          // robust
  ConstraintSet sets;        // caps, floors and custom rows; never factors
  std::optional<VectorXd> previous_weights;
  double gamma = 0.0;
  // Unset means "solver family default": 200 iterations for Newton kinds,
  // 10000 cycles for the cyclic projections, 200000 proximal steps.
  std::optional<double> tol;
  std::optional<int> max_iter;
  std::vector<std::string> warnings;  // renormalization and similar repairs
};

Problem load_problem(const std::filesystem::path& path);

// Weights column of a solver output (or hand-written) file, aligned to the
// problem's asset order. Throws ProblemError on unknown or missing ids.
VectorXd load_weights_for(const Problem& problem,
                          const std::filesystem::path& path);

}  // namespace egmu::cli
