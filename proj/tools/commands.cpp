#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <utility>

#include "egmu/diagnostics.hpp"
#include "egmu/newton.hpp"
#include "egmu/numerics.hpp"
#include "egmu/path.hpp"
#include "egmu/projection.hpp"
#include "egmu/proxgrad.hpp"
#include "problem_io.hpp"

namespace egmu::cli {

namespace {

namespace fs = std::filesystem;

std::string sanitize(std::string s) {
  // Report files are comma-separated; free-text fields must not add cells.
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

std::string mode_token(TargetMode m) {
  switch (m) {
    case TargetMode::Equality: return "equality";
    case TargetMode::Elastic: return "elastic";
    case TargetMode::RobustL2: return "robust_l2";
    case TargetMode::RobustLinf: return "robust_linf";
  }
  return "unknown";
}

// The solvers run on a reduced problem: blended prior applied, constant
// exposure columns stripped, remaining columns centered at the prior
// moments. Centering is a pure gauge change (weights and duals are
// untouched), but it keeps partition-function scores small.
struct Prepared {
  Problem problem;
  Instance inst;     // what solvers see
  VectorXd target;   // aligned with kept_factors
  std::vector<std::string> kept_factors;
  std::vector<std::string> stripped_factors;
  std::optional<VectorXd> prior;  // blended prior actually used, if any
};

Prepared prepare(const fs::path& problem_path) {
  Prepared prep{load_problem(problem_path), {}, {}, {}, {}, {}};
  const Problem& p = prep.problem;

  Instance inst = p.instance;
  if (p.previous_weights) {
    inst.benchmark =
        effective_prior(inst.benchmark, *p.previous_weights, p.gamma);
    prep.prior = inst.benchmark;
  }

  StrippedProblem sp = strip_intercept(inst, p.target);
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < p.factor_names.size(); ++k) {
    if (cursor < sp.removed_columns.size() &&
        sp.removed_columns[cursor] == static_cast<Eigen::Index>(k)) {
      prep.stripped_factors.push_back(p.factor_names[k]);
      ++cursor;
    } else {
      prep.kept_factors.push_back(p.factor_names[k]);
    }
  }

  const VectorXd d = sp.instance.exposures.transpose() *
                     sp.instance.benchmark;
  ShiftedProblem shifted = shift_exposures(sp.instance, sp.target, d);
  prep.inst = std::move(shifted.instance);
  prep.target = std::move(shifted.target);
  return prep;
}

struct EffectiveConfig {
  double tol = 1e-8;
  std::optional<int> max_iter;  // unset: per-family default

  int iters(int family_default) const {
    return max_iter ? *max_iter : family_default;
  }
};

EffectiveConfig effective_config(const Problem& p,
                                 const std::optional<double>& cli_tol,
                                 const std::optional<int>& cli_max_iter) {
  EffectiveConfig c;
  if (p.tol) c.tol = *p.tol;
  if (cli_tol) c.tol = *cli_tol;
  c.max_iter = cli_max_iter ? cli_max_iter : p.max_iter;
  return c;
}

struct Labeled {
  SolveReport rep;
  std::vector<std::string> theta_names;
  std::string solver;
  std::optional<double> lambda_soft;
  std::optional<double> rho;
};

std::string pick_solver(const Problem& p, const SolveOptions& opt) {
  const bool robust =
      p.mode == TargetMode::RobustL2 || p.mode == TargetMode::RobustLinf;
  const bool soft = p.mode == TargetMode::Elastic || opt.soft.has_value();
  const bool rows = !p.sets.halfspaces.empty() || !p.sets.equalities.empty();

  if (opt.soft && robust)
    throw ProblemError("--soft conflicts with a robust [mode] block");

  std::string s = opt.solver;
  if (s == "auto") {
    if (robust) s = "proxgrad";
    else if (rows) s = "dykstra";
    else if (soft) s = "elastic";
    else s = "newton";
  }

  // An explicit pick must still be able to represent the problem.
  if (s != "dykstra" && rows)
    throw ProblemError("constraint rows require --solver dykstra (or auto)");
  if (s != "proxgrad" && robust)
    throw ProblemError("robust modes require --solver proxgrad (or auto)");
  if (s != "elastic" && soft)
    throw ProblemError(
        "soft targets require --solver elastic (or auto); drop --soft or the "
        "[mode] block for a hard solve");
  if (s == "elastic" && !soft)
    throw ProblemError(
        "--solver elastic needs lambda_soft from --soft or the [mode] block");
  if (s == "dykstra" && soft)
    throw ProblemError("inequality rows need hard factor targets");
  if (s == "proxgrad" && soft)
    throw ProblemError("robust solves take hard centers, not soft targets");

  if (s != "newton" && s != "elastic" && s != "ipf" && s != "dykstra" &&
      s != "proxgrad")
    throw ProblemError("unknown solver '" + s + "'");
  return s;
}

Labeled dispatch_solve(const Prepared& prep, const SolveOptions& opt) {
  const Problem& p = prep.problem;
  const EffectiveConfig cfg = effective_config(p, opt.tol, opt.max_iter);
  Labeled out;
  out.solver = pick_solver(p, opt);

  if (out.solver == "newton" || out.solver == "elastic") {
    NewtonConfig nc;
    nc.tol = cfg.tol;
    nc.max_iter = cfg.iters(200);
    if (out.solver == "elastic") {
      const double lam = opt.soft ? *opt.soft : p.lambda_soft;
      if (!(lam > 0.0)) throw ProblemError("lambda_soft must be positive");
      out.lambda_soft = lam;
      out.rep = solve_elastic(prep.inst, prep.target, lam, nc);
    } else {
      out.rep = solve_equality(prep.inst, prep.target, nc);
    }
    out.theta_names = prep.kept_factors;
  } else if (out.solver == "ipf") {
    CycleConfig cc{cfg.tol, cfg.iters(10000)};
    out.rep = solve_ipf(prep.inst, factor_constraints(prep.inst, prep.target),
                        cc);
    out.theta_names = prep.kept_factors;
  } else if (out.solver == "dykstra") {
    ConstraintSet sets;
    sets.equalities = factor_constraints(prep.inst, prep.target);
    for (std::size_t k = 0; k < prep.kept_factors.size(); ++k)
      sets.equalities[k].name = prep.kept_factors[k];
    sets.halfspaces = p.sets.halfspaces;
    CycleConfig cc{cfg.tol, cfg.iters(10000)};
    out.rep = solve_dykstra(prep.inst, sets, cc);
    for (const auto& c : sets.equalities) out.theta_names.push_back(c.name);
    for (const auto& c : sets.halfspaces) out.theta_names.push_back(c.name);
  } else {  // proxgrad
    RobustSet set;
    set.kind = p.mode == TargetMode::RobustLinf ? RobustKind::LinfBox
                                                : RobustKind::L2Ball;
    set.rho = (p.mode == TargetMode::RobustL2 ||
               p.mode == TargetMode::RobustLinf)
                  ? p.rho
                  : 0.0;
    out.rho = set.rho;
    ProxConfig pc;
    pc.tol = cfg.tol;
    pc.max_iter = cfg.iters(200000);
    out.rep = solve_robust(prep.inst, prep.target, set, pc);
    out.theta_names = prep.kept_factors;
  }
  return out;
}

using Rows = std::vector<std::vector<std::string>>;

void write_report_rows(const fs::path& path, const Rows& rows) {
  write_csv(path, {"key", "value"}, rows);
}

void append_common(Rows& rows, const Prepared& prep,
                   const EffectiveConfig& cfg) {
  const Problem& p = prep.problem;
  rows.push_back({"mode", mode_token(p.mode)});
  rows.push_back({"tol", format_full(cfg.tol)});
  if (cfg.max_iter)
    rows.push_back({"max_iter", std::to_string(*cfg.max_iter)});
  if (!prep.stripped_factors.empty()) {
    std::string joined;
    for (const auto& s : prep.stripped_factors)
      joined += (joined.empty() ? "" : ";") + s;
    rows.push_back({"stripped_columns", joined});
  }
  for (std::size_t i = 0; i < p.warnings.size(); ++i)
    rows.push_back({"warning." + std::to_string(i), sanitize(p.warnings[i])});
  if (prep.prior) {
    rows.push_back({"gamma", format_full(p.gamma)});
    for (std::size_t i = 0; i < p.asset_ids.size(); ++i)
      rows.push_back({"prior." + p.asset_ids[i],
                      format_full((*prep.prior)[static_cast<Eigen::Index>(i)])});
  }
}

void append_trace(Rows& rows, const SolveReport& rep) {
  for (std::size_t i = 0; i < rep.trace.size(); ++i) {
    const auto& row = rep.trace[i];
    const std::string base = "trace." + std::to_string(i) + ".";
    rows.push_back({base + "residual_norm", format_full(row.residual_norm)});
    rows.push_back({base + "step", format_full(row.step)});
    rows.push_back({base + "log_z", format_full(row.log_z)});
    rows.push_back({base + "objective", format_full(row.objective)});
  }
}

void write_failure_report(const fs::path& out_dir, const Prepared& prep,
                          const EffectiveConfig& cfg, const std::string& kind,
                          const std::string& what) {
  Rows rows;
  rows.push_back({"status", "Failed"});
  rows.push_back({"error", sanitize(kind)});
  rows.push_back({"message", sanitize(what)});
  append_common(rows, prep, cfg);
  write_report_rows(out_dir / "report.csv", rows);
}

std::vector<std::string> active_constraints(const Problem& p,
                                            const VectorXd& w) {
  std::vector<std::string> per_asset(p.asset_ids.size());
  for (const auto& hs : p.sets.halfspaces) {
    const double scale = std::max(
        {1.0, std::abs(hs.bound), hs.coefficients.cwiseAbs().maxCoeff()});
    if (std::abs(hs.coefficients.dot(w) - hs.bound) > 1e-8 * scale) continue;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      if (hs.coefficients[i] == 0.0) continue;
      auto& cell = per_asset[static_cast<std::size_t>(i)];
      cell += (cell.empty() ? "" : ";") + hs.name;
    }
  }
  return per_asset;
}

void write_weights_file(const fs::path& path, const Problem& p,
                        const VectorXd& w) {
  const auto active = active_constraints(p, w);
  Rows rows;
  rows.reserve(p.asset_ids.size());
  for (std::size_t i = 0; i < p.asset_ids.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    rows.push_back({p.asset_ids[i], format_full(p.instance.benchmark[idx]),
                    format_full(w[idx]), active[i]});
  }
  write_csv(path, {"asset_id", "benchmark", "weight", "active_constraints"},
            rows);
}

// Common exception fence. Solver-phase failures are handled closer to the
// call so a report still lands on disk.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ProblemError& e) {
    err << "error: " << e.what() << '\n';
    return kExitProblem;
  } catch (const InconsistentIntercept& e) {
    err << "error: " << e.what() << '\n';
    return kExitProblem;
  } catch (const DegeneratePrior& e) {
    err << "error: " << e.what() << '\n';
    return kExitProblem;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitProblem;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "solver error: " << e.what() << '\n';
    return kExitSolver;
  }
}

fs::path ensure_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec && !fs::is_directory(dir))
    throw IoError("cannot create output directory " + dir.string());
  return dir;
}

}  // namespace

int run_solve(const fs::path& problem_path, const SolveOptions& opt,
              std::ostream& err) {
  return guarded(err, [&]() -> int {
    Prepared prep = prepare(problem_path);
    const EffectiveConfig cfg =
        effective_config(prep.problem, opt.tol, opt.max_iter);
    const fs::path out = ensure_out_dir(opt.out);
    for (const auto& w : prep.problem.warnings)
      err << "warning: " << w << '\n';

    Labeled res;
    try {
      res = dispatch_solve(prep, opt);
    } catch (const ProblemError&) {
      throw;  // configuration mistakes are validation, not solver failures
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception& e) {
      write_failure_report(out, prep, cfg, typeid(e).name(), e.what());
      err << "solver error: " << e.what() << '\n';
      return kExitSolver;
    }

    const SolveReport& rep = res.rep;
    write_weights_file(out / "weights.csv", prep.problem, rep.weights);

    Rows rows;
    rows.push_back({"status", to_string(rep.status)});
    rows.push_back({"solver", res.solver});
    rows.push_back({"iterations", std::to_string(rep.iterations)});
    if (res.lambda_soft)
      rows.push_back({"lambda_soft", format_full(*res.lambda_soft)});
    if (res.rho) rows.push_back({"rho", format_full(*res.rho)});
    rows.push_back(
        {"kl", format_full(kl_divergence(rep.weights, prep.inst.benchmark))});
    if (!rep.message.empty())
      rows.push_back({"message", sanitize(rep.message)});
    append_common(rows, prep, cfg);
    for (std::size_t k = 0; k < res.theta_names.size(); ++k)
      rows.push_back({"theta." + res.theta_names[k],
                      format_full(rep.theta[static_cast<Eigen::Index>(k)])});
    for (std::size_t k = 0; k < res.theta_names.size(); ++k)
      rows.push_back(
          {"residual." + res.theta_names[k],
           format_full(rep.residual[static_cast<Eigen::Index>(k)])});
    append_trace(rows, rep);
    write_report_rows(out / "report.csv", rows);

    if (rep.status != SolveStatus::Converged) {
      err << "solve ended " << to_string(rep.status)
          << (rep.message.empty() ? "" : ": " + rep.message) << '\n';
      return kExitSolver;
    }
    return kExitOk;
  });
}

int run_sensitivity(const fs::path& problem_path, const fs::path& out_dir,
                    std::ostream& err) {
  return guarded(err, [&]() -> int {
    Prepared prep = prepare(problem_path);
    const Problem& p = prep.problem;
    if (p.mode != TargetMode::Equality && p.mode != TargetMode::Elastic)
      throw ProblemError("sensitivity needs equality or elastic mode");
    const EffectiveConfig cfg = effective_config(p, {}, {});
    const fs::path out = ensure_out_dir(out_dir);

    NewtonConfig nc;
    nc.tol = cfg.tol;
    nc.max_iter = cfg.iters(200);
    const std::optional<double> lam =
        p.mode == TargetMode::Elastic ? std::optional<double>(p.lambda_soft)
                                      : std::nullopt;
    SolveReport rep = lam ? solve_elastic(prep.inst, prep.target, *lam, nc)
                          : solve_equality(prep.inst, prep.target, nc);
    if (rep.status != SolveStatus::Converged) {
      write_failure_report(out, prep, cfg, to_string(rep.status), rep.message);
      err << "solve ended " << to_string(rep.status) << '\n';
      return kExitSolver;
    }

    Sensitivity sens;
    try {
      sens = sensitivity(prep.inst, tilt(prep.inst, rep.theta), lam);
    } catch (const SingularCovariance& e) {
      Rows rows;
      rows.push_back({"status", "SingularCovariance"});
      rows.push_back({"message", sanitize(e.what())});
      append_common(rows, prep, cfg);
      for (Eigen::Index j = 0; j < e.null_space.cols(); ++j)
        for (std::size_t k = 0; k < prep.kept_factors.size(); ++k)
          rows.push_back({"null." + std::to_string(j) + "." +
                              prep.kept_factors[k],
                          format_full(e.null_space(
                              static_cast<Eigen::Index>(k), j))});
      write_report_rows(out / "report.csv", rows);
      err << "solver error: " << e.what() << '\n';
      return kExitSolver;
    }

    const auto& f = prep.kept_factors;
    std::vector<std::string> header{"factor"};
    header.insert(header.end(), f.begin(), f.end());
    Rows rows;
    for (std::size_t j = 0; j < f.size(); ++j) {
      std::vector<std::string> row{f[j]};
      for (std::size_t k = 0; k < f.size(); ++k)
        row.push_back(format_full(sens.dtheta_dt(
            static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k))));
      rows.push_back(std::move(row));
    }
    write_csv(out / "dtheta_dt.csv", header, rows);

    header.front() = "asset_id";
    rows.clear();
    for (std::size_t i = 0; i < p.asset_ids.size(); ++i) {
      std::vector<std::string> row{p.asset_ids[i]};
      for (std::size_t k = 0; k < f.size(); ++k)
        row.push_back(format_full(sens.dw_dt(
            static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k))));
      rows.push_back(std::move(row));
    }
    write_csv(out / "dw_dt.csv", header, rows);

    rows.clear();
    for (std::size_t k = 0; k < f.size(); ++k) {
      Eigen::Index who = 0;
      sens.dw_dt.col(static_cast<Eigen::Index>(k)).cwiseAbs().maxCoeff(&who);
      rows.push_back({f[k], p.asset_ids[static_cast<std::size_t>(who)],
                      format_full(sens.dw_dt(who,
                                             static_cast<Eigen::Index>(k)))});
    }
    write_csv(out / "top_movers.csv", {"factor", "asset_id", "dw_dt"}, rows);

    Rows report;
    report.push_back({"status", "Converged"});
    report.push_back({"solver", lam ? "elastic" : "newton"});
    if (lam) report.push_back({"lambda_soft", format_full(*lam)});
    append_common(report, prep, cfg);
    for (std::size_t k = 0; k < f.size(); ++k)
      report.push_back({"theta." + f[k],
                        format_full(rep.theta[static_cast<Eigen::Index>(k)])});
    write_report_rows(out / "report.csv", report);
    return kExitOk;
  });
}

namespace {

VectorXd parse_delta(const Prepared& prep, const std::string& spec) {
  const Problem& p = prep.problem;
  std::map<std::string, double> by_name;
  if (spec.find('=') != std::string::npos) {
    std::size_t start = 0;
    while (start <= spec.size()) {
      const auto comma = spec.find(',', start);
      const std::string item =
          spec.substr(start, comma == std::string::npos ? std::string::npos
                                                        : comma - start);
      if (!item.empty()) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
          throw ProblemError("--delta item '" + item + "' is not factor=value");
        const std::string name = item.substr(0, eq);
        if (!by_name
                 .emplace(name,
                          parse_double(item.substr(eq + 1), "--delta " + name))
                 .second)
          throw ProblemError("--delta repeats factor '" + name + "'");
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  } else {
    CsvTable t = read_csv(spec);
    const Eigen::Index f_col = t.column("factor"), v_col = t.column("value");
    if (f_col < 0 || v_col < 0)
      throw ProblemError(spec + ": needs columns factor and value");
    for (const auto& row : t.rows)
      if (!by_name
               .emplace(row[static_cast<std::size_t>(f_col)],
                        parse_double(row[static_cast<std::size_t>(v_col)],
                                     spec))
               .second)
        throw ProblemError(spec + ": duplicate factor '" +
                           row[static_cast<std::size_t>(f_col)] + "'");
  }

  for (const auto& [name, value] : by_name) {
    if (std::find(p.factor_names.begin(), p.factor_names.end(), name) ==
        p.factor_names.end())
      throw ProblemError("--delta names unknown factor '" + name + "'");
    if (std::find(prep.stripped_factors.begin(), prep.stripped_factors.end(),
                  name) != prep.stripped_factors.end() &&
        value != 0.0)
      throw ProblemError("factor '" + name +
                         "' is constant across assets; its target cannot move");
  }

  VectorXd delta = VectorXd::Zero(
      static_cast<Eigen::Index>(prep.kept_factors.size()));
  for (std::size_t k = 0; k < prep.kept_factors.size(); ++k) {
    const auto it = by_name.find(prep.kept_factors[k]);
    if (it != by_name.end())
      delta[static_cast<Eigen::Index>(k)] = it->second;
  }
  return delta;
}

}  // namespace

int run_path(const fs::path& problem_path, const PathOptions& opt,
             std::ostream& err) {
  return guarded(err, [&]() -> int {
    Prepared prep = prepare(problem_path);
    const Problem& p = prep.problem;
    if (p.mode != TargetMode::Equality && p.mode != TargetMode::Elastic)
      throw ProblemError("path tracing needs equality or elastic mode");
    if (!p.sets.halfspaces.empty() || !p.sets.equalities.empty())
      throw ProblemError("path tracing does not support constraint rows");
    if (opt.integrator != "rk2" && opt.integrator != "euler")
      throw ProblemError("--integrator must be rk2 or euler");

    const EffectiveConfig cfg = effective_config(p, {}, {});
    const fs::path out = ensure_out_dir(opt.out);
    const VectorXd delta = parse_delta(prep, opt.delta);

    PathConfig pc;
    pc.h = opt.h;
    pc.integrator =
        opt.integrator == "euler" ? Integrator::Euler : Integrator::RK2;
    pc.correct = opt.correct;
    if (p.mode == TargetMode::Elastic) pc.lambda_soft = p.lambda_soft;
    pc.newton.tol = cfg.tol;
    pc.newton.max_iter = cfg.iters(200);

    PathTrace trace;
    try {
      trace = trace_path(prep.inst, prep.target, delta, pc);
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception& e) {
      write_failure_report(out, prep, cfg, typeid(e).name(), e.what());
      err << "solver error: " << e.what() << '\n';
      return kExitSolver;
    }

    const auto& f = prep.kept_factors;
    std::vector<std::string> header{"lambda"};
    for (const auto& name : f) header.push_back("theta_" + name);
    for (const auto& name : f) header.push_back("resid_" + name);
    header.push_back("kl");
    header.push_back("min_weight");
    header.push_back("max_weight");

    Rows rows;
    for (const auto& s : trace.samples) {
      std::vector<std::string> row{format_full(s.lambda)};
      for (Eigen::Index k = 0; k < s.theta.size(); ++k)
        row.push_back(format_full(s.theta[k]));
      for (Eigen::Index k = 0; k < s.residual.size(); ++k)
        row.push_back(format_full(s.residual[k]));
      row.push_back(
          format_full(kl_divergence(s.weights, prep.inst.benchmark)));
      row.push_back(format_full(s.weights.minCoeff()));
      row.push_back(format_full(s.weights.maxCoeff()));
      rows.push_back(std::move(row));
    }
    write_csv(out / "path.csv", header, rows);

    Rows report;
    report.push_back({"status", "Converged"});
    report.push_back({"integrator", opt.integrator});
    report.push_back({"h", format_full(opt.h)});
    report.push_back({"corrected", opt.correct ? "true" : "false"});
    report.push_back({"samples", std::to_string(trace.samples.size())});
    if (!trace.ridge_events.empty()) {
      std::string joined;
      for (double l : trace.ridge_events)
        joined += (joined.empty() ? "" : ";") + format_full(l);
      report.push_back({"ridge_events", joined});
    }
    append_common(report, prep, cfg);
    write_report_rows(out / "report.csv", report);
    return kExitOk;
  });
}

int run_check(const fs::path& problem_path, const fs::path& weights_path,
              std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    Prepared prep = prepare(problem_path);
    const Problem& p = prep.problem;
    const VectorXd w = load_weights_for(p, weights_path);
    if (!w.allFinite()) throw ProblemError("weights contain non-finite values");

    // The weights file carries no duals, so refit theta from the
    // stationarity relation log(w/b) = theta'x - log Z by least squares on
    // the positive-weight rows; an intercept soaks up -log Z.
    const Instance& inst = prep.inst;
    const Eigen::Index kk = inst.n_factors();
    std::vector<Eigen::Index> live;
    for (Eigen::Index i = 0; i < w.size(); ++i)
      if (w[i] > 0.0) live.push_back(i);
    if (live.size() < 2)
      throw ProblemError("fewer than two positive weights; nothing to check");

    MatrixXd a(static_cast<Eigen::Index>(live.size()), kk + 1);
    VectorXd y(static_cast<Eigen::Index>(live.size()));
    for (std::size_t r = 0; r < live.size(); ++r) {
      const Eigen::Index i = live[r];
      a.row(static_cast<Eigen::Index>(r)).head(kk) = inst.exposures.row(i);
      a(static_cast<Eigen::Index>(r), kk) = 1.0;
      y[static_cast<Eigen::Index>(r)] = std::log(w[i] / inst.benchmark[i]);
    }
    const VectorXd beta = a.colPivHouseholderQr().solve(y);
    const VectorXd theta = beta.head(kk);

    const KktReport kkt = kkt_check(inst, w, theta, prep.target, p.sets);

    const double budget = std::abs(w.sum() - 1.0);
    const double min_w = w.minCoeff();
    const double worst_expo =
        kkt.exposure_residual.size() > 0
            ? kkt.exposure_residual.cwiseAbs().maxCoeff()
            : 0.0;
    const double worst_slack =
        kkt.inequality_slacks.size() > 0 ? kkt.inequality_slacks.minCoeff()
                                         : 0.0;

    out << "kl=" << format_full(kkt.kl_value) << '\n';
    out << "stationarity_spread=" << format_full(kkt.stationarity_spread)
        << '\n';
    out << "budget_residual=" << format_full(budget) << '\n';
    out << "min_weight=" << format_full(min_w) << '\n';
    for (std::size_t k = 0; k < prep.kept_factors.size(); ++k)
      out << "exposure_residual." << prep.kept_factors[k] << '='
          << format_full(
                 kkt.exposure_residual[static_cast<Eigen::Index>(k)])
          << '\n';
    for (std::size_t k = 0; k < prep.kept_factors.size(); ++k)
      out << "theta_fit." << prep.kept_factors[k] << '='
          << format_full(theta[static_cast<Eigen::Index>(k)]) << '\n';
    for (std::size_t j = 0; j < p.sets.halfspaces.size(); ++j)
      out << "slack." << p.sets.halfspaces[j].name << '='
          << format_full(kkt.inequality_slacks[static_cast<Eigen::Index>(j)])
          << '\n';

    bool pass = budget <= 1e-8 && min_w >= -1e-12 &&
                kkt.stationarity_spread <= 1e-6 && worst_slack >= -1e-9;
    if (p.mode == TargetMode::Equality) {
      pass = pass && worst_expo <= 1e-6;
    } else if (p.mode == TargetMode::Elastic) {
      const VectorXd identity =
          p.lambda_soft * kkt.exposure_residual - theta;
      out << "elastic_identity_residual="
          << format_full(identity.lpNorm<Eigen::Infinity>()) << '\n';
      pass = pass && identity.lpNorm<Eigen::Infinity>() <= 1e-6;
    } else if (p.mode == TargetMode::RobustL2) {
      const double r = kkt.exposure_residual.norm();
      out << "center_distance_l2=" << format_full(r) << '\n';
      pass = pass && r <= p.rho + 1e-6;
    } else {
      const double r = kkt.exposure_residual.lpNorm<Eigen::Infinity>();
      out << "center_distance_linf=" << format_full(r) << '\n';
      pass = pass && r <= p.rho + 1e-6;
    }
    out << "verdict=" << (pass ? "pass" : "fail") << '\n';
    return pass ? kExitOk : kExitSolver;
  });
}

}  // namespace egmu::cli
