#include "problem_io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace egmu::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& rel) {
  std::filesystem::path p(rel);
  return p.is_absolute() ? p : base / p;
}

}  // namespace

std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& context) {
  const std::string t = trim(s);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size())
    throw ProblemError(context + ": '" + s + "' is not a number");
  return v;
}

Eigen::Index CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<Eigen::Index>(i);
  return -1;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    auto cells = split(s, ',');
    if (!saw_header) {
      t.header = std::move(cells);
      saw_header = true;
    } else {
      if (cells.size() != t.header.size())
        throw ProblemError(path.string() + ": row with " +
                           std::to_string(cells.size()) + " cells, header has " +
                           std::to_string(t.header.size()));
      t.rows.push_back(std::move(cells));
    }
  }
  if (!saw_header) throw ProblemError(path.string() + ": empty file");
  return t;
}

void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i)
    out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      out << (i ? "," : "") << row[i];
    out << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

std::optional<std::string> IniSection::get(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return v;
  return std::nullopt;
}

std::map<std::string, IniSection> read_ini(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<std::string, IniSection> out;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string s = trim(line);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']')
        throw ProblemError(path.string() + ":" + std::to_string(lineno) +
                           ": unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      out[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos || section.empty())
      throw ProblemError(path.string() + ":" + std::to_string(lineno) +
                         ": expected 'key = value' inside a [section]");
    out[section].entries.emplace_back(trim(s.substr(0, eq)),
                                      trim(s.substr(eq + 1)));
  }
  return out;
}

namespace {

struct NamedWeights {
  std::vector<std::string> ids;
  VectorXd values;
};

NamedWeights read_weight_file(const std::filesystem::path& path,
                              const std::string& value_column) {
  CsvTable t = read_csv(path);
  const Eigen::Index id_col = t.column("asset_id");
  const Eigen::Index val_col = t.column(value_column);
  if (id_col < 0 || val_col < 0)
    throw ProblemError(path.string() + ": needs columns asset_id and " +
                       value_column);
  NamedWeights out;
  out.values.resize(static_cast<Eigen::Index>(t.rows.size()));
  std::set<std::string> seen;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::string& id = t.rows[i][static_cast<std::size_t>(id_col)];
    if (!seen.insert(id).second)
      throw ProblemError(path.string() + ": duplicate asset_id '" + id + "'");
    out.ids.push_back(id);
    out.values[static_cast<Eigen::Index>(i)] = parse_double(
        t.rows[i][static_cast<std::size_t>(val_col)], path.string());
  }
  return out;
}

VectorXd align_to(const std::vector<std::string>& want,
                  const NamedWeights& have, const std::string& what) {
  std::map<std::string, Eigen::Index> pos;
  for (std::size_t i = 0; i < have.ids.size(); ++i)
    pos[have.ids[i]] = static_cast<Eigen::Index>(i);
  if (have.ids.size() != want.size())
    throw ProblemError(what + ": has " + std::to_string(have.ids.size()) +
                       " assets, problem has " + std::to_string(want.size()));
  VectorXd out(static_cast<Eigen::Index>(want.size()));
  for (std::size_t i = 0; i < want.size(); ++i) {
    const auto it = pos.find(want[i]);
    if (it == pos.end())
      throw ProblemError(what + ": missing asset_id '" + want[i] + "'");
    out[static_cast<Eigen::Index>(i)] = have.values[it->second];
  }
  return out;
}

TargetMode parse_mode(const std::string& kind) {
  if (kind == "equality") return TargetMode::Equality;
  if (kind == "elastic") return TargetMode::Elastic;
  if (kind == "robust_l2") return TargetMode::RobustL2;
  if (kind == "robust_linf") return TargetMode::RobustLinf;
  throw ProblemError("[mode] kind '" + kind +
                     "' is not one of equality, elastic, robust_l2, "
                     "robust_linf");
}

}  // namespace

Problem load_problem(const std::filesystem::path& path) {
  const auto ini = read_ini(path);
  const auto base = path.has_parent_path() ? path.parent_path()
                                           : std::filesystem::path(".");
  const auto section = [&](const std::string& name) -> const IniSection* {
    const auto it = ini.find(name);
    return it == ini.end() ? nullptr : &it->second;
  };
  const auto* data = section("data");
  if (!data) throw ProblemError(path.string() + ": missing [data] section");
  const auto need = [&](const IniSection& s, const std::string& key,
                        const std::string& where) {
    auto v = s.get(key);
    if (!v) throw ProblemError(path.string() + ": [" + where +
                               "] is missing '" + key + "'");
    return *v;
  };

  Problem p;

  // Benchmark fixes the asset universe and its order.
  NamedWeights bench =
      read_weight_file(resolve(base, need(*data, "benchmark", "data")),
                       "weight");
  p.asset_ids = bench.ids;
  p.instance.benchmark = bench.values;

  // Exposures: one named column per factor, rows keyed by asset_id.
  {
    const auto xpath = resolve(base, need(*data, "exposures", "data"));
    CsvTable t = read_csv(xpath);
    const Eigen::Index id_col = t.column("asset_id");
    if (id_col < 0)
      throw ProblemError(xpath.string() + ": needs an asset_id column");
    for (std::size_t c = 0; c < t.header.size(); ++c)
      if (static_cast<Eigen::Index>(c) != id_col)
        p.factor_names.push_back(t.header[c]);
    if (p.factor_names.empty())
      throw ProblemError(xpath.string() + ": no factor columns");
    {
      std::set<std::string> uniq(p.factor_names.begin(),
                                 p.factor_names.end());
      if (uniq.size() != p.factor_names.size())
        throw ProblemError(xpath.string() + ": duplicate factor names");
    }

    std::map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& id = t.rows[i][static_cast<std::size_t>(id_col)];
      if (!row_of.emplace(id, i).second)
        throw ProblemError(xpath.string() + ": duplicate asset_id '" + id +
                           "'");
    }
    if (t.rows.size() != p.asset_ids.size())
      throw ProblemError(xpath.string() + ": " +
                         std::to_string(t.rows.size()) +
                         " assets, benchmark has " +
                         std::to_string(p.asset_ids.size()));

    const Eigen::Index n = static_cast<Eigen::Index>(p.asset_ids.size());
    const Eigen::Index k = static_cast<Eigen::Index>(p.factor_names.size());
    p.instance.exposures.resize(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto it = row_of.find(p.asset_ids[static_cast<std::size_t>(i)]);
      if (it == row_of.end())
        throw ProblemError(xpath.string() + ": missing asset_id '" +
                           p.asset_ids[static_cast<std::size_t>(i)] + "'");
      const auto& row = t.rows[it->second];
      Eigen::Index c = 0;
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (static_cast<Eigen::Index>(j) == id_col) continue;
        p.instance.exposures(i, c++) =
            parse_double(row[j], xpath.string());
      }
    }
  }

  // Targets: exactly one value per factor, matched by name.
  {
    const auto tpath = resolve(base, need(*data, "targets", "data"));
    CsvTable t = read_csv(tpath);
    const Eigen::Index f_col = t.column("factor");
    const Eigen::Index v_col = t.column("value");
    if (f_col < 0 || v_col < 0)
      throw ProblemError(tpath.string() + ": needs columns factor and value");
    std::map<std::string, double> by_name;
    for (const auto& row : t.rows) {
      const auto& name = row[static_cast<std::size_t>(f_col)];
      if (!by_name
               .emplace(name, parse_double(row[static_cast<std::size_t>(v_col)],
                                           tpath.string()))
               .second)
        throw ProblemError(tpath.string() + ": duplicate factor '" + name +
                           "'");
    }
    p.target.resize(static_cast<Eigen::Index>(p.factor_names.size()));
    for (std::size_t k = 0; k < p.factor_names.size(); ++k) {
      const auto it = by_name.find(p.factor_names[k]);
      if (it == by_name.end())
        throw ProblemError(tpath.string() + ": no target for factor '" +
                           p.factor_names[k] + "'");
      p.target[static_cast<Eigen::Index>(k)] = it->second;
      by_name.erase(it);
    }
    if (!by_name.empty())
      throw ProblemError(tpath.string() + ": unknown factor '" +
                         by_name.begin()->first + "'");
  }

  if (const auto* mode = section("mode")) {
    p.mode = parse_mode(need(*mode, "kind", "mode"));
    if (p.mode == TargetMode::Elastic) {
      p.lambda_soft =
          parse_double(need(*mode, "lambda_soft", "mode"), "[mode] lambda_soft");
      if (!(p.lambda_soft > 0.0))
        throw ProblemError("[mode] lambda_soft must be positive");
    }
    if (p.mode == TargetMode::RobustL2 || p.mode == TargetMode::RobustLinf) {
      p.rho = parse_double(need(*mode, "rho", "mode"), "[mode] rho");
      if (p.rho < 0.0) throw ProblemError("[mode] rho must be nonnegative");
    }
  }

  if (const auto* cons = section("constraints")) {
    const Eigen::Index n = p.instance.n_assets();
    if (auto cap = cons->get("cap")) {
      const double c = parse_double(*cap, "[constraints] cap");
      if (!(c > 0.0 && c <= 1.0))
        throw ProblemError("[constraints] cap must lie in (0, 1]");
      for (Eigen::Index i = 0; i < n; ++i) {
        VectorXd e = VectorXd::Zero(n);
        e[i] = 1.0;
        p.sets.halfspaces.push_back(
            {"cap_" + p.asset_ids[static_cast<std::size_t>(i)], e, c});
      }
    }
    if (auto floor = cons->get("floor")) {
      const double f = parse_double(*floor, "[constraints] floor");
      if (!(f >= 0.0 && f < 1.0))
        throw ProblemError("[constraints] floor must lie in [0, 1)");
      for (Eigen::Index i = 0; i < n; ++i) {
        VectorXd e = VectorXd::Zero(n);
        e[i] = -1.0;
        p.sets.halfspaces.push_back(
            {"floor_" + p.asset_ids[static_cast<std::size_t>(i)], e, -f});
      }
    }
    if (auto rows = cons->get("inequalities")) {
      const auto rpath = resolve(base, *rows);
      CsvTable t = read_csv(rpath);
      const Eigen::Index nm = t.column("name"), id = t.column("asset_id"),
                         co = t.column("coefficient"), bd = t.column("bound");
      if (nm < 0 || id < 0 || co < 0 || bd < 0)
        throw ProblemError(rpath.string() +
                           ": needs columns name, asset_id, coefficient, "
                           "bound");
      std::map<std::string, Eigen::Index> asset_pos;
      for (std::size_t i = 0; i < p.asset_ids.size(); ++i)
        asset_pos[p.asset_ids[i]] = static_cast<Eigen::Index>(i);
      std::vector<std::string> order;
      std::map<std::string, LinearConstraint> by_name;
      for (const auto& row : t.rows) {
        const auto& name = row[static_cast<std::size_t>(nm)];
        const auto it = asset_pos.find(row[static_cast<std::size_t>(id)]);
        if (it == asset_pos.end())
          throw ProblemError(rpath.string() + ": unknown asset_id '" +
                             row[static_cast<std::size_t>(id)] + "' in row '" +
                             name + "'");
        const double coef = parse_double(row[static_cast<std::size_t>(co)],
                                         rpath.string());
        const double bound =
            parse_double(row[static_cast<std::size_t>(bd)], rpath.string());
        auto [slot, fresh] = by_name.try_emplace(
            name, LinearConstraint{name, VectorXd::Zero(n), bound});
        if (fresh) {
          order.push_back(name);
        } else if (slot->second.bound != bound) {
          throw ProblemError(rpath.string() + ": row '" + name +
                             "' repeats with a different bound");
        }
        slot->second.coefficients[it->second] += coef;
      }
      for (const auto& name : order)
        p.sets.halfspaces.push_back(std::move(by_name[name]));
    }
  }

  if (const auto* mp = section("multi_period")) {
    p.gamma = parse_double(need(*mp, "gamma", "multi_period"),
                           "[multi_period] gamma");
    if (p.gamma < 0.0)
      throw ProblemError("[multi_period] gamma must be nonnegative");
    NamedWeights prev = read_weight_file(
        resolve(base, need(*mp, "prev_weights", "multi_period")), "weight");
    p.previous_weights = align_to(p.asset_ids, prev, "prev_weights");
  }

  if (const auto* solver = section("solver")) {
    if (auto tol = solver->get("tol")) {
      p.tol = parse_double(*tol, "[solver] tol");
      if (!(*p.tol > 0.0)) throw ProblemError("[solver] tol must be positive");
    }
    if (auto mi = solver->get("max_iter")) {
      p.max_iter = static_cast<int>(parse_double(*mi, "[solver] max_iter"));
      if (*p.max_iter <= 0)
        throw ProblemError("[solver] max_iter must be positive");
    }
  }

  // Structural checks last, once everything is aligned.
  ValidationResult vr = validate_instance(p.instance);
  if (!vr.ok()) {
    std::string msg = "invalid problem:";
    for (const auto& v : vr.violations) msg += "\n  " + v;
    throw ProblemError(msg);
  }
  for (const auto& w : vr.warnings) p.warnings.push_back(w);
  if (!vr.warnings.empty()) p.instance = renormalized(p.instance);

  ValidationResult cr = validate_constraints(p.sets, p.instance.n_assets());
  if (!cr.ok()) {
    std::string msg = "invalid constraints:";
    for (const auto& v : cr.violations) msg += "\n  " + v;
    throw ProblemError(msg);
  }
  return p;
}

VectorXd load_weights_for(const Problem& problem,
                          const std::filesystem::path& path) {
  NamedWeights w = read_weight_file(path, "weight");
  return align_to(problem.asset_ids, w, path.string());
}

}  // namespace egmu::cli
