/*
 * Copyright 2026 The abss Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "abss/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "abss/error.hpp"

namespace abss {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line, char delim, std::size_t lineno) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"' && trim(cur).empty()) {
      cur.clear();
      quoted = true;
    } else if (ch == delim) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (quoted) throw DataFormatError("line " + std::to_string(lineno) + ": unterminated quote");
  out.push_back(trim(cur));
  return out;
}

double json_number(const Json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  return j.get<double>();
}

// Non-finite doubles become strings so they survive a round trip.
Json number_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

template <typename T>
T field(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

int CsvTable::find(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::size_t CsvTable::require(const std::string& name) const {
  const int i = find(name);
  if (i < 0) throw DataFormatError("missing column '" + name + "'");
  return static_cast<std::size_t>(i);
}

double CsvTable::number(std::size_t row, std::size_t col) const {
  const std::string& s = rows[row][col];
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (s.empty() || res.ec != std::errc() || res.ptr != last) {
    throw DataFormatError("line " + std::to_string(line[row]) + ", column '" + header[col] +
                          "': expected a number, got '" + s + "'");
  }
  return v;
}

CsvTable read_csv(std::istream& in, char delimiter) {
  CsvTable t;
  std::string text;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++lineno;
    if (lineno == 1 && text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);
    if (trim(text).empty()) continue;
    auto cells = split_line(text, delimiter, lineno);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      for (const auto& h : t.header) {
        if (h.empty()) throw DataFormatError("line " + std::to_string(lineno) + ": empty column name");
      }
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw DataFormatError("line " + std::to_string(lineno) + ": expected " +
                            std::to_string(t.header.size()) + " fields, found " +
                            std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
    t.line.push_back(lineno);
  }
  if (!have_header) throw DataFormatError("empty input: no header row");
  return t;
}

CsvTable read_csv_file(const std::string& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open '" + path + "'");
  return read_csv(in, delimiter);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& cells, char delimiter) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << delimiter;
    const std::string& c = cells[i];
    if (c.find(delimiter) != std::string::npos || c.find('"') != std::string::npos) {
      out << '"';
      for (char ch : c) out << (ch == '"' ? "\"\"" : std::string(1, ch));
      out << '"';
    } else {
      out << c;
    }
  }
  out << '\n';
}

// ---------------------------------------------------------------------------

Json to_json(const ModelSpec& spec) {
  Json covs = Json::array();
  for (const auto& c : spec.covariates) {
    Json jc{{"name", c.name}, {"type", c.categorical ? "categorical" : "continuous"}};
    if (c.categorical) jc["levels"] = c.levels;
    covs.push_back(jc);
  }
  Json terms = Json::array();
  for (const auto& t : spec.terms) {
    Json vars = Json::array(), kinds = Json::array();
    for (std::size_t k = 0; k < t.vars.size(); ++k) {
      vars.push_back(spec.covariates[t.vars[k]].name);
      kinds.push_back(to_string(t.kinds[k]));
    }
    terms.push_back({{"name", t.name}, {"vars", vars}, {"kinds", kinds}, {"theta", t.theta}});
  }
  return {{"covariates", covs}, {"terms", terms}};
}

ModelSpec spec_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("covariates")) {
    throw ConfigError("model spec needs a 'covariates' array");
  }
  std::vector<Covariate> covs;
  for (const auto& jc : j.at("covariates")) {
    Covariate c;
    c.name = jc.at("name").get<std::string>();
    const std::string type = field<std::string>(jc, "type", "continuous");
    if (type == "categorical") {
      c.categorical = true;
      c.levels = field<int>(jc, "levels", 0);
    } else if (type != "continuous") {
      throw ConfigError("covariate '" + c.name + "': unknown type '" + type + "'");
    }
    covs.push_back(c);
  }
  const KernelKind cont = parse_kernel_kind(field<std::string>(j, "kernel", "cubic"));
  if (!j.contains("terms")) {
    return make_anova_spec(covs, field<int>(j, "order", 1), cont);
  }
  ModelSpec spec;
  spec.covariates = covs;
  for (const auto& jt : j.at("terms")) {
    Term t;
    const auto vars = jt.at("vars").get<std::vector<std::string>>();
    std::vector<std::string> kinds;
    if (jt.contains("kinds")) kinds = jt.at("kinds").get<std::vector<std::string>>();
    if (!kinds.empty() && kinds.size() != vars.size()) {
      throw ConfigError("term kinds must match its variables");
    }
    for (std::size_t k = 0; k < vars.size(); ++k) {
      const int v = spec.find_covariate(vars[k]);
      if (v < 0) throw ConfigError("unknown covariate '" + vars[k] + "' in model spec");
      t.vars.push_back(static_cast<std::size_t>(v));
      if (!kinds.empty()) {
        t.kinds.push_back(parse_kernel_kind(kinds[k]));
      } else {
        t.kinds.push_back(covs[static_cast<std::size_t>(v)].categorical ? KernelKind::Categorical
                                                                         : cont);
      }
    }
    if (jt.contains("name")) {
      t.name = jt.at("name").get<std::string>();
    } else {
      for (const auto& v : vars) t.name += (t.name.empty() ? "" : ":") + v;
    }
    t.theta = field<double>(jt, "theta", 1.0);
    spec.terms.push_back(std::move(t));
  }
  spec.validate();
  return spec;
}

Json to_json(const Family& f) {
  Json j{{"name", f.name()}};
  if (f.kind == FamilyKind::NegativeBinomial) j["shape"] = f.nb_shape;
  return j;
}

Family family_from_json(const Json& j) {
  return parse_family(j.at("name").get<std::string>(), field<double>(j, "shape", 3.0));
}

Json to_json(const CovariateScaling& s) { return {{"lo", s.lo}, {"hi", s.hi}}; }

CovariateScaling scaling_from_json(const Json& j) {
  CovariateScaling s;
  s.lo = j.at("lo").get<std::vector<double>>();
  s.hi = j.at("hi").get<std::vector<double>>();
  return s;
}

Json to_json(const EffectiveBasis& b) {
  return {{"method", b.method},
          {"anchors", b.anchors},
          {"slice_id", b.slice_id},
          {"k", b.k},
          {"nstar", b.nstar()},
          {"per_slice", b.per_slice},
          {"slice_sizes", b.slice_sizes},
          {"boundaries", b.boundaries},
          {"seed", b.seed},
          {"rng", b.rng}};
}

EffectiveBasis basis_from_json(const Json& j) {
  EffectiveBasis b;
  b.method = j.at("method").get<std::string>();
  b.anchors = j.at("anchors").get<std::vector<std::size_t>>();
  b.slice_id = j.at("slice_id").get<std::vector<int>>();
  b.k = j.at("k").get<int>();
  b.per_slice = j.at("per_slice").get<std::vector<std::size_t>>();
  b.slice_sizes = j.at("slice_sizes").get<std::vector<std::size_t>>();
  b.boundaries = j.at("boundaries").get<std::vector<double>>();
  b.seed = j.at("seed").get<std::uint64_t>();
  b.rng = j.at("rng").get<std::string>();
  return b;
}

Json to_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number_json(v[i]));
  return a;
}

Json to_json(const Eigen::MatrixXd& m) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(to_json(Eigen::VectorXd(m.row(i).transpose())));
  return a;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = json_number(j[i]);
  return v;
}

Eigen::MatrixXd matrix_from_json(const Json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) throw ConfigError("matrix row length mismatch");
    m.row(static_cast<Eigen::Index>(i)) = vector_from_json(j[i]).transpose();
  }
  return m;
}

Json to_json(const FitResult& f) {
  return {{"d", to_json(f.d)},
          {"c", to_json(f.c)},
          {"b", to_json(f.b)},
          {"lambda", number_json(f.lambda)},
          {"thetas", f.thetas},
          {"theta_b", number_json(f.theta_b)},
          {"trace_aw", number_json(f.trace_aw)},
          {"trace_aw_winv", number_json(f.trace_aw_winv)},
          {"deviance", number_json(f.deviance)},
          {"gacv", number_json(f.gacv)},
          {"penalized_likelihood", number_json(f.penalized_likelihood)},
          {"newton_iterations", f.newton_iterations},
          {"halvings", f.halvings},
          {"converged", f.converged},
          {"clamped", f.clamped}};
}

FitResult fit_from_json(const Json& j) {
  FitResult f;
  f.d = vector_from_json(j.at("d"));
  f.c = vector_from_json(j.at("c"));
  f.b = vector_from_json(j.at("b"));
  f.lambda = json_number(j.at("lambda"));
  f.thetas = j.at("thetas").get<std::vector<double>>();
  f.theta_b = json_number(j.at("theta_b"));
  f.trace_aw = json_number(j.at("trace_aw"));
  f.trace_aw_winv = json_number(j.at("trace_aw_winv"));
  f.deviance = json_number(j.at("deviance"));
  f.gacv = json_number(j.at("gacv"));
  f.penalized_likelihood = json_number(j.at("penalized_likelihood"));
  f.newton_iterations = j.at("newton_iterations").get<int>();
  f.halvings = j.at("halvings").get<int>();
  f.converged = j.at("converged").get<bool>();
  f.clamped = j.at("clamped").get<bool>();
  return f;
}

Json to_json(const SearchConfig& c) {
  return {{"log10_lambda_lo", c.log10_lambda_lo},
          {"log10_lambda_hi", c.log10_lambda_hi},
          {"log10_theta_span", c.log10_theta_span},
          {"log10_theta_b_lo", c.log10_theta_b_lo},
          {"log10_theta_b_hi", c.log10_theta_b_hi},
          {"tune_thetas", c.tune_thetas},
          {"golden_evals", c.golden_evals},
          {"simplex_evals", c.simplex_evals},
          {"simplex_starts", c.simplex_starts},
          {"normalize_thetas", c.normalize_thetas},
          {"newton",
           {{"rel_tol", c.newton.rel_tol},
            {"max_iter", c.newton.max_iter},
            {"max_halvings", c.newton.max_halvings},
            {"weight_floor", c.newton.weight_floor}}}};
}

SearchConfig search_from_json(const Json& j) {
  SearchConfig c;
  c.log10_lambda_lo = field(j, "log10_lambda_lo", c.log10_lambda_lo);
  c.log10_lambda_hi = field(j, "log10_lambda_hi", c.log10_lambda_hi);
  c.log10_theta_span = field(j, "log10_theta_span", c.log10_theta_span);
  c.log10_theta_b_lo = field(j, "log10_theta_b_lo", c.log10_theta_b_lo);
  c.log10_theta_b_hi = field(j, "log10_theta_b_hi", c.log10_theta_b_hi);
  c.tune_thetas = field(j, "tune_thetas", c.tune_thetas);
  c.golden_evals = field(j, "golden_evals", c.golden_evals);
  c.simplex_evals = field(j, "simplex_evals", c.simplex_evals);
  c.simplex_starts = field(j, "simplex_starts", c.simplex_starts);
  c.normalize_thetas = field(j, "normalize_thetas", c.normalize_thetas);
  if (j.contains("newton")) {
    const Json& n = j.at("newton");
    c.newton.rel_tol = field(n, "rel_tol", c.newton.rel_tol);
    c.newton.max_iter = field(n, "max_iter", c.newton.max_iter);
    c.newton.max_halvings = field(n, "max_halvings", c.newton.max_halvings);
    c.newton.weight_floor = field(n, "weight_floor", c.newton.weight_floor);
  }
  return c;
}

Json to_json(const ProjectionReport& r) {
  return {{"retained", r.retained},
          {"dropped", r.dropped},
          {"kl_full_to_reduced", number_json(r.kl_full_to_reduced)},
          {"kl_full_to_constant", number_json(r.kl_full_to_constant)},
          {"kl_reduced_to_constant", number_json(r.kl_reduced_to_constant)},
          {"rho", number_json(r.rho)},
          {"decomposition_residual", number_json(r.decomposition_residual)},
          {"threshold", r.threshold},
          {"converged", r.converged},
          {"iterations", r.iterations},
          {"exceeds_threshold", r.exceeds_threshold()}};
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw DataFormatError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw DataFormatError("'" + path + "': " + e.what());
  }
}

}  // namespace abss
