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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "abss/basis_select.hpp"
#include "abss/diagnostics.hpp"
#include "abss/error.hpp"
#include "abss/seqapps.hpp"
#include "abss/simlab.hpp"
#include "abss/solver.hpp"
#include "cli.hpp"

namespace abss::cli {

namespace fs = std::filesystem;

namespace {

using Labels = std::map<std::string, std::vector<std::string>>;

template <typename T>
T setdefault(Json& c, const char* key, T fallback) {
  if (!c.contains(key) || c[key].is_null()) c[key] = fallback;
  return c[key].get<T>();
}

std::string required_string(const Json& c, const char* key) {
  if (!c.contains(key) || !c[key].is_string() || c[key].get<std::string>().empty()) {
    throw ConfigError(std::string("missing required setting '") + key + "'");
  }
  return c[key].get<std::string>();
}

char delimiter_of(Json& c) {
  const std::string d = setdefault<std::string>(c, "delimiter", ",");
  if (d == "tab" || d == "\t" || d == "\\t") return '\t';
  if (d.size() == 1) return d[0];
  throw ConfigError("delimiter must be a single character or 'tab'");
}

/// "scott" (or 0) gives 0, otherwise a positive slice count.
int k_request(const Json& v) {
  if (v.is_string()) {
    if (v.get<std::string>() == "scott") return 0;
    throw ConfigError("K must be a positive integer or 'scott'");
  }
  const int k = v.get<int>();
  if (k < 0) throw ConfigError("K must be a positive integer or 'scott'");
  return k;
}

SearchConfig search_of(Json& c, const SearchConfig& base) {
  // Keys absent from the stored block fall back to the command's base.
  Json j = to_json(base);
  if (c.contains("search")) j.merge_patch(c["search"]);
  const SearchConfig s = search_from_json(j);
  c["search"] = to_json(s);
  return s;
}

bool parse_double(const std::string& s, double& v) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  return !s.empty() && res.ec == std::errc() && res.ptr == last;
}

/// Distinct labels, numerically ordered when every label is a number.
std::vector<std::string> level_order(const CsvTable& t, std::size_t col) {
  std::set<std::string> distinct;
  for (const auto& row : t.rows) distinct.insert(row[col]);
  std::vector<std::string> out(distinct.begin(), distinct.end());
  bool numeric = true;
  for (const auto& s : out) {
    double v;
    numeric = numeric && parse_double(s, v);
  }
  if (numeric) {
    std::stable_sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
      double x = 0, y = 0;
      parse_double(a, x);
      parse_double(b, y);
      return x < y;
    });
  }
  return out;
}

int label_index(const std::vector<std::string>& levels, const std::string& v) {
  const auto it = std::find(levels.begin(), levels.end(), v);
  return it == levels.end() ? -1 : static_cast<int>(it - levels.begin());
}

std::string line_prefix(const CsvTable& t, std::size_t row) {
  return "line " + std::to_string(t.line[row]) + ": ";
}

/// Covariate columns in schema order; categorical labels become indices.
Eigen::MatrixXd covariate_matrix(const CsvTable& t, const ModelSpec& spec, const Labels& labels) {
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  Eigen::MatrixXd raw(n, static_cast<Eigen::Index>(spec.dims()));
  for (std::size_t j = 0; j < spec.dims(); ++j) {
    const Covariate& cov = spec.covariates[j];
    const std::size_t col = t.require(cov.name);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto r = static_cast<std::size_t>(i);
      if (cov.categorical) {
        const int idx = label_index(labels.at(cov.name), t.rows[r][col]);
        if (idx < 0) {
          throw DataFormatError(line_prefix(t, r) + "unknown level '" + t.rows[r][col] +
                                "' for covariate '" + cov.name + "'");
        }
        raw(i, static_cast<Eigen::Index>(j)) = idx;
      } else {
        const double v = t.number(r, col);
        if (!std::isfinite(v)) {
          throw DataFormatError(line_prefix(t, r) + "non-finite value for '" + cov.name + "'");
        }
        raw(i, static_cast<Eigen::Index>(j)) = v;
      }
    }
  }
  return raw;
}

/// Response and binomial totals, checked against the family's support.
void read_response(const CsvTable& t, const Family& family, const std::string& response,
                   const std::string& total, Dataset& data) {
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  const std::size_t ycol = t.require(response);
  const bool binomial = family.kind == FamilyKind::Binomial;
  if (binomial && t.find(total) < 0) {
    throw DataFormatError("binomial family needs a total column '" + total + "'");
  }
  data.y.resize(n);
  if (binomial) data.total.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    data.y[i] = t.number(r, ycol);
    if (binomial) data.total[i] = t.number(r, t.require(total));
    try {
      validate_response(family, data.y[i], data.total_at(i));
    } catch (const std::exception& e) {
      throw DataFormatError(line_prefix(t, r) + e.what());
    }
  }
}

double mean_at(const Family& family, double eta, double total) {
  return mean_and_weight(family, clamp_eta(family, eta), total).mu;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw DataFormatError("cannot write '" + p.string() + "'");
  return out;
}

Json labels_json(const Labels& labels) {
  Json j = Json::object();
  for (const auto& [k, v] : labels) j[k] = v;
  return j;
}

// ---------------------------------------------------------------------------
// Model loading shared by fit, predict and diagnose

struct Columns {
  std::string response, total, group;
};

struct StoredModel {
  Json fit_json;
  Json basis_json;
  ModelSpec spec;
  Family family;
  CovariateScaling scaling;
  Labels labels;
  Columns columns;
  std::vector<std::string> group_levels;
  RandomEffect re;
  FitResult fit;
  EffectiveBasis basis;
  Eigen::MatrixXd anchors;
};

StoredModel load_model(const fs::path& dir) {
  StoredModel m;
  m.fit_json = read_json_file((dir / "fit.json").string());
  m.basis_json = read_json_file((dir / "basis.json").string());
  try {
    const Json& f = m.fit_json;
    m.spec = spec_from_json(f.at("spec"));
    m.family = family_from_json(f.at("family"));
    m.scaling = scaling_from_json(f.at("scaling"));
    for (const auto& [k, v] : f.at("labels").items()) m.labels[k] = v.get<std::vector<std::string>>();
    m.columns = {f.at("columns").at("response").get<std::string>(),
                 f.at("columns").at("total").get<std::string>(),
                 f.at("columns").at("group").get<std::string>()};
    m.fit = fit_from_json(f.at("fit"));
    if (f.contains("random_effect")) {
      const Json& re = f.at("random_effect");
      m.group_levels = re.at("labels").get<std::vector<std::string>>();
      const auto s = static_cast<Eigen::Index>(m.group_levels.size());
      for (Eigen::Index i = 0; i < s; ++i) m.re.levels.push_back(static_cast<int>(i));
      m.re.contrast = matrix_from_json(re.at("contrast"), std::max<Eigen::Index>(s - 1, 0));
    }
    m.basis = basis_from_json(m.basis_json);
    m.anchors = matrix_from_json(m.basis_json.at("anchor_points"),
                                 static_cast<Eigen::Index>(m.spec.dims()));
  } catch (const Json::exception& e) {
    throw DataFormatError("fit directory '" + dir.string() + "': " + e.what());
  }
  return m;
}

std::vector<int> group_labels_of(const CsvTable& t, const std::string& group,
                                 const std::vector<std::string>& levels) {
  std::vector<int> out(t.rows.size(), -1);
  const int col = t.find(group);
  if (col < 0) return out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    out[r] = label_index(levels, t.rows[r][static_cast<std::size_t>(col)]);
  }
  return out;
}

// ---------------------------------------------------------------------------

int run_fit(Json& c, std::ostream& log) {
  const fs::path out = c["out"].get<std::string>();
  const std::string data_path = required_string(c, "data");
  const std::string family_name = required_string(c, "family");
  const char delim = delimiter_of(c);
  const double nb_shape = setdefault(c, "nb_shape", 3.0);
  const Family family = parse_family(family_name, nb_shape);
  Columns cols{setdefault<std::string>(c, "response", "y"),
               setdefault<std::string>(c, "total", "total"),
               setdefault<std::string>(c, "group", "")};
  const std::string spec_path = setdefault<std::string>(c, "spec", "");
  const int order = setdefault(c, "order", 1);
  const std::string kernel = setdefault<std::string>(c, "kernel", "cubic");
  const auto categorical = setdefault(c, "categorical", std::vector<std::string>{});
  const std::string method = setdefault<std::string>(c, "method", "adaptive");
  if (method != "adaptive" && method != "uniform") {
    throw ConfigError("basis method must be 'adaptive' or 'uniform'");
  }
  const std::string nstar_rule = setdefault<std::string>(c, "nstar_rule", "cubic");
  if (nstar_rule != "cubic" && nstar_rule != "linear") {
    throw ConfigError("n* rule must be 'cubic' or 'linear'");
  }
  const double nstar_mult = setdefault(c, "nstar_mult", 10.0);
  std::size_t nstar = setdefault<std::size_t>(c, "nstar", 0);
  if (!c.contains("k")) c["k"] = "scott";
  if (!c.contains("k_rule")) c["k_rule"] = c["k"].is_string() ? "scott" : "fixed";
  int k = k_request(c["k"]);
  const auto seed = setdefault<std::uint64_t>(c, "seed", 1);
  const SearchConfig search = search_of(c, SearchConfig{});

  const CsvTable table = read_csv_file(data_path, delim);
  if (table.rows.size() < 2) throw DataFormatError("'" + data_path + "': need at least two rows");

  // Schema: either a spec document or every remaining column.
  Json spec_json;
  if (!spec_path.empty()) {
    spec_json = read_json_file(spec_path);
  } else {
    Json covs = Json::array();
    for (const auto& h : table.header) {
      if (h == cols.response || h == cols.total || h == cols.group) continue;
      const bool cat = std::find(categorical.begin(), categorical.end(), h) != categorical.end();
      covs.push_back({{"name", h}, {"type", cat ? "categorical" : "continuous"}});
    }
    if (covs.empty()) throw ConfigError("data has no covariate columns");
    for (const auto& name : categorical) {
      if (table.find(name) < 0) throw ConfigError("unknown categorical column '" + name + "'");
    }
    spec_json = {{"covariates", covs}, {"order", order}, {"kernel", kernel}};
  }
  if (!spec_json.is_object() || !spec_json.contains("covariates")) {
    throw ConfigError("model spec needs a 'covariates' array");
  }
  Labels labels;
  for (auto& jc : spec_json["covariates"]) {
    if (jc.value("type", "continuous") != "categorical") continue;
    const std::string name = jc.at("name").get<std::string>();
    const int col = table.find(name);
    if (col < 0) throw DataFormatError("missing column '" + name + "'");
    labels[name] = level_order(table, static_cast<std::size_t>(col));
    jc["levels"] = std::max<int>(jc.value("levels", 0), static_cast<int>(labels[name].size()));
  }
  const ModelSpec spec = spec_from_json(spec_json);
  for (const auto& cov : spec.covariates) {
    if (cov.name == cols.response) throw ConfigError("response '" + cov.name + "' used as covariate");
  }

  Dataset raw_data;
  raw_data.x = covariate_matrix(table, spec, labels);
  read_response(table, family, cols.response, cols.total, raw_data);
  const auto n = static_cast<std::size_t>(raw_data.n());

  RandomEffect re;
  std::vector<std::string> group_levels;
  if (!cols.group.empty()) {
    const int col = table.find(cols.group);
    if (col < 0) throw DataFormatError("missing column '" + cols.group + "'");
    group_levels = level_order(table, static_cast<std::size_t>(col));
    raw_data.group = group_labels_of(table, cols.group, group_levels);
    re = random_effect_columns(raw_data.group);
  }

  const CovariateScaling scaling = CovariateScaling::fit(spec, raw_data.x);
  Dataset data = raw_data;
  data.x = scaling.apply(spec, raw_data.x);
  check_points(spec, data.x);

  const std::size_t m = build_null_basis(spec).size();
  if (nstar == 0) nstar = default_nstar(n, nstar_rule == "linear" ? 2 : 4, nstar_mult, m);
  c["nstar"] = nstar;
  EffectiveBasis basis;
  if (method == "adaptive") {
    const Eigen::VectorXd stats = slicing_statistics(data, family);
    if (k == 0) k = scott_slice_count(stats);
    const Slicing slicing = slice(stats, k);
    basis = adaptive_sample(slicing, allocate(slicing, nstar), seed, m);
  } else {
    basis = uniform_sample(n, nstar, seed);
  }
  c["k"] = basis.k;

  const Design design = build_design(spec, data.x, basis, re.z);
  const TuneResult tuned = tune(data, family, design, search);
  const FitResult& fit = tuned.fit;

  Json fj{{"family", to_json(family)},
          {"spec", to_json(spec)},
          {"scaling", to_json(scaling)},
          {"labels", labels_json(labels)},
          {"columns", {{"response", cols.response}, {"total", cols.total}, {"group", cols.group}}},
          {"fit", to_json(fit)},
          {"n", n},
          {"data", data_path},
          {"delimiter", c["delimiter"]}};
  const auto r2 = quasi_r2(fit, data, family);
  fj["quasi_r2"] = r2 ? Json(*r2) : Json(nullptr);
  if (re.present() || !cols.group.empty()) {
    fj["random_effect"] = {{"labels", group_levels},
                           {"contrast", to_json(re.contrast)},
                           {"effects", to_json(Eigen::VectorXd(re.effects(fit.b)))}};
  }
  write_json_file((out / "fit.json").string(), fj);

  Json bj = to_json(basis);
  bj["anchor_points"] = to_json(design.anchors);
  bj["anchor_raw"] = to_json(anchor_points(basis, raw_data.x));
  write_json_file((out / "basis.json").string(), bj);

  // Same evaluation path as predict, so stored coefficients reproduce these rows.
  const Eigen::VectorXd eta = predict_eta(design, fit, data.x, re.z);
  auto csv = open_out(out / "fitted.csv");
  write_csv_row(csv, {"row", "eta", "mu"});
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    write_csv_row(csv, {std::to_string(i), format_double(eta[ii]),
                        format_double(mean_at(family, eta[ii], data.total_at(ii)))});
  }
  log << "fit: n=" << n << " n*=" << basis.nstar() << " K=" << basis.k
      << " lambda=" << format_double(fit.lambda) << " converged=" << (fit.converged ? "yes" : "no")
      << '\n';
  return fit.converged ? kExitOk : kExitUnconverged;
}

int run_predict(Json& c, std::ostream& log) {
  const fs::path out = c["out"].get<std::string>();
  const fs::path dir = required_string(c, "fit");
  const std::string data_path = required_string(c, "data");
  const char delim = delimiter_of(c);
  const StoredModel model = load_model(dir);
  const CsvTable table = read_csv_file(data_path, delim);

  auto csv = open_out(out / "predictions.csv");
  write_csv_row(csv, {"row", "eta", "mu", "warning"});
  if (table.rows.empty()) {
    log << "predict: empty input\n";
    return kExitOk;
  }
  const Eigen::MatrixXd raw = covariate_matrix(table, model.spec, model.labels);
  std::vector<bool> clamped;
  const Eigen::MatrixXd points = model.scaling.apply(model.spec, raw, &clamped);
  check_points(model.spec, points);

  Design design;
  design.spec = model.spec;
  design.null_basis = build_null_basis(model.spec);
  design.anchors = model.anchors;
  design.penalized = model.spec.penalized_terms();
  Eigen::MatrixXd z;
  if (model.re.contrast.cols() > 0) {
    z = model.re.columns_for(group_labels_of(table, model.columns.group, model.group_levels));
  }
  const Eigen::VectorXd eta = predict_eta(design, model.fit, points, z);

  const int tcol = model.family.kind == FamilyKind::Binomial ? table.find(model.columns.total) : -1;
  std::size_t warned = 0;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double total = tcol >= 0 ? table.number(i, static_cast<std::size_t>(tcol)) : 1.0;
    warned += clamped[i] ? 1 : 0;
    write_csv_row(csv, {std::to_string(i), format_double(eta[ii]),
                        format_double(mean_at(model.family, eta[ii], total)),
                        clamped[i] ? "clamped" : ""});
  }
  log << "predict: " << table.rows.size() << " rows";
  if (warned) log << ", " << warned << " clamped to the training range";
  log << '\n';
  return kExitOk;
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

int run_diagnose(Json& c, std::ostream& log) {
  const fs::path out = c["out"].get<std::string>();
  const fs::path dir = required_string(c, "fit");
  const StoredModel model = load_model(dir);
  if (!c.contains("data") || c["data"].get<std::string>().empty()) {
    c["data"] = model.fit_json.at("data").get<std::string>();
    if (!c.contains("delimiter")) c["delimiter"] = model.fit_json.value("delimiter", ",");
  }
  const std::string data_path = c["data"].get<std::string>();
  const char delim = delimiter_of(c);
  const double threshold = setdefault(c, "threshold", kDefaultRhoThreshold);

  std::vector<std::string> names;
  for (const auto& t : model.spec.terms) names.push_back(t.name);
  if (!c.contains("drops") || c["drops"].empty()) {
    Json drops = Json::array({Json::array()});
    for (const auto& t : names) drops.push_back({t});
    if (names.size() > 1) drops.push_back(names);
    c["drops"] = drops;
  }
  // "all" and "none" expand so the manifest records the actual term sets.
  for (auto& d : c["drops"]) {
    const auto v = d.get<std::vector<std::string>>();
    if (v == std::vector<std::string>{"all"}) d = names;
    if (v == std::vector<std::string>{"none"}) d = Json::array();
  }
  std::vector<std::vector<std::string>> drops;
  for (const auto& d : c["drops"]) drops.push_back(d.get<std::vector<std::string>>());

  const CsvTable table = read_csv_file(data_path, delim);
  Dataset data;
  data.x = model.scaling.apply(model.spec, covariate_matrix(table, model.spec, model.labels));
  read_response(table, model.family, model.columns.response, model.columns.total, data);
  Eigen::MatrixXd z;
  if (model.re.contrast.cols() > 0) {
    data.group = group_labels_of(table, model.columns.group, model.group_levels);
    z = model.re.columns_for(data.group);
  }
  if (model.basis.nstar() && *std::max_element(model.basis.anchors.begin(), model.basis.anchors.end()) >=
                                 static_cast<std::size_t>(data.n())) {
    throw DataFormatError("'" + data_path + "' is not the training data of this fit");
  }
  const Design design = build_design(model.spec, data.x, model.basis, z);
  if ((design.anchors - model.anchors).cwiseAbs().maxCoeff() > 0.0) {
    throw DataFormatError("'" + data_path + "' is not the training data of this fit");
  }
  FitResult fit = model.fit;
  fit.eta = predict_eta(design, fit, data.x, z);

  ProjectionOptions options;
  options.threshold = threshold;
  Json reports = Json::array();
  auto csv = open_out(out / "projections.csv");
  write_csv_row(csv, {"dropped", "retained", "rho", "kl_full_to_reduced", "kl_reduced_to_constant",
                      "kl_full_to_constant", "decomposition_residual", "converged", "verdict"});
  log << "dropped\trho\tverdict\n";
  for (const auto& d : drops) {
    const ProjectionReport r = kl_project(fit, design, data, model.family, d, options);
    const std::string verdict = !r.converged ? "unconverged"
                                : r.exceeds_threshold() ? "keep" : "negligible";
    reports.push_back(to_json(r));
    reports.back()["verdict"] = verdict;
    write_csv_row(csv, {join(r.dropped, ";"), join(r.retained, ";"), format_double(r.rho),
                        format_double(r.kl_full_to_reduced), format_double(r.kl_reduced_to_constant),
                        format_double(r.kl_full_to_constant), format_double(r.decomposition_residual),
                        r.converged ? "1" : "0", verdict});
    log << (r.dropped.empty() ? "(none)" : join(r.dropped, ",")) << '\t' << format_double(r.rho)
        << '\t' << verdict << '\n';
  }
  write_json_file((out / "projections.json").string(),
                  {{"threshold", threshold}, {"projections", reports}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

Scenario scenario_of(Json& c) {
  Scenario s = make_scenario(parse_scenario(required_string(c, "scenario")));
  s.n = setdefault(c, "n", s.n);
  s.reps = setdefault(c, "reps", s.reps);
  s.seed = setdefault(c, "seed", s.seed);
  s.nstar_mult = setdefault(c, "nstar_mult", s.nstar_mult);
  s.nstar = setdefault(c, "nstar", s.nstar);
  if (!c.contains("k")) c["k"] = "scott";
  s.k = k_request(c["k"]);
  s.trials = setdefault(c, "trials", s.trials);
  s.lo = setdefault(c, "lo", s.lo);
  s.hi = setdefault(c, "hi", s.hi);
  if (!c.contains("family")) c["family"] = to_json(s.family);
  s.family = family_from_json(c["family"]);
  if (!c.contains("alpha")) c["alpha"] = to_json(s.alpha);
  s.alpha = vector_from_json(c["alpha"]);
  s.search = search_of(c, s.search);
  if (s.n < 2) throw ConfigError("a scenario needs at least two observations");
  return s;
}

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json method_summary(double median, double iqr, int failures) {
  return {{"median_mse", finite_or_null(median)}, {"iqr_mse", finite_or_null(iqr)},
          {"failures", failures}};
}

int run_simulate(Json& c, std::ostream& log) {
  const fs::path out = c["out"].get<std::string>();
  const Scenario s = scenario_of(c);
  const int threads = setdefault(c, "threads", 1);
  c["nstar"] = s.resolved_nstar();
  const ExperimentResult res = run_experiment(s, threads);
  {
    auto csv = open_out(out / "experiment.csv");
    write_experiment_csv(res.rows, csv);
  }
  const ExperimentSummary& sm = res.summary;
  const Json summary{{"scenario", to_string(s.name)},
                     {"n", s.n},
                     {"nstar", s.resolved_nstar()},
                     {"reps", s.reps},
                     {"seed", s.seed},
                     {"abs", method_summary(sm.median_abs, sm.iqr_abs, sm.failures_abs)},
                     {"ubs", method_summary(sm.median_ubs, sm.iqr_ubs, sm.failures_ubs)},
                     {"abs_wins", sm.abs_wins},
                     {"compared", sm.compared},
                     {"abs_median_below_ubs", sm.median_abs < sm.median_ubs}};
  write_json_file((out / "summary.json").string(), summary);
  log << to_string(s.name) << ": ABS wins " << sm.abs_wins << "/" << sm.compared
      << ", median MSE ABS " << format_double(sm.median_abs) << " UBS "
      << format_double(sm.median_ubs) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

int run_gc_bias(Json& c, std::ostream& log) {
  const fs::path out = c["out"].get<std::string>();
  const std::string data_path = required_string(c, "data");
  const char delim = delimiter_of(c);
  GcBiasConfig cfg;
  cfg.nstar = setdefault<std::size_t>(c, "nstar", 0);
  cfg.nstar_mult = setdefault(c, "nstar_mult", cfg.nstar_mult);
  if (!c.contains("k")) c["k"] = "scott";
  if (!c.contains("k_rule")) c["k_rule"] = c["k"].is_string() ? "scott" : "fixed";
  cfg.k = k_request(c["k"]);
  cfg.time_categorical = setdefault(c, "time_categorical", false);
  cfg.seed = setdefault<std::uint64_t>(c, "seed", cfg.seed);
  cfg.search = search_of(c, cfg.search);

  const CsvTable t = read_csv_file(data_path, delim);
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  GcBiasData data;
  data.position.resize(n);
  data.time.resize(n);
  data.gc.resize(n, 3);
  data.count.resize(n);
  const std::size_t cp = t.require("position"), ct = t.require("time"), cy = t.require("count");
  const std::size_t cg[3] = {t.require("gc1"), t.require("gc2"), t.require("gc3")};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    data.position[i] = t.number(r, cp);
    data.time[i] = t.number(r, ct);
    for (int g = 0; g < 3; ++g) data.gc(i, g) = t.number(r, cg[g]);
    data.count[i] = t.number(r, cy);
  }
  const GcBiasResult res = fit_gc_bias(data, cfg);
  c["nstar"] = res.basis.nstar();
  c["k"] = res.basis.k;

  auto csv = open_out(out / "corrected.csv");
  write_csv_row(csv, {"row", "position", "time", "count", "fitted", "corrected"});
  for (Eigen::Index i = 0; i < n; ++i) {
    write_csv_row(csv, {std::to_string(i), format_double(data.position[i]),
                        format_double(data.time[i]), format_double(data.count[i]),
                        format_double(res.fitted[i]), format_double(res.corrected[i])});
  }
  const Json report{{"spec", to_json(res.spec)},
                    {"scaling", to_json(res.scaling)},
                    {"time_labels", res.time_labels},
                    {"basis", to_json(res.basis)},
                    {"fit", to_json(res.fit)},
                    {"gc_terms", res.gc_terms},
                    {"quasi_r2", res.quasi_r2 ? Json(*res.quasi_r2) : Json(nullptr)},
                    {"gc_projection", to_json(res.gc_projection)}};
  write_json_file((out / "gc_fit.json").string(), report);
  log << "gc-bias: n=" << n << " n*=" << res.basis.nstar() << " quasi-R2="
      << (res.quasi_r2 ? format_double(*res.quasi_r2) : std::string("n/a"))
      << " rho(GC terms)=" << format_double(res.gc_projection.rho) << '\n';
  return res.fit.converged ? kExitOk : kExitUnconverged;
}

int integer_cell(const CsvTable& t, std::size_t r, std::size_t col) {
  const double v = t.number(r, col);
  if (v != std::floor(v) || std::abs(v) > 2e9) {
    throw DataFormatError(line_prefix(t, r) + "column '" + t.header[col] + "' must be an integer");
  }
  return static_cast<int>(v);
}

int run_scan_dmr(Json& c, std::ostream& log) {
  const fs::path out = c["out"].get<std::string>();
  const std::string data_path = required_string(c, "data");
  const char delim = delimiter_of(c);
  DmrConfig cfg;
  cfg.width = setdefault(c, "width", cfg.width);
  cfg.k = setdefault(c, "k", cfg.k);
  cfg.per_slice = setdefault(c, "per_slice", cfg.per_slice);
  cfg.threshold = setdefault(c, "threshold", cfg.threshold);
  cfg.seed = setdefault<std::uint64_t>(c, "seed", cfg.seed);
  cfg.threads = setdefault(c, "threads", cfg.threads);
  cfg.min_rows = setdefault(c, "min_rows", cfg.min_rows);
  cfg.search = search_of(c, cfg.search);
  c["nstar"] = static_cast<std::size_t>(cfg.k) * cfg.per_slice;

  const CsvTable t = read_csv_file(data_path, delim);
  MethylTrack track;
  const std::size_t n = t.rows.size();
  const std::size_t cp = t.require("position"), cs = t.require("strain"),
                    cg = t.require("generation"), cm = t.require("methylated"),
                    cn = t.require("total");
  track.methylated.resize(static_cast<Eigen::Index>(n));
  track.total.resize(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    const double p = t.number(r, cp);
    if (p != std::floor(p)) throw DataFormatError(line_prefix(t, r) + "position must be an integer");
    track.position.push_back(static_cast<long long>(p));
    track.strain.push_back(integer_cell(t, r, cs));
    track.generation.push_back(integer_cell(t, r, cg));
    track.methylated[static_cast<Eigen::Index>(r)] = t.number(r, cm);
    track.total[static_cast<Eigen::Index>(r)] = t.number(r, cn);
  }
  const std::vector<DmrSegment> segs = n ? scan_dmr(track, cfg) : std::vector<DmrSegment>{};

  auto csv = open_out(out / "dmr.csv");
  write_csv_row(csv, {"start", "end", "rows", "positions", "nstar", "skipped", "reason",
                      "rho_generation", "rho_interaction", "flagged", "lambda", "theta_b",
                      "converged"});
  Json windows = Json::array();
  std::size_t flagged = 0;
  for (const auto& s : segs) {
    flagged += s.flagged ? 1 : 0;
    const std::string rg = s.skipped ? "" : format_double(s.drop_generation.rho);
    const std::string ri = s.skipped ? "" : format_double(s.drop_interaction.rho);
    write_csv_row(csv, {std::to_string(s.start), std::to_string(s.end), std::to_string(s.rows),
                        std::to_string(s.positions), std::to_string(s.nstar), s.skipped ? "1" : "0",
                        s.reason, rg, ri, s.flagged ? "1" : "0",
                        s.skipped ? "" : format_double(s.lambda),
                        s.skipped ? "" : format_double(s.theta_b), s.converged ? "1" : "0"});
    Json w{{"start", s.start}, {"end", s.end},         {"rows", s.rows},
           {"positions", s.positions}, {"nstar", s.nstar}, {"skipped", s.skipped},
           {"reason", s.reason},  {"flagged", s.flagged}};
    if (!s.skipped) {
      w["drop_generation"] = to_json(s.drop_generation);
      w["drop_interaction"] = to_json(s.drop_interaction);
      w["lambda"] = s.lambda;
      w["theta_b"] = s.theta_b;
      w["converged"] = s.converged;
      w["strain_levels"] = s.strain_levels;
      w["strain_effects"] = to_json(s.strain_effects);
    }
    windows.push_back(w);
  }
  write_json_file((out / "dmr.json").string(),
                  {{"threshold", cfg.threshold}, {"width", cfg.width}, {"windows", windows}});
  log << "scan-dmr: " << segs.size() << " windows, " << flagged << " flagged\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int run_generate(Json& c, std::ostream& log) {
  const fs::path out = c["out"].get<std::string>();
  const std::string kind = required_string(c, "kind");
  const auto seed = setdefault<std::uint64_t>(c, "seed", 1);
  auto csv = open_out(out / "data.csv");
  auto truth = open_out(out / "truth.csv");
  std::size_t rows = 0;
  if (kind == "gc") {
    GcSimConfig g;
    g.seed = seed;
    g.positions = setdefault(c, "positions", g.positions);
    g.times = setdefault(c, "times", g.times);
    g.gc_strength = setdefault(c, "gc_strength", g.gc_strength);
    g.baseline = setdefault(c, "baseline", g.baseline);
    Eigen::VectorXd corrected;
    const GcBiasData d = simulate_gc_bias(g, &corrected);
    write_csv_row(csv, {"position", "time", "gc1", "gc2", "gc3", "count"});
    write_csv_row(truth, {"row", "corrected"});
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      write_csv_row(csv, {format_double(d.position[i]), format_double(d.time[i]),
                          format_double(d.gc(i, 0)), format_double(d.gc(i, 1)),
                          format_double(d.gc(i, 2)), format_double(d.count[i])});
      write_csv_row(truth, {std::to_string(i), format_double(corrected[i])});
    }
    rows = static_cast<std::size_t>(d.n());
  } else if (kind == "methyl") {
    DmrSimConfig m;
    m.seed = seed;
    m.windows = setdefault(c, "windows", m.windows);
    m.planted = setdefault(c, "planted", m.planted);
    m.positions_per_window = setdefault(c, "positions_per_window", m.positions_per_window);
    m.strains = setdefault(c, "strains", m.strains);
    m.generations = setdefault(c, "generations", m.generations);
    m.mean_depth = setdefault(c, "mean_depth", m.mean_depth);
    m.shift = setdefault(c, "shift", m.shift);
    m.strain_sd = setdefault(c, "strain_sd", m.strain_sd);
    m.width = setdefault(c, "width", m.width);
    const MethylTrack t = simulate_methylation(m);
    write_csv_row(csv, {"position", "strain", "generation", "methylated", "total"});
    write_csv_row(truth, {"window_start", "planted"});
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      write_csv_row(csv, {std::to_string(t.position[i]), std::to_string(t.strain[i]),
                          std::to_string(t.generation[i]), format_double(t.methylated[ii]),
                          format_double(t.total[ii])});
    }
    for (int w = 0; w < m.windows; ++w) {
      const bool planted = std::find(m.planted.begin(), m.planted.end(), w) != m.planted.end();
      write_csv_row(truth, {std::to_string(w * m.width), planted ? "1" : "0"});
    }
    rows = t.size();
  } else {
    Scenario s = make_scenario(parse_scenario(kind));
    s.seed = seed;
    s.n = setdefault(c, "n", s.n);
    s.trials = setdefault(c, "trials", s.trials);
    const int replicate = setdefault(c, "replicate", 0);
    const SimData sim = generate(s, replicate);
    std::vector<std::string> header;
    for (int j = 0; j < s.d; ++j) header.push_back("x" + std::to_string(j + 1));
    header.push_back("y");
    const bool binomial = s.family.kind == FamilyKind::Binomial;
    if (binomial) header.push_back("total");
    write_csv_row(csv, header);
    write_csv_row(truth, {"row", "truth"});
    for (Eigen::Index i = 0; i < sim.data.n(); ++i) {
      std::vector<std::string> cells;
      for (int j = 0; j < s.d; ++j) cells.push_back(format_double(sim.raw(i, j)));
      cells.push_back(format_double(sim.data.y[i]));
      if (binomial) cells.push_back(format_double(sim.data.total_at(i)));
      write_csv_row(csv, cells);
      write_csv_row(truth, {std::to_string(i), format_double(sim.truth[i])});
    }
    rows = static_cast<std::size_t>(sim.data.n());
  }
  log << "generate: " << kind << ", " << rows << " rows\n";
  return kExitOk;
}

using Runner = int (*)(Json&, std::ostream&);

const std::map<std::string, Runner>& runners() {
  static const std::map<std::string, Runner> table = {
      {"diagnose", run_diagnose}, {"fit", run_fit},           {"gc-bias", run_gc_bias},
      {"generate", run_generate}, {"predict", run_predict},   {"scan-dmr", run_scan_dmr},
      {"simulate", run_simulate}};
  return table;
}

}  // namespace

std::vector<std::string> command_names() {
  std::vector<std::string> out;
  for (const auto& [name, run] : runners()) out.push_back(name);
  return out;
}

int execute(const std::string& command, Json& config, std::ostream& log) {
  const auto it = runners().find(command);
  if (it == runners().end()) throw ConfigError("unknown command '" + command + "'");
  if (!config.is_object()) throw ConfigError("config must be an object");
  for (const char* key : {"data", "spec", "fit", "out"}) {
    if (config.contains(key) && config[key].is_string() && !config[key].get<std::string>().empty()) {
      config[key] = fs::absolute(config[key].get<std::string>()).lexically_normal().string();
    }
  }
  const fs::path out = required_string(config, "out");
  fs::create_directories(out);
  const int code = it->second(config, log);
  write_json_file((out / "manifest.json").string(),
                  {{"schema_version", kSchemaVersion}, {"command", command}, {"config", config}});
  return code;
}

}  // namespace abss::cli
