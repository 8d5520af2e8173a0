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

#include "abss/rkhs.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "abss/error.hpp"

namespace abss {
namespace {

constexpr double kRangeSlack = 1e-12;

void require_unit_interval(double x, const char* who) {
  if (!(x >= -kRangeSlack && x <= 1.0 + kRangeSlack)) {
    throw DomainError(std::string(who) + ": input " + std::to_string(x) +
                      " outside [0, 1]; rescale covariates first");
  }
}

struct Marginal {
  double parametric;
  double smooth;
};

Marginal marginal(KernelKind kind, double a, double b, int levels) {
  switch (kind) {
    case KernelKind::Cubic: return {a * b, cubic_kernel(a, b)};
    case KernelKind::Linear: return {0.0, linear_kernel(a, b)};
    case KernelKind::Categorical:
      return {categorical_kernel(static_cast<int>(a), static_cast<int>(b), levels), 0.0};
  }
  return {0.0, 0.0};
}

std::string covariate_label(const ModelSpec& spec, const Term& term) {
  std::string out;
  for (std::size_t v : term.vars) {
    if (!out.empty()) out += ":";
    out += spec.covariates[v].name;
  }
  return out;
}

}  // namespace

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::Cubic: return "cubic";
    case KernelKind::Linear: return "linear";
    case KernelKind::Categorical: return "categorical";
  }
  return "unknown";
}

KernelKind parse_kernel_kind(const std::string& name) {
  if (name == "cubic") return KernelKind::Cubic;
  if (name == "linear") return KernelKind::Linear;
  if (name == "categorical") return KernelKind::Categorical;
  throw ConfigError("unknown kernel kind '" + name + "'");
}

bool Term::penalized() const {
  return std::any_of(kinds.begin(), kinds.end(),
                     [](KernelKind k) { return k != KernelKind::Categorical; });
}

void ModelSpec::validate() const {
  std::set<std::string> names;
  for (const auto& c : covariates) {
    if (c.name.empty()) throw ConfigError("covariate with empty name");
    if (!names.insert(c.name).second) throw ConfigError("duplicate covariate '" + c.name + "'");
    if (c.categorical && c.levels < 2) {
      throw ConfigError("categorical covariate '" + c.name + "' needs at least 2 levels");
    }
  }
  std::set<std::vector<std::size_t>> seen;
  std::set<std::string> term_names;
  for (const auto& t : terms) {
    if (t.vars.empty()) throw ConfigError("term '" + t.name + "' has no covariates");
    if (t.vars.size() != t.kinds.size()) {
      throw ConfigError("term '" + t.name + "': one kernel kind per covariate required");
    }
    for (std::size_t k = 0; k < t.vars.size(); ++k) {
      if (t.vars[k] >= covariates.size()) {
        throw ConfigError("term '" + t.name + "' references unknown covariate index " +
                          std::to_string(t.vars[k]));
      }
      const auto& c = covariates[t.vars[k]];
      const bool cat_kind = t.kinds[k] == KernelKind::Categorical;
      if (cat_kind != c.categorical) {
        throw ConfigError("term '" + t.name + "': kernel " + to_string(t.kinds[k]) +
                          " does not match covariate '" + c.name + "'");
      }
    }
    auto key = t.vars;
    std::sort(key.begin(), key.end());
    if (std::adjacent_find(key.begin(), key.end()) != key.end()) {
      throw ConfigError("term '" + t.name + "' repeats a covariate");
    }
    if (!seen.insert(key).second) throw ConfigError("duplicate term '" + t.name + "'");
    if (!term_names.insert(t.name).second) throw ConfigError("duplicate term name '" + t.name + "'");
    if (t.penalized() && !(t.theta > 0.0)) {
      throw ConfigError("term '" + t.name + "' needs theta > 0");
    }
  }
}

int ModelSpec::find_covariate(const std::string& name) const {
  for (std::size_t i = 0; i < covariates.size(); ++i) {
    if (covariates[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

int ModelSpec::find_term(const std::string& name) const {
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<double> ModelSpec::thetas() const {
  std::vector<double> out;
  out.reserve(terms.size());
  for (const auto& t : terms) out.push_back(t.theta);
  return out;
}

std::vector<std::size_t> ModelSpec::penalized_terms() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].penalized()) out.push_back(i);
  }
  return out;
}

ModelSpec make_anova_spec(std::vector<Covariate> covariates, int order,
                          KernelKind continuous_kind) {
  ModelSpec spec;
  spec.covariates = std::move(covariates);
  const std::size_t d = spec.covariates.size();
  // Subsets ordered by size, then lexicographically.
  for (int size = 1; size <= std::min<int>(order, static_cast<int>(d)); ++size) {
    std::vector<bool> pick(d, false);
    std::fill(pick.begin(), pick.begin() + size, true);
    do {
      Term t;
      for (std::size_t j = 0; j < d; ++j) {
        if (!pick[j]) continue;
        t.vars.push_back(j);
        t.kinds.push_back(spec.covariates[j].categorical ? KernelKind::Categorical
                                                         : continuous_kind);
      }
      t.name = covariate_label(spec, t);
      spec.terms.push_back(std::move(t));
    } while (std::prev_permutation(pick.begin(), pick.end()));
  }
  spec.validate();
  return spec;
}

double cubic_kernel(double x1, double x2) {
  require_unit_interval(x1, "cubic_kernel");
  require_unit_interval(x2, "cubic_kernel");
  const double s = std::min(x1, x2);
  return x1 * x2 * s - (x1 + x2) * s * s / 2.0 + s * s * s / 3.0;
}

double linear_kernel(double x1, double x2) {
  require_unit_interval(x1, "linear_kernel");
  require_unit_interval(x2, "linear_kernel");
  return std::min(x1, x2);
}

double categorical_kernel(int tau1, int tau2, int t) {
  if (t < 2) throw DomainError("categorical_kernel: need at least 2 levels");
  if (tau1 < 0 || tau1 >= t || tau2 < 0 || tau2 >= t) {
    throw DomainError("categorical_kernel: level out of range [0, " + std::to_string(t) + ")");
  }
  return (tau1 == tau2 ? 1.0 : 0.0) - 1.0 / t;
}

NullBasis build_null_basis(const ModelSpec& spec) {
  NullBasis basis;
  basis.push_back(NullFunction{-1, {}, "1"});
  for (std::size_t ti = 0; ti < spec.terms.size(); ++ti) {
    const Term& term = spec.terms[ti];
    // Per-covariate parametric factor choices; linear kernels have none, so a
    // term containing one contributes nothing to the null space.
    std::vector<std::vector<NullFunction::Factor>> choices;
    for (std::size_t k = 0; k < term.vars.size(); ++k) {
      const std::size_t v = term.vars[k];
      std::vector<NullFunction::Factor> opts;
      switch (term.kinds[k]) {
        case KernelKind::Cubic: opts.push_back({v, KernelKind::Cubic, 0}); break;
        case KernelKind::Linear: break;
        case KernelKind::Categorical:
          for (int l = 0; l + 1 < spec.covariates[v].levels; ++l) {
            opts.push_back({v, KernelKind::Categorical, l});
          }
          break;
      }
      choices.push_back(std::move(opts));
    }
    if (std::any_of(choices.begin(), choices.end(), [](const auto& c) { return c.empty(); })) {
      continue;
    }
    std::vector<NullFunction::Factor> current;
    std::function<void(std::size_t)> expand = [&](std::size_t k) {
      if (k == choices.size()) {
        NullFunction phi{static_cast<int>(ti), current, ""};
        for (const auto& f : current) {
          if (!phi.label.empty()) phi.label += "*";
          phi.label += spec.covariates[f.var].name;
          if (f.kind == KernelKind::Categorical) phi.label += "[" + std::to_string(f.level) + "]";
        }
        basis.push_back(std::move(phi));
        return;
      }
      for (const auto& f : choices[k]) {
        current.push_back(f);
        expand(k + 1);
        current.pop_back();
      }
    };
    expand(0);
  }
  return basis;
}

double evaluate(const NullFunction& phi, const ModelSpec& spec,
                const Eigen::Ref<const Eigen::RowVectorXd>& point) {
  double v = 1.0;
  for (const auto& f : phi.factors) {
    const double x = point[static_cast<Eigen::Index>(f.var)];
    if (f.kind == KernelKind::Cubic) {
      v *= x;
    } else {
      const int t = spec.covariates[f.var].levels;
      v *= (static_cast<int>(x) == f.level ? 1.0 : 0.0) - 1.0 / t;
    }
  }
  return v;
}

Eigen::MatrixXd null_matrix(const ModelSpec& spec, const NullBasis& basis,
                            const Eigen::MatrixXd& points) {
  Eigen::MatrixXd s(points.rows(), static_cast<Eigen::Index>(basis.size()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (std::size_t k = 0; k < basis.size(); ++k) {
      s(i, static_cast<Eigen::Index>(k)) = evaluate(basis[k], spec, points.row(i));
    }
  }
  return s;
}

double term_kernel(const ModelSpec& spec, const Term& term,
                   const Eigen::Ref<const Eigen::RowVectorXd>& a,
                   const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  // prod_j (p_j + k_j) - prod_j p_j: every tensor component with at least
  // one smooth factor.
  double full = 1.0;
  double parametric = 1.0;
  for (std::size_t k = 0; k < term.vars.size(); ++k) {
    const auto v = static_cast<Eigen::Index>(term.vars[k]);
    const Marginal m = marginal(term.kinds[k], a[v], b[v], spec.covariates[term.vars[k]].levels);
    full *= m.parametric + m.smooth;
    parametric *= m.parametric;
  }
  return full - parametric;
}

Eigen::MatrixXd term_kernel_matrix(const ModelSpec& spec, const Term& term,
                                   const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != static_cast<Eigen::Index>(spec.dims()) ||
      b.cols() != static_cast<Eigen::Index>(spec.dims())) {
    throw ConfigError("kernel_matrix: points do not match the covariate schema");
  }
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      out(i, j) = term_kernel(spec, term, a.row(i), b.row(j));
    }
  }
  if (!out.allFinite()) throw NumericalError("non-finite kernel value");
  return out;
}

Eigen::MatrixXd kernel_matrix(const ModelSpec& spec, const Eigen::MatrixXd& a,
                              const Eigen::MatrixXd& b, const std::vector<double>& thetas) {
  if (thetas.size() != spec.terms.size()) {
    throw ConfigError("kernel_matrix: one theta per term required");
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows(), b.rows());
  for (std::size_t t = 0; t < spec.terms.size(); ++t) {
    if (!spec.terms[t].penalized() || thetas[t] == 0.0) continue;
    out += thetas[t] * term_kernel_matrix(spec, spec.terms[t], a, b);
  }
  return out;
}

CovariateScaling CovariateScaling::fit(const ModelSpec& spec, const Eigen::MatrixXd& raw) {
  CovariateScaling s;
  const std::size_t d = spec.dims();
  s.lo.assign(d, 0.0);
  s.hi.assign(d, 1.0);
  for (std::size_t j = 0; j < d; ++j) {
    if (spec.covariates[j].categorical || raw.rows() == 0) continue;
    const auto col = raw.col(static_cast<Eigen::Index>(j));
    s.lo[j] = col.minCoeff();
    s.hi[j] = col.maxCoeff();
    if (!(s.hi[j] > s.lo[j])) s.hi[j] = s.lo[j] + 1.0;
  }
  return s;
}

Eigen::MatrixXd CovariateScaling::apply(const ModelSpec& spec, const Eigen::MatrixXd& raw,
                                        std::vector<bool>* clamped) const {
  if (raw.cols() != static_cast<Eigen::Index>(spec.dims())) {
    throw ConfigError("scaling: column count does not match the covariate schema");
  }
  Eigen::MatrixXd out = raw;
  if (clamped) clamped->assign(static_cast<std::size_t>(raw.rows()), false);
  for (std::size_t j = 0; j < spec.dims(); ++j) {
    if (spec.covariates[j].categorical) continue;
    const auto jj = static_cast<Eigen::Index>(j);
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
      const double v = (raw(i, jj) - lo[j]) / (hi[j] - lo[j]);
      const double c = std::clamp(v, 0.0, 1.0);
      if (clamped && c != v) (*clamped)[static_cast<std::size_t>(i)] = true;
      out(i, jj) = c;
    }
  }
  return out;
}

void check_points(const ModelSpec& spec, const Eigen::MatrixXd& points) {
  if (points.cols() != static_cast<Eigen::Index>(spec.dims())) {
    throw ConfigError("points have " + std::to_string(points.cols()) + " columns, schema has " +
                      std::to_string(spec.dims()));
  }
  for (std::size_t j = 0; j < spec.dims(); ++j) {
    const auto& c = spec.covariates[j];
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      const double v = points(i, static_cast<Eigen::Index>(j));
      if (c.categorical) {
        if (v != std::floor(v) || v < 0 || v >= c.levels) {
          throw ConfigError("covariate '" + c.name + "': level " + std::to_string(v) +
                            " out of range");
        }
      } else if (!(v >= 0.0 && v <= 1.0)) {
        throw ConfigError("covariate '" + c.name + "': value outside [0, 1]");
      }
    }
  }
}

}  // namespace abss
