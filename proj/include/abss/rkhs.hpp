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

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace abss {

/// Marginal kernel attached to one covariate inside a term.
///
///  - Cubic: {1} + {x} + smooth part with kernel int_0^1 (x1-u)_+ (x2-u)_+ du,
///    penalizing int (f'')^2 under f(0) = f'(0) = 0.
///  - Linear: {1} + smooth part with kernel min(x1, x2), penalizing int (f')^2
///    under f(0) = 0.
///  - Categorical: {1} + unpenalized contrasts with kernel 1[t1 == t2] - 1/t.
enum class KernelKind { Cubic, Linear, Categorical };

std::string to_string(KernelKind kind);
KernelKind parse_kernel_kind(const std::string& name);

/// Covariates are reals in [0, 1] after rescaling, or 0-based category indices.
struct Covariate {
  std::string name;
  bool categorical = false;
  int levels = 0;  ///< number of categories t (categorical only)
};

/// One functional-ANOVA component eta_S over the covariate subset `vars`.
struct Term {
  std::string name;
  std::vector<std::size_t> vars;
  std::vector<KernelKind> kinds;  ///< parallel to vars
  double theta = 1.0;

  /// True when the term owns a smooth (penalized) subspace.
  bool penalized() const;
};

/// One null-space basis function: a product of parametric factors.
struct NullFunction {
  struct Factor {
    std::size_t var;
    KernelKind kind;
    int level;  ///< contrast level for categorical factors
  };
  int term = -1;  ///< owning term, -1 for the constant
  std::vector<Factor> factors;
  std::string label;
};

using NullBasis = std::vector<NullFunction>;

struct ModelSpec {
  std::vector<Covariate> covariates;
  std::vector<Term> terms;

  /// Throws ConfigError on dangling covariate references, kind/type
  /// mismatches, repeated terms, or non-positive theta on a penalized term.
  void validate() const;

  std::size_t dims() const { return covariates.size(); }
  int find_covariate(const std::string& name) const;
  int find_term(const std::string& name) const;
  std::vector<double> thetas() const;
  /// Indices of penalized terms, in term order.
  std::vector<std::size_t> penalized_terms() const;
};

/// Builds a spec with one cubic main effect per continuous covariate, one
/// categorical main effect per factor, and every interaction up to `order`.
ModelSpec make_anova_spec(std::vector<Covariate> covariates, int order,
                          KernelKind continuous_kind = KernelKind::Cubic);

double cubic_kernel(double x1, double x2);
double linear_kernel(double x1, double x2);
/// Levels are 0-based: 0 <= tau < t.
double categorical_kernel(int tau1, int tau2, int t);

/// Null-space basis implied by the terms: the constant followed by every
/// product of parametric factors of each term, term by term.
NullBasis build_null_basis(const ModelSpec& spec);
double evaluate(const NullFunction& phi, const ModelSpec& spec,
                const Eigen::Ref<const Eigen::RowVectorXd>& point);
/// n x m matrix of null-space basis evaluations (rows = points).
Eigen::MatrixXd null_matrix(const ModelSpec& spec, const NullBasis& basis,
                            const Eigen::MatrixXd& points);

/// Penalized kernel R_S(a, b) of one term (unit theta).
double term_kernel(const ModelSpec& spec, const Term& term,
                   const Eigen::Ref<const Eigen::RowVectorXd>& a,
                   const Eigen::Ref<const Eigen::RowVectorXd>& b);

/// Gram block of one term, rows from `a`, columns from `b`.
Eigen::MatrixXd term_kernel_matrix(const ModelSpec& spec, const Term& term,
                                   const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// R_J(a_i, b_j) = sum_S theta_S R_S(a_i, b_j) over penalized terms.
/// `thetas` has one entry per term; unpenalized terms are skipped.
Eigen::MatrixXd kernel_matrix(const ModelSpec& spec, const Eigen::MatrixXd& a,
                              const Eigen::MatrixXd& b, const std::vector<double>& thetas);

/// Affine map of continuous covariates onto [0, 1] from training extremes.
struct CovariateScaling {
  std::vector<double> lo;
  std::vector<double> hi;

  static CovariateScaling fit(const ModelSpec& spec, const Eigen::MatrixXd& raw);
  /// Returns the scaled copy; `clamped` (if given) flags rows pushed back onto [0, 1].
  Eigen::MatrixXd apply(const ModelSpec& spec, const Eigen::MatrixXd& raw,
                        std::vector<bool>* clamped = nullptr) const;
};

/// Throws ConfigError unless every point matches the schema: scaled
/// continuous values in [0, 1] and categorical indices in range.
void check_points(const ModelSpec& spec, const Eigen::MatrixXd& points);

}  // namespace abss
