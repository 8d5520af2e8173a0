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

#include "abss/basis_select.hpp"
#include "abss/dataset.hpp"
#include "abss/error.hpp"
#include "abss/family.hpp"
#include "abss/linalg.hpp"
#include "abss/rkhs.hpp"

namespace abss {

/// The three blocks of the penalized weighted least squares problem:
/// S (n x m) null-space evaluations, R (n x n*) kernel columns at the
/// anchors, Q (n* x n*) anchor Gram matrix.
struct Assembled {
  Eigen::MatrixXd s;
  Eigen::MatrixXd r;
  Eigen::MatrixXd q;
};

/// Per-term kernel blocks cached so that new thetas only recombine them.
struct Design {
  ModelSpec spec;
  NullBasis null_basis;
  Eigen::MatrixXd points;   ///< scaled training covariates
  Eigen::MatrixXd anchors;  ///< scaled anchor covariates
  Eigen::MatrixXd s;
  std::vector<std::size_t> penalized;   ///< term indices with a kernel block
  std::vector<Eigen::MatrixXd> r_term;  ///< parallel to penalized
  std::vector<Eigen::MatrixXd> q_term;
  Eigen::MatrixXd z;  ///< random-effect columns (n x q), empty when absent

  Eigen::Index n() const { return s.rows(); }
  Eigen::Index null_dim() const { return s.cols(); }
  Eigen::Index nstar() const { return anchors.rows(); }
  Eigen::Index re_dim() const { return z.cols(); }

  /// R and Q for the given per-term thetas (one entry per term).
  Assembled combine(const std::vector<double>& thetas) const;
};

Design build_design(const ModelSpec& spec, const Eigen::MatrixXd& points,
                    const EffectiveBasis& basis, Eigen::MatrixXd random_effect = {});

/// S, R and Q for scaled training points.
Assembled assemble(const ModelSpec& spec, const Eigen::MatrixXd& points,
                   const EffectiveBasis& basis, const std::vector<double>& thetas);

struct PwlsSolution {
  Eigen::VectorXd d;
  Eigen::VectorXd c;
  Eigen::VectorXd b;  ///< random-effect coefficients (empty when absent)
  /// ||M x - rhs|| / ||rhs|| of the assembled normal equations.
  double relative_residual = 0.0;
  Eigen::Index rank = 0;
  bool rank_deficient = false;
};

/// Minimizes (y~ - Sd - Rc - Zb)^T W (y~ - Sd - Rc - Zb) + n lambda c^T Q c
/// + b^T b / theta_b through the normal equations, factored by pivoted
/// Cholesky with minimum-norm handling of rank deficiency. `z` may be empty.
PwlsSolution pwls_solve(const Eigen::MatrixXd& s, const Eigen::MatrixXd& r,
                        const Eigen::MatrixXd& q, const Eigen::VectorXd& w,
                        const Eigen::VectorXd& y_tilde, Eigen::Index n, double lambda,
                        const Eigen::MatrixXd& z = {}, double theta_b = 1.0);

/// Columns F with span(F) = span(R) restricted to directions Q c != 0 and
/// c^T Q c = |gamma|^2 for R c = F gamma.
Eigen::MatrixXd kernel_features(const Eigen::MatrixXd& r, const Eigen::MatrixXd& q);

struct Traces {
  double trace_aw = 0.0;
  double trace_aw_winv = 0.0;
};

/// Exact tr(A_w) and tr(A_w W^{-1}) of the smoothing matrix.
Traces smoothing_traces(const Eigen::MatrixXd& s, const Eigen::MatrixXd& r,
                        const Eigen::MatrixXd& q, const Eigen::VectorXd& w, Eigen::Index n,
                        double lambda, const Eigen::MatrixXd& z = {}, double theta_b = 1.0);

struct NewtonOptions {
  double rel_tol = 1e-7;
  int max_iter = 30;
  int max_halvings = 15;
  double weight_floor = 1e-8;
};

struct FitResult {
  Eigen::VectorXd d;
  Eigen::VectorXd c;
  Eigen::VectorXd b;
  double lambda = 0.0;
  std::vector<double> thetas;  ///< one per term
  double theta_b = 1.0;
  double trace_aw = 0.0;
  double trace_aw_winv = 0.0;
  double deviance = 0.0;
  double gacv = 0.0;
  double penalized_likelihood = 0.0;
  int newton_iterations = 0;
  int halvings = 0;
  bool converged = false;
  bool clamped = false;  ///< negative binomial eta had to be clamped
  std::vector<double> objective_trace;  ///< penalized likelihood after each accepted step
  Eigen::VectorXd eta;
  Eigen::VectorXd mu;
  Eigen::VectorXd w;
};

/// Penalized likelihood -(1/n) sum {y eta - b(eta)} + (lambda/2) c^T Q c
/// + b^T b / (2 n theta_b).
double penalized_likelihood(const Family& family, const Dataset& data,
                            const Eigen::VectorXd& eta, const Eigen::VectorXd& c,
                            const Eigen::MatrixXd& q, double lambda,
                            const Eigen::VectorXd& b = {}, double theta_b = 1.0);

/// Newton iteration on the penalized likelihood in the effective model space.
/// `warm` supplies starting coefficients (d, c, b); otherwise the constant
/// MLE starts the iteration.
FitResult newton_fit(const Dataset& data, const Family& family, const Design& design,
                     double lambda, const std::vector<double>& thetas, double theta_b = 1.0,
                     const NewtonOptions& options = {}, const FitResult* warm = nullptr);

/// GACV score of a converged fit; +infinity when tr(A_w) >= n - 1e-6.
double gacv(const FitResult& fit, const Dataset& data, const Family& family);

struct SearchConfig {
  double log10_lambda_lo = -10.0;
  double log10_lambda_hi = 1.0;
  /// Decades around the initial theta explored for multi-term models.
  double log10_theta_span = 3.0;
  double log10_theta_b_lo = -6.0;
  double log10_theta_b_hi = 4.0;
  bool tune_thetas = true;
  int golden_evals = 30;
  int simplex_evals = 120;
  int simplex_starts = 1;
  /// Scale initial thetas by 1 / mean(diag Q_S) so terms start comparable.
  bool normalize_thetas = true;
  NewtonOptions newton;
};

struct SearchStep {
  std::vector<double> params;  ///< log10 lambda, log10 free thetas, [log10 theta_b]
  double score;
  bool converged;
};

struct TuneResult {
  FitResult fit;
  std::vector<SearchStep> trajectory;
};

/// Every candidate fit failed to converge.
class TuneFailure : public NumericalError {
 public:
  TuneFailure(const std::string& what, std::vector<SearchStep> trajectory)
      : NumericalError(what), trajectory_(std::move(trajectory)) {}
  const std::vector<SearchStep>& trajectory() const { return trajectory_; }

 private:
  std::vector<SearchStep> trajectory_;
};

/// Minimizes GACV over lambda (golden section) and, with two or more
/// penalized terms or a random effect, the log thetas (Nelder-Mead).
TuneResult tune(const Dataset& data, const Family& family, const Design& design,
                const SearchConfig& config = {});

/// eta at new scaled points from stored coefficients.
Eigen::VectorXd predict_eta(const Design& design, const FitResult& fit,
                            const Eigen::MatrixXd& points, const Eigen::MatrixXd& z = {});

/// Training-point pieces of eta: column 0 is the constant, column t + 1 the
/// null-space and kernel parts of term t. The random effect is not included.
Eigen::MatrixXd term_contributions(const Design& design, const FitResult& fit);

}  // namespace abss
