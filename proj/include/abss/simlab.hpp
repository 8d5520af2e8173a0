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

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "abss/dataset.hpp"
#include "abss/family.hpp"
#include "abss/rkhs.hpp"
#include "abss/solver.hpp"

namespace abss {

/// Donoho-Johnstone blocks knots and heights.
inline constexpr std::array<double, 11> kBlocksKnots = {0.10, 0.13, 0.15, 0.23, 0.25, 0.40,
                                                        0.44, 0.65, 0.76, 0.78, 0.81};
inline constexpr std::array<double, 11> kBlocksHeights = {4.0,  -5.0, 3.0, -4.0, 5.0, -4.2,
                                                          2.1,  4.3,  -3.1, 2.1, -4.2};

/// sum_j h_j I[x >= t_j]: piecewise constant and right-continuous.
double blocks1(double x);
/// blocks1(x1); constant in x2.
double blocks2(double x1, double x2);

/// Tridiagonal covariance with unit diagonal and 0.5 off the diagonal.
Eigen::MatrixXd copula_sigma(int d);

/// Nonparanormal density with f_j(x) = alpha_j sign(x) |x|^alpha_j. Inputs with
/// |x_j| < 1e-12 are moved to 1e-12 so alpha_j < 1 stays finite.
double nonparanormal_density(const Eigen::VectorXd& x, const Eigen::VectorXd& alpha);

enum class ScenarioName { BlocksNegBin, Copula2Poisson, Copula4Binomial };

std::string to_string(ScenarioName name);
/// Throws ConfigError listing the valid names.
ScenarioName parse_scenario(const std::string& name);
std::vector<std::string> scenario_names();

struct Scenario {
  ScenarioName name = ScenarioName::BlocksNegBin;
  int d = 2;
  std::size_t n = 1600;
  int reps = 100;
  double nstar_mult = 10.0;
  std::size_t nstar = 0;  ///< 0: round(nstar_mult n^{2/9})
  int k = 0;              ///< 0: Scott's rule
  Family family;
  Eigen::VectorXd alpha;
  double trials = 50.0;  ///< binomial m
  double lo = 0.0, hi = 1.0;  ///< domain box per coordinate
  std::uint64_t seed = 1;
  SearchConfig search;

  /// Cubic main effects, plus the two-way interaction when d = 2.
  ModelSpec fitted_spec() const;
  std::size_t resolved_nstar() const;
};

Scenario make_scenario(ScenarioName name);

struct SimData {
  Dataset data;          ///< covariates already mapped onto [0, 1]
  Eigen::MatrixXd raw;   ///< covariates in the domain box
  Eigen::VectorXd truth; ///< p (binomial, negative binomial) or lambda (Poisson)
};

/// Replicate `replicate` of the scenario; deterministic in (seed, replicate).
SimData generate(const Scenario& scenario, int replicate);

/// Truth parameter at a domain point.
double truth_parameter(const Scenario& scenario, const Eigen::VectorXd& x);

/// sum_i (estimate_i - truth_i)^2, a sum as in the experiment's definition.
double mse(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth);

struct ReplicateRow {
  int replicate = 0;
  std::string method;  ///< "ABS" or "UBS"
  double mse = 0.0;
  std::size_t nstar = 0;
  int k = 1;
  std::uint64_t seed = 0;  ///< basis seed
  bool converged = false;
  bool failed = false;
  double lambda = 0.0;
  double gacv = 0.0;
  std::string error;
};

struct ExperimentSummary {
  double median_abs = 0.0;
  double median_ubs = 0.0;
  double iqr_abs = 0.0;
  double iqr_ubs = 0.0;
  int abs_wins = 0;
  int compared = 0;  ///< replicates where both methods produced a fit
  int failures_abs = 0;
  int failures_ubs = 0;
};

struct ExperimentResult {
  Scenario scenario;
  std::vector<ReplicateRow> rows;  ///< replicate-major, ABS before UBS
  ExperimentSummary summary;
};

std::uint64_t basis_seed(std::uint64_t seed, int replicate, bool adaptive);

/// Fits one replicate with one method on already generated data.
ReplicateRow fit_replicate(const Scenario& scenario, const SimData& sim, int replicate,
                           bool adaptive);

/// ABS and UBS on identical data per replicate; `threads` workers.
ExperimentResult run_experiment(const Scenario& scenario, int threads = 1);

ExperimentSummary summarize(const std::vector<ReplicateRow>& rows);

/// replicate,method,mse,nstar,K,seed,converged,lambda,gacv,error
void write_experiment_csv(const std::vector<ReplicateRow>& rows, std::ostream& out);

}  // namespace abss
