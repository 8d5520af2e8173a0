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

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "abss/dataset.hpp"
#include "abss/family.hpp"
#include "abss/solver.hpp"

namespace abss {

/// 1 - d / d0 with d0 the deviance of the constant fit; empty when d0 = 0.
std::optional<double> quasi_r2(const FitResult& fit, const Dataset& data, const Family& family);

/// (1/n) sum {mu_hat (eta_hat - eta) - b(eta_hat) + b(eta)}, binomial totals
/// absorbed into b.
double kl_divergence(const Family& family, const Eigen::VectorXd& eta_hat,
                     const Eigen::VectorXd& eta, const Eigen::VectorXd& totals = {});

inline constexpr double kDefaultRhoThreshold = 0.03;

struct ProjectionOptions {
  double threshold = kDefaultRhoThreshold;
  int max_iter = 50;
  int max_halvings = 30;
  double grad_tol = 1e-10;
};

struct ProjectionReport {
  std::vector<std::string> retained;
  std::vector<std::string> dropped;
  double kl_full_to_reduced = 0.0;
  double kl_full_to_constant = 0.0;
  double kl_reduced_to_constant = 0.0;
  double rho = 0.0;
  /// |KL(eta_hat, eta_C) - KL(eta_hat, eta~) - KL(eta~, eta_C)|
  double decomposition_residual = 0.0;
  double threshold = kDefaultRhoThreshold;
  bool converged = false;
  int iterations = 0;
  Eigen::VectorXd eta_reduced;
  Eigen::VectorXd eta_constant;

  /// rho above the threshold: the dropped terms carry structure.
  bool exceeds_threshold() const { return converged && rho > threshold; }
};

/// Kullback-Leibler projection of a fitted eta onto the span of the retained
/// terms' null-space columns and per-term kernel columns at the same anchors.
/// A fitted random effect is held fixed as an offset in every projection.
/// Throws ConfigError for unknown term names.
ProjectionReport kl_project(const FitResult& fit, const Design& design, const Dataset& data,
                            const Family& family, const std::vector<std::string>& dropped,
                            const ProjectionOptions& options = {});

struct IsoformFit {
  Eigen::VectorXd theta;
  double loglik = 0.0;
  double projected_gradient = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> loglik_trace;
  /// Groups of identical isoform columns shared equally (each group > 1).
  std::vector<std::vector<int>> merged;
};

/// Poisson MLE of isoform abundances: z_i ~ Poisson(l_i sum_j C_ij theta_j),
/// theta >= 0. Multiplicative EM updates followed by projected Newton until
/// the KKT residual is below `tol`.
IsoformFit isoform_mle(const Eigen::VectorXd& lengths, const Eigen::VectorXd& counts,
                       const Eigen::MatrixXd& indicator, double tol = 1e-8, int max_iter = 10000);

double isoform_loglik(const Eigen::VectorXd& lengths, const Eigen::VectorXd& counts,
                      const Eigen::MatrixXd& indicator, const Eigen::VectorXd& theta);

}  // namespace abss
