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

#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace abss {

enum class FamilyKind { Gaussian, Poisson, Binomial, NegativeBinomial };

/// One exponential family with canonical link and dispersion fixed at 1.
///
/// Binomial totals travel with the observations, not with the family; the
/// negative binomial target-success count is a fixed shape supplied by the
/// caller. Canonical parameters: Poisson log(mean), Binomial logit(p) with
/// b(eta) = N log(1 + e^eta), negative binomial log(1 - p) (p the success
/// probability, y the failures before the r-th success) with
/// b(eta) = -r log(1 - e^eta) on eta < 0.
struct Family {
  FamilyKind kind = FamilyKind::Gaussian;
  double nb_shape = 3.0;

  static Family gaussian() { return {FamilyKind::Gaussian, 0.0}; }
  static Family poisson() { return {FamilyKind::Poisson, 0.0}; }
  static Family binomial() { return {FamilyKind::Binomial, 0.0}; }
  static Family negative_binomial(double shape) {
    return {FamilyKind::NegativeBinomial, shape};
  }

  std::string name() const;
  bool operator==(const Family&) const = default;
};

/// Parses "gaussian", "poisson", "binomial" or "negbin" (alias
/// "negative_binomial"). The shape is only used for the negative binomial.
Family parse_family(std::string_view name, double nb_shape = 3.0);

/// Upper end of the negative binomial domain used when clamping.
inline constexpr double kNegBinEtaMax = -1e-8;

struct MeanWeight {
  double mu;
  double w;
};

struct WorkingResponse {
  double y_tilde;
  double w;
};

/// b(eta). `total` is the binomial N and is ignored by other families.
double cumulant(const Family& family, double eta, double total = 1.0);

/// (b'(eta), b''(eta)).
MeanWeight mean_and_weight(const Family& family, double eta, double total = 1.0);

/// Newton linearization: y~ = eta - (b'(eta) - y) / b''(eta).
WorkingResponse working_response(const Family& family, double eta, double y,
                                 double total = 1.0);

/// Negative log-likelihood contribution l(eta; y) = -y eta + b(eta).
double neg_loglik(const Family& family, double eta, double y, double total = 1.0);

/// Deviance contribution of one observation, 0 log 0 = 0 at boundary counts.
double unit_deviance(const Family& family, double eta, double y, double total = 1.0);

/// Total deviance. `totals` may be empty (all ones).
double deviance(const Family& family, const Eigen::VectorXd& etas,
                const Eigen::VectorXd& y, const Eigen::VectorXd& totals);

/// Statistic the response slicer bins on: y/N for the binomial, y otherwise.
double slicing_statistic(const Family& family, double y, double total = 1.0);

/// Per-trial parameter the simulation MSE is measured on: success probability
/// for Binomial and NegativeBinomial, mean for Poisson, eta for Gaussian.
double natural_parameter(const Family& family, double eta);

/// Maps eta into the admissible domain (only the negative binomial clamps).
double clamp_eta(const Family& family, double eta);

/// Whether eta is admissible for the family.
bool admissible(const Family& family, double eta);

/// MLE of a constant canonical parameter, clamped away from the boundary
/// when the data sit on it (all zeros, all successes).
double constant_mle(const Family& family, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& totals);

/// Checks observation support (nonnegative integer counts, 0 <= y <= N).
void validate_response(const Family& family, double y, double total);

}  // namespace abss
