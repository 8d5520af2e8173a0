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

#include "abss/family.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "abss/error.hpp"

namespace abss {
namespace {

// log(1 + e^x) without overflow.
double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// y log(y / m) with the 0 log 0 = 0 convention; log_m is log(m).
double xlogx_ratio(double y, double log_m) {
  if (y <= 0.0) return 0.0;
  return y * (std::log(y) - log_m);
}

void require_negbin_domain(double eta) {
  if (!(eta < 0.0)) {
    throw DomainError("negative binomial requires eta < 0, got " + std::to_string(eta));
  }
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw NumericalError(std::string("non-finite ") + what);
  }
}

}  // namespace

std::string Family::name() const {
  switch (kind) {
    case FamilyKind::Gaussian: return "gaussian";
    case FamilyKind::Poisson: return "poisson";
    case FamilyKind::Binomial: return "binomial";
    case FamilyKind::NegativeBinomial: return "negbin";
  }
  return "unknown";
}

Family parse_family(std::string_view name, double nb_shape) {
  if (name == "gaussian") return Family::gaussian();
  if (name == "poisson") return Family::poisson();
  if (name == "binomial") return Family::binomial();
  if (name == "negbin" || name == "negative_binomial") {
    if (!(nb_shape > 0.0)) throw ConfigError("negative binomial shape must be positive");
    return Family::negative_binomial(nb_shape);
  }
  throw ConfigError("unknown family '" + std::string(name) +
                    "' (expected gaussian, poisson, binomial, negbin)");
}

double cumulant(const Family& family, double eta, double total) {
  switch (family.kind) {
    case FamilyKind::Gaussian: return 0.5 * eta * eta;
    case FamilyKind::Poisson: return std::exp(eta);
    case FamilyKind::Binomial: return total * softplus(eta);
    case FamilyKind::NegativeBinomial:
      require_negbin_domain(eta);
      return -family.nb_shape * std::log(-std::expm1(eta));
  }
  return 0.0;
}

MeanWeight mean_and_weight(const Family& family, double eta, double total) {
  constexpr double tiny = std::numeric_limits<double>::min();
  MeanWeight out{0.0, 1.0};
  switch (family.kind) {
    case FamilyKind::Gaussian:
      out = {eta, 1.0};
      break;
    case FamilyKind::Poisson: {
      const double mu = std::exp(eta);
      out = {mu, std::max(mu, tiny)};
      break;
    }
    case FamilyKind::Binomial: {
      // p and 1 - p from the tail that does not cancel.
      const double e = std::exp(-std::abs(eta));
      const double p_small = e / (1.0 + e);
      const double p = eta >= 0.0 ? 1.0 - p_small : p_small;
      out = {total * p, std::max(total * p_small * (1.0 - p_small), tiny)};
      break;
    }
    case FamilyKind::NegativeBinomial: {
      require_negbin_domain(eta);
      const double e = std::exp(eta);
      const double q = -std::expm1(eta);
      const double r = family.nb_shape;
      out = {r * e / q, std::max(r * e / (q * q), tiny)};
      break;
    }
  }
  require_finite(out.mu, "mean");
  require_finite(out.w, "variance weight");
  return out;
}

WorkingResponse working_response(const Family& family, double eta, double y, double total) {
  const auto [mu, w] = mean_and_weight(family, eta, total);
  if (w < 1e-12) {
    throw NumericalError("degenerate working weight " + std::to_string(w) + " for " +
                         family.name());
  }
  return {eta - (mu - y) / w, w};
}

double neg_loglik(const Family& family, double eta, double y, double total) {
  return -y * eta + cumulant(family, eta, total);
}

double unit_deviance(const Family& family, double eta, double y, double total) {
  switch (family.kind) {
    case FamilyKind::Gaussian: return (y - eta) * (y - eta);
    case FamilyKind::Poisson: {
      const double mu = std::exp(eta);
      return 2.0 * (xlogx_ratio(y, eta) - (y - mu));
    }
    case FamilyKind::Binomial: {
      const double log_n = std::log(total);
      const double log_mu = log_n - softplus(-eta);
      const double log_rest = log_n - softplus(eta);
      return 2.0 * (xlogx_ratio(y, log_mu) + xlogx_ratio(total - y, log_rest));
    }
    case FamilyKind::NegativeBinomial: {
      require_negbin_domain(eta);
      const double r = family.nb_shape;
      const double log_q = std::log(-std::expm1(eta));
      const double log_mu = std::log(r) + eta - log_q;
      const double log_mu_r = std::log(r) - log_q;
      return 2.0 * (xlogx_ratio(y, log_mu) - xlogx_ratio(y + r, log_mu_r));
    }
  }
  return 0.0;
}

double deviance(const Family& family, const Eigen::VectorXd& etas, const Eigen::VectorXd& y,
                const Eigen::VectorXd& totals) {
  if (etas.size() != y.size() || (totals.size() != 0 && totals.size() != y.size())) {
    throw ConfigError("deviance: length mismatch");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double n_i = totals.size() ? totals[i] : 1.0;
    sum += unit_deviance(family, etas[i], y[i], n_i);
  }
  return sum;
}

double slicing_statistic(const Family& family, double y, double total) {
  if (family.kind == FamilyKind::Binomial) return y / total;
  return y;
}

double natural_parameter(const Family& family, double eta) {
  switch (family.kind) {
    case FamilyKind::Gaussian: return eta;
    case FamilyKind::Poisson: return std::exp(eta);
    case FamilyKind::Binomial: return 1.0 / (1.0 + std::exp(-eta));
    case FamilyKind::NegativeBinomial: return -std::expm1(eta);  // p = 1 - e^eta
  }
  return eta;
}

double clamp_eta(const Family& family, double eta) {
  if (family.kind == FamilyKind::NegativeBinomial && eta > kNegBinEtaMax) return kNegBinEtaMax;
  return eta;
}

bool admissible(const Family& family, double eta) {
  if (!std::isfinite(eta)) return false;
  return family.kind != FamilyKind::NegativeBinomial || eta < 0.0;
}

double constant_mle(const Family& family, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& totals) {
  const double n = static_cast<double>(y.size());
  if (n == 0) return 0.0;
  const double ybar = y.sum() / n;
  switch (family.kind) {
    case FamilyKind::Gaussian: return ybar;
    case FamilyKind::Poisson: return std::log(std::max(ybar, 1e-8));
    case FamilyKind::Binomial: {
      const double trials = totals.size() ? totals.sum() : n;
      double p = y.sum() / trials;
      p = std::clamp(p, 1e-8, 1.0 - 1e-8);
      return std::log(p / (1.0 - p));
    }
    case FamilyKind::NegativeBinomial: {
      const double m = std::max(ybar, 1e-8);
      return std::log(m / (m + family.nb_shape));
    }
  }
  return 0.0;
}

void validate_response(const Family& family, double y, double total) {
  auto is_count = [](double v) { return v >= 0.0 && std::floor(v) == v; };
  switch (family.kind) {
    case FamilyKind::Gaussian:
      if (!std::isfinite(y)) throw DataFormatError("gaussian response must be finite");
      break;
    case FamilyKind::Poisson:
    case FamilyKind::NegativeBinomial:
      if (!is_count(y)) {
        throw DataFormatError(family.name() + " response must be a nonnegative integer, got " +
                              std::to_string(y));
      }
      break;
    case FamilyKind::Binomial:
      if (!(total >= 1.0) || std::floor(total) != total) {
        throw DataFormatError("binomial total must be a positive integer");
      }
      if (!is_count(y) || y > total) {
        throw DataFormatError("binomial response must satisfy 0 <= y <= total");
      }
      break;
  }
}

}  // namespace abss
