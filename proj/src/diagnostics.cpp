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

#include "abss/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>

#include "abss/error.hpp"
#include "abss/linalg.hpp"

namespace abss {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double total_of(const Eigen::VectorXd& totals, Eigen::Index i) {
  return totals.size() ? totals[i] : 1.0;
}

Eigen::VectorXd clamped(const Family& family, const Eigen::VectorXd& eta) {
  return eta.unaryExpr([&](double e) { return clamp_eta(family, e); });
}

// (1/n) sum {-mu_hat eta + b(eta)}: the eta-dependent part of KL(eta_hat, eta).
double kl_objective(const Family& family, const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& eta,
                    const Eigen::VectorXd& totals) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (!admissible(family, eta[i])) return kInf;
    sum += -mu_hat[i] * eta[i] + cumulant(family, eta[i], total_of(totals, i));
  }
  return sum / static_cast<double>(eta.size());
}

struct Projection {
  Eigen::VectorXd eta;
  bool converged = false;
  int iterations = 0;
};

// Unpenalized Newton minimization of KL(eta_hat, offset + X beta). The
// iteration runs on an orthonormal basis of span(X), which must contain the
// constant; kernel columns are far too ill-conditioned for the raw Hessian.
Projection project(const Family& family, const Eigen::MatrixXd& x, const Eigen::VectorXd& offset,
                   const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& totals,
                   const ProjectionOptions& opt) {
  const Eigen::Index n = x.rows();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-12);
  const Eigen::Index rank = qr.rank();
  const Eigen::MatrixXd basis = qr.householderQ() * Eigen::MatrixXd::Identity(n, rank);

  double start = constant_mle(family, mu_hat, totals);
  if (family.kind == FamilyKind::NegativeBinomial && offset.size()) {
    start = std::min(start, -1e-3 - offset.maxCoeff());
  }
  Eigen::VectorXd alpha = basis.transpose() * Eigen::VectorXd::Constant(n, start);
  Eigen::VectorXd eta = offset + basis * alpha;
  double f = kl_objective(family, mu_hat, eta, totals);
  if (!std::isfinite(f)) throw NumericalError("KL projection: inadmissible starting point");

  const double gscale =
      1.0 + (basis.transpose() * mu_hat).cwiseAbs().maxCoeff() / static_cast<double>(n);
  Projection out;
  Eigen::VectorXd mu(n), w(n);
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto mw = mean_and_weight(family, eta[i], total_of(totals, i));
      mu[i] = mw.mu;
      w[i] = std::max(mw.w, 1e-300);
    }
    const Eigen::VectorXd grad = basis.transpose() * (mu - mu_hat) / static_cast<double>(n);
    if (grad.cwiseAbs().maxCoeff() <= opt.grad_tol * gscale) {
      out.converged = true;
      break;
    }
    const Eigen::MatrixXd bw = basis.array().colwise() * w.array().sqrt();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(rank, rank);
    h.selfadjointView<Eigen::Lower>().rankUpdate(bw.transpose(), 1.0 / static_cast<double>(n));
    h = h.selfadjointView<Eigen::Lower>();
    const Eigen::VectorXd delta = -PivotedCholesky(h).solve(grad);
    // Newton decrement: the predicted decrease of the objective.
    if (-grad.dot(delta) <= 1e-15 * std::max(1.0, std::abs(f))) {
      out.converged = true;
      break;
    }

    double step = 1.0;
    bool accepted = false;
    for (int k = 0; k <= opt.max_halvings; ++k) {
      const Eigen::VectorXd a_try = alpha + step * delta;
      const Eigen::VectorXd e_try = offset + basis * a_try;
      const double f_try = kl_objective(family, mu_hat, e_try, totals);
      if (f_try < f) {
        alpha = a_try;
        eta = e_try;
        f = f_try;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++out.iterations;
    if (!accepted) {
      // No descent left within rounding; accept if the gradient is small.
      out.converged = grad.cwiseAbs().maxCoeff() <= 1e3 * opt.grad_tol * gscale;
      break;
    }
  }
  out.eta = eta;
  return out;
}

}  // namespace

std::optional<double> quasi_r2(const FitResult& fit, const Dataset& data, const Family& family) {
  const double eta0 = constant_mle(family, data.y, data.total);
  const double d0 =
      deviance(family, Eigen::VectorXd::Constant(data.n(), eta0), data.y, data.total);
  if (!(d0 > 0.0)) return std::nullopt;
  return 1.0 - fit.deviance / d0;
}

double kl_divergence(const Family& family, const Eigen::VectorXd& eta_hat,
                     const Eigen::VectorXd& eta, const Eigen::VectorXd& totals) {
  if (eta_hat.size() != eta.size()) throw ConfigError("KL: eta vectors differ in length");
  if (eta.size() == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (!admissible(family, eta_hat[i]) || !admissible(family, eta[i])) {
      throw DomainError("KL: eta outside the family's domain");
    }
    const double t = total_of(totals, i);
    const double mu_hat = mean_and_weight(family, eta_hat[i], t).mu;
    sum += mu_hat * (eta_hat[i] - eta[i]) - cumulant(family, eta_hat[i], t) +
           cumulant(family, eta[i], t);
  }
  return sum / static_cast<double>(eta.size());
}

ProjectionReport kl_project(const FitResult& fit, const Design& design, const Dataset& data,
                            const Family& family, const std::vector<std::string>& dropped,
                            const ProjectionOptions& options) {
  const ModelSpec& spec = design.spec;
  std::vector<bool> keep(spec.terms.size(), true);
  for (const auto& name : dropped) {
    const int t = spec.find_term(name);
    if (t < 0) throw ConfigError("unknown term '" + name + "' in drop set");
    keep[static_cast<std::size_t>(t)] = false;
  }
  ProjectionReport rep;
  rep.threshold = options.threshold;
  for (std::size_t t = 0; t < spec.terms.size(); ++t) {
    (keep[t] ? rep.retained : rep.dropped).push_back(spec.terms[t].name);
  }

  const Eigen::Index n = data.n();
  const Eigen::VectorXd totals = data.totals_or_ones();
  const Eigen::VectorXd eta_hat = clamped(family, fit.eta);
  Eigen::VectorXd mu_hat(n);
  for (Eigen::Index i = 0; i < n; ++i) mu_hat[i] = mean_and_weight(family, eta_hat[i], totals[i]).mu;
  const Eigen::VectorXd offset =
      design.re_dim() > 0 && fit.b.size() == design.re_dim() ? Eigen::VectorXd(design.z * fit.b)
                                                              : Eigen::VectorXd::Zero(n);

  // Constant column plus null functions and kernel features of kept terms.
  std::vector<Eigen::MatrixXd> blocks;
  Eigen::MatrixXd constant(n, 1);
  constant.col(0) = design.s.col(0);
  std::vector<Eigen::Index> null_cols;
  for (std::size_t j = 1; j < design.null_basis.size(); ++j) {
    const int owner = design.null_basis[j].term;
    if (owner < 0 || keep[static_cast<std::size_t>(owner)]) null_cols.push_back(static_cast<Eigen::Index>(j));
  }
  Eigen::Index width = 1 + static_cast<Eigen::Index>(null_cols.size());
  for (std::size_t k = 0; k < design.penalized.size(); ++k) {
    if (!keep[design.penalized[k]]) continue;
    blocks.push_back(kernel_features(design.r_term[k], design.q_term[k]));
    width += blocks.back().cols();
  }
  Eigen::MatrixXd x(n, width);
  x.col(0) = design.s.col(0);
  Eigen::Index col = 1;
  for (Eigen::Index j : null_cols) x.col(col++) = design.s.col(j);
  for (const auto& b : blocks) {
    x.middleCols(col, b.cols()) = b;
    col += b.cols();
  }

  const Projection pc = project(family, constant, offset, mu_hat, totals, options);
  rep.eta_constant = pc.eta;
  bool converged = pc.converged;
  if (rep.dropped.empty()) {
    rep.eta_reduced = eta_hat;
  } else if (rep.retained.empty()) {
    rep.eta_reduced = pc.eta;
  } else {
    const Projection pr = project(family, x, offset, mu_hat, totals, options);
    rep.eta_reduced = pr.eta;
    rep.iterations = pr.iterations;
    converged = converged && pr.converged;
  }
  rep.converged = converged;

  rep.kl_full_to_reduced =
      rep.dropped.empty() ? 0.0 : std::max(0.0, kl_divergence(family, eta_hat, rep.eta_reduced, totals));
  rep.kl_full_to_constant = std::max(0.0, kl_divergence(family, eta_hat, rep.eta_constant, totals));
  rep.kl_reduced_to_constant =
      rep.retained.empty() ? 0.0
                           : std::max(0.0, kl_divergence(family, rep.eta_reduced, rep.eta_constant, totals));
  if (rep.retained.empty()) rep.kl_full_to_reduced = rep.kl_full_to_constant;
  rep.decomposition_residual = std::abs(rep.kl_full_to_constant - rep.kl_full_to_reduced -
                                        rep.kl_reduced_to_constant);
  if (rep.kl_full_to_constant > 0.0) {
    rep.rho = rep.kl_full_to_reduced / rep.kl_full_to_constant;
  } else {
    rep.rho = rep.retained.empty() && !rep.dropped.empty() ? 1.0 : 0.0;
  }
  if (!rep.converged) std::cerr << "warning: KL projection did not converge\n";
  return rep;
}

double isoform_loglik(const Eigen::VectorXd& lengths, const Eigen::VectorXd& counts,
                      const Eigen::MatrixXd& indicator, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd lambda = lengths.cwiseProduct(indicator * theta);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (counts[i] > 0) {
      if (!(lambda[i] > 0.0)) return -kInf;
      ll += counts[i] * std::log(lambda[i]);
    }
    ll -= lambda[i];
  }
  return ll;
}

namespace {

// KKT residual of max sum z log(A theta) - A theta subject to theta >= 0.
double kkt_residual(const Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
  double r = 0.0;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    r = std::max(r, theta[j] > 0.0 ? std::abs(grad[j]) : std::max(grad[j], 0.0));
  }
  return r;
}

IsoformFit isoform_distinct(const Eigen::VectorXd& lengths, const Eigen::VectorXd& counts,
                            const Eigen::MatrixXd& c, double tol, int max_iter) {
  const Eigen::MatrixXd a = lengths.asDiagonal() * c;
  const Eigen::Index k = c.cols();
  const Eigen::VectorXd col_mass = a.colwise().sum().transpose();
  IsoformFit out;
  const double total = counts.sum();
  if (total == 0.0) {
    out.theta = Eigen::VectorXd::Zero(k);
    out.converged = true;
    out.loglik = 0.0;
    out.loglik_trace = {0.0};
    return out;
  }
  if (k == 1) {
    out.theta = Eigen::VectorXd::Constant(1, total / col_mass[0]);
    out.loglik = isoform_loglik(lengths, counts, c, out.theta);
    out.loglik_trace = {out.loglik};
    out.converged = true;
    return out;
  }

  Eigen::VectorXd theta = Eigen::VectorXd::Constant(k, total / col_mass.sum());
  double ll = isoform_loglik(lengths, counts, c, theta);
  out.loglik_trace.push_back(ll);
  auto gradient = [&](const Eigen::VectorXd& th) {
    const Eigen::VectorXd lam = a * th;
    Eigen::VectorXd ratio(lam.size());
    for (Eigen::Index i = 0; i < lam.size(); ++i) ratio[i] = counts[i] > 0 ? counts[i] / lam[i] : 0.0;
    return Eigen::VectorXd(a.transpose() * ratio - col_mass);
  };

  int iter = 0;
  // EM warm-up: theta_j <- theta_j sum_i z_i a_ij / lambda_i / sum_i a_ij.
  for (; iter < std::min(max_iter, 200); ++iter) {
    const Eigen::VectorXd lam = a * theta;
    Eigen::VectorXd ratio(lam.size());
    for (Eigen::Index i = 0; i < lam.size(); ++i) ratio[i] = counts[i] > 0 ? counts[i] / lam[i] : 0.0;
    theta = theta.cwiseProduct(a.transpose() * ratio).cwiseQuotient(col_mass);
    const double next = isoform_loglik(lengths, counts, c, theta);
    out.loglik_trace.push_back(next);
    const bool small = next - ll <= 1e-13 * std::max(1.0, std::abs(ll));
    ll = next;
    if (small) break;
  }

  // Projected Newton on the free set.
  for (; iter < max_iter; ++iter) {
    const Eigen::VectorXd g = gradient(theta);
    if (kkt_residual(theta, g) <= tol) {
      out.converged = true;
      break;
    }
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (theta[j] > 0.0 || g[j] > 0.0) free.push_back(j);
    }
    const Eigen::VectorXd lam = a * theta;
    const auto f = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd neg_h = Eigen::MatrixXd::Zero(f, f);
    Eigen::VectorXd gf(f);
    for (Eigen::Index p = 0; p < f; ++p) {
      gf[p] = g[free[static_cast<std::size_t>(p)]];
      for (Eigen::Index q = 0; q < f; ++q) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < lam.size(); ++i) {
          if (counts[i] > 0) {
            s += counts[i] * a(i, free[static_cast<std::size_t>(p)]) *
                 a(i, free[static_cast<std::size_t>(q)]) / (lam[i] * lam[i]);
          }
        }
        neg_h(p, q) = s;
      }
    }
    const PivotedCholesky chol(neg_h, 1e-12);
    Eigen::VectorXd dir_f = chol.solve(gf);
    if (!dir_f.allFinite() || dir_f.dot(gf) <= 0.0) dir_f = gf;
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(k);
    for (Eigen::Index p = 0; p < f; ++p) dir[free[static_cast<std::size_t>(p)]] = dir_f[p];

    double step = 1.0;
    bool accepted = false;
    for (int h = 0; h < 60; ++h) {
      const Eigen::VectorXd cand = (theta + step * dir).cwiseMax(0.0);
      const double next = isoform_loglik(lengths, counts, c, cand);
      if (next >= ll) {
        theta = cand;
        ll = next;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    out.loglik_trace.push_back(ll);
    if (!accepted) break;
  }
  out.theta = theta;
  out.loglik = ll;
  out.projected_gradient = kkt_residual(theta, gradient(theta));
  out.converged = out.converged || out.projected_gradient <= tol;
  out.iterations = iter;
  return out;
}

}  // namespace

IsoformFit isoform_mle(const Eigen::VectorXd& lengths, const Eigen::VectorXd& counts,
                       const Eigen::MatrixXd& indicator, double tol, int max_iter) {
  const Eigen::Index exons = indicator.rows();
  if (lengths.size() != exons || counts.size() != exons) {
    throw ConfigError("isoform MLE: one length and count per exon required");
  }
  if ((lengths.array() <= 0.0).any()) throw ConfigError("exon lengths must be positive");
  for (Eigen::Index i = 0; i < exons; ++i) {
    if (counts[i] < 0.0 || std::floor(counts[i]) != counts[i]) {
      throw DomainError("exon counts must be nonnegative integers");
    }
  }
  for (Eigen::Index j = 0; j < indicator.cols(); ++j) {
    if (indicator.col(j).isZero()) throw ConfigError("isoform " + std::to_string(j) + " covers no exon");
  }

  // Identical columns are not identifiable; fit one and share it equally.
  std::vector<int> rep_of(static_cast<std::size_t>(indicator.cols()), -1);
  std::vector<std::vector<int>> groups;
  for (Eigen::Index j = 0; j < indicator.cols(); ++j) {
    if (rep_of[static_cast<std::size_t>(j)] >= 0) continue;
    std::vector<int> g{static_cast<int>(j)};
    rep_of[static_cast<std::size_t>(j)] = static_cast<int>(groups.size());
    for (Eigen::Index l = j + 1; l < indicator.cols(); ++l) {
      if (rep_of[static_cast<std::size_t>(l)] < 0 && indicator.col(l) == indicator.col(j)) {
        rep_of[static_cast<std::size_t>(l)] = static_cast<int>(groups.size());
        g.push_back(static_cast<int>(l));
      }
    }
    groups.push_back(std::move(g));
  }
  Eigen::MatrixXd distinct(exons, static_cast<Eigen::Index>(groups.size()));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    distinct.col(static_cast<Eigen::Index>(g)) = indicator.col(groups[g].front());
  }
  IsoformFit fit = isoform_distinct(lengths, counts, distinct, tol, max_iter);
  Eigen::VectorXd theta(indicator.cols());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (int j : groups[g]) {
      theta[j] = fit.theta[static_cast<Eigen::Index>(g)] / static_cast<double>(groups[g].size());
    }
    if (groups[g].size() > 1) fit.merged.push_back(groups[g]);
  }
  if (!fit.merged.empty()) {
    std::cerr << "warning: identical isoform columns; abundance shared equally\n";
  }
  fit.theta = theta;
  return fit;
}

}  // namespace abss
