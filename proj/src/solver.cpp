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

#include "abss/solver.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

namespace abss {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// The c block is solved in Cholesky coordinates of Q: with P^T Q P = L L^T
// and gamma = L^T P^T c, c^T Q c = |gamma|^2 and R c = F gamma for
// F = R P [L11^{-T}; 0]. Directions with Q c = 0 give R c = 0, so nothing is
// lost, and the normal equations no longer square the conditioning of Q.
struct Reduced {
  Eigen::MatrixXd x;       // [S, F, Z]
  Eigen::MatrixXd to_c;    // n* x r
  Eigen::MatrixXd from_c;  // r x n*
  Eigen::Index m = 0, r = 0, qd = 0;

  Eigen::Index cols() const { return m + r + qd; }
};

Reduced reduce(const Eigen::MatrixXd& s, const Eigen::MatrixXd& r, const Eigen::MatrixXd& q,
               const Eigen::MatrixXd& z) {
  Reduced out;
  out.m = s.cols();
  out.qd = z.cols();
  const Eigen::Index ns = q.rows();
  out.to_c = Eigen::MatrixXd::Zero(ns, 0);
  out.from_c = Eigen::MatrixXd::Zero(0, ns);
  if (ns > 0) {
    const PivotedCholesky chol(q);
    const Eigen::Index rank = chol.rank();
    const auto& perm = chol.permutation();
    out.r = rank;
    out.to_c = Eigen::MatrixXd::Zero(ns, rank);
    out.from_c = Eigen::MatrixXd::Zero(rank, ns);
    if (rank > 0) {
      const Eigen::MatrixXd linv_t = chol.l11()
                                         .triangularView<Eigen::Lower>()
                                         .transpose()
                                         .solve(Eigen::MatrixXd::Identity(rank, rank));
      for (Eigen::Index k = 0; k < ns; ++k) {
        const auto orig = perm[static_cast<std::size_t>(k)];
        if (k < rank) {
          out.to_c.row(orig) = linv_t.row(k);
          out.from_c.col(orig) = chol.l11().row(k).transpose();
        } else {
          out.from_c.col(orig) = chol.l21().row(k - rank).transpose();
        }
      }
    }
  }
  out.x.resize(s.rows(), out.cols());
  out.x << s, r * out.to_c, z;
  return out;
}

// Diagonal penalty of the reduced system: 0 on d, n lambda on gamma,
// 1 / theta_b on b.
Eigen::MatrixXd penalty_matrix(const Reduced& red, double n_lambda, double theta_b) {
  Eigen::MatrixXd pen = Eigen::MatrixXd::Zero(red.cols(), red.cols());
  pen.diagonal().segment(red.m, red.r).setConstant(n_lambda);
  if (red.qd > 0) pen.diagonal().tail(red.qd).setConstant(1.0 / theta_b);
  return pen;
}

// X^T diag(w) X.
Eigen::MatrixXd weighted_gram(const Eigen::MatrixXd& x, const Eigen::VectorXd& w) {
  const Eigen::MatrixXd xw = x.array().colwise() * w.array().sqrt();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(x.cols(), x.cols());
  g.selfadjointView<Eigen::Lower>().rankUpdate(xw.transpose());
  return g.selfadjointView<Eigen::Lower>();
}

Eigen::MatrixXd plain_gram(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(x.cols(), x.cols());
  g.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
  return g.selfadjointView<Eigen::Lower>();
}

// Pivoted Cholesky of S M S with S = diag(M)^{-1/2}. A large ridge on a few
// coordinates (small theta_b) would otherwise set the rank tolerance for all.
class ScaledCholesky {
 public:
  explicit ScaledCholesky(const Eigen::MatrixXd& m) : scale_(m.rows()) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      scale_[i] = m(i, i) > 0.0 ? 1.0 / std::sqrt(m(i, i)) : 1.0;
    }
    chol_ = PivotedCholesky(scale_.asDiagonal() * m * scale_.asDiagonal());
  }
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    return scale_.asDiagonal() * chol_.solve(scale_.asDiagonal() * b);
  }
  /// tr(M^- C) for C with range inside range(M).
  double trace_of_inverse_times(const Eigen::MatrixXd& c) const {
    return chol_.trace_of_inverse_times(scale_.asDiagonal() * c * scale_.asDiagonal());
  }
  Eigen::Index rank() const { return chol_.rank(); }

 private:
  Eigen::VectorXd scale_;
  PivotedCholesky chol_;
};

struct Split {
  Eigen::VectorXd d, gamma, b;
};

Split split(const Eigen::VectorXd& beta, const Reduced& red) {
  return {beta.head(red.m), beta.segment(red.m, red.r), beta.tail(red.qd)};
}

double mean_loglik_part(const Family& family, const Dataset& data, const Eigen::VectorXd& eta) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (!admissible(family, eta[i])) return kInf;
    sum += neg_loglik(family, eta[i], data.y[i], data.total_at(i));
  }
  return sum / static_cast<double>(data.n());
}

}  // namespace

Assembled Design::combine(const std::vector<double>& thetas) const {
  if (thetas.size() != spec.terms.size()) throw ConfigError("one theta per term required");
  Assembled a;
  a.s = s;
  a.r = Eigen::MatrixXd::Zero(n(), nstar());
  a.q = Eigen::MatrixXd::Zero(nstar(), nstar());
  for (std::size_t k = 0; k < penalized.size(); ++k) {
    const double th = thetas[penalized[k]];
    if (!(th >= 0.0)) throw ConfigError("theta must be nonnegative");
    if (th == 0.0) continue;
    a.r += th * r_term[k];
    a.q += th * q_term[k];
  }
  return a;
}

Design build_design(const ModelSpec& spec, const Eigen::MatrixXd& points,
                    const EffectiveBasis& basis, Eigen::MatrixXd random_effect) {
  spec.validate();
  check_points(spec, points);
  for (std::size_t j : basis.anchors) {
    if (j >= static_cast<std::size_t>(points.rows())) {
      throw ConfigError("anchor index " + std::to_string(j) + " outside the dataset");
    }
  }
  if (random_effect.size() != 0 && random_effect.rows() != points.rows()) {
    throw ConfigError("random-effect columns must have one row per observation");
  }
  Design d;
  d.spec = spec;
  d.null_basis = build_null_basis(spec);
  d.points = points;
  d.anchors = anchor_points(basis, points);
  d.s = null_matrix(spec, d.null_basis, points);
  d.penalized = spec.penalized_terms();
  for (std::size_t t : d.penalized) {
    d.r_term.push_back(term_kernel_matrix(spec, spec.terms[t], points, d.anchors));
    d.q_term.push_back(term_kernel_matrix(spec, spec.terms[t], d.anchors, d.anchors));
  }
  d.z = random_effect.size() ? std::move(random_effect) : Eigen::MatrixXd(points.rows(), 0);
  return d;
}

Assembled assemble(const ModelSpec& spec, const Eigen::MatrixXd& points,
                   const EffectiveBasis& basis, const std::vector<double>& thetas) {
  for (std::size_t t = 0; t < spec.terms.size(); ++t) {
    if (spec.terms[t].penalized() && !(thetas.at(t) > 0.0)) {
      throw ConfigError("theta must be positive for term '" + spec.terms[t].name + "'");
    }
  }
  return build_design(spec, points, basis).combine(thetas);
}

PwlsSolution pwls_solve(const Eigen::MatrixXd& s, const Eigen::MatrixXd& r,
                        const Eigen::MatrixXd& q, const Eigen::VectorXd& w,
                        const Eigen::VectorXd& y_tilde, Eigen::Index n, double lambda,
                        const Eigen::MatrixXd& z, double theta_b) {
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  if ((w.array() <= 0.0).any()) throw ConfigError("working weights must be floored above zero");
  const Eigen::MatrixXd zz = z.size() ? z : Eigen::MatrixXd(s.rows(), 0);
  const Reduced red = reduce(s, r, q, zz);
  const Eigen::MatrixXd m = weighted_gram(red.x, w) + penalty_matrix(red, n * lambda, theta_b);
  const Eigen::VectorXd rhs = red.x.transpose() * (w.array() * y_tilde.array()).matrix();
  const ScaledCholesky chol(m);
  const Eigen::VectorXd beta = chol.solve(rhs);

  PwlsSolution out;
  const Split parts = split(beta, red);
  out.d = parts.d;
  out.c = red.to_c * parts.gamma;
  out.b = parts.b;
  const double rhs_norm = rhs.norm();
  out.relative_residual = (m * beta - rhs).norm() / (rhs_norm > 0 ? rhs_norm : 1.0);
  out.rank = chol.rank();
  out.rank_deficient = chol.rank() < red.cols() || red.r < q.rows();
  if (chol.rank() < red.cols() && red.cols() > s.rows()) {
    std::cerr << "warning: more coefficients than observations; minimum-norm solution\n";
  }
  return out;
}

Eigen::MatrixXd kernel_features(const Eigen::MatrixXd& r, const Eigen::MatrixXd& q) {
  return reduce(Eigen::MatrixXd(r.rows(), 0), r, q, Eigen::MatrixXd(r.rows(), 0)).x;
}

Traces smoothing_traces(const Eigen::MatrixXd& s, const Eigen::MatrixXd& r,
                        const Eigen::MatrixXd& q, const Eigen::VectorXd& w, Eigen::Index n,
                        double lambda, const Eigen::MatrixXd& z, double theta_b) {
  const Eigen::MatrixXd zz = z.size() ? z : Eigen::MatrixXd(s.rows(), 0);
  const Reduced red = reduce(s, r, q, zz);
  const Eigen::MatrixXd g = weighted_gram(red.x, w);
  const ScaledCholesky chol(g + penalty_matrix(red, n * lambda, theta_b));
  // tr(A_w) = tr(M^+ X^T W X); tr(A_w W^{-1}) = tr(M^+ X^T X).
  return {chol.trace_of_inverse_times(g), chol.trace_of_inverse_times(plain_gram(red.x))};
}

double penalized_likelihood(const Family& family, const Dataset& data,
                            const Eigen::VectorXd& eta, const Eigen::VectorXd& c,
                            const Eigen::MatrixXd& q, double lambda, const Eigen::VectorXd& b,
                            double theta_b) {
  const double fit = mean_loglik_part(family, data, eta);
  double pen = 0.5 * lambda * c.dot(q * c);
  if (b.size()) pen += b.squaredNorm() / (2.0 * static_cast<double>(data.n()) * theta_b);
  return fit + pen;
}

FitResult newton_fit(const Dataset& data, const Family& family, const Design& design,
                     double lambda, const std::vector<double>& thetas, double theta_b,
                     const NewtonOptions& options, const FitResult* warm) {
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  const Eigen::Index n = data.n();
  if (n != design.n()) throw ConfigError("dataset and design row counts differ");
  const Eigen::Index m = design.null_dim();
  const Eigen::Index ns = design.nstar();
  const Eigen::Index qd = design.re_dim();

  const Assembled a = design.combine(thetas);
  const Reduced red = reduce(a.s, a.r, a.q, design.z);
  const Eigen::MatrixXd& x = red.x;
  const Eigen::MatrixXd pen = penalty_matrix(red, static_cast<double>(n) * lambda, theta_b);
  const Eigen::Index p = x.cols();

  auto objective = [&](const Eigen::VectorXd& beta, const Eigen::VectorXd& eta) {
    const Split parts = split(beta, red);
    double pen_part = 0.5 * lambda * parts.gamma.squaredNorm();
    if (qd > 0) pen_part += parts.b.squaredNorm() / (2.0 * static_cast<double>(n) * theta_b);
    return mean_loglik_part(family, data, eta) + pen_part;
  };

  FitResult fit;
  fit.lambda = lambda;
  fit.thetas = thetas;
  fit.theta_b = theta_b;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta;
  double pl = kInf;
  if (warm && warm->d.size() == m && warm->c.size() == ns && warm->b.size() == qd) {
    beta << warm->d, red.from_c * warm->c, warm->b;
    eta = x * beta;
    pl = objective(beta, eta);
  }
  if (!std::isfinite(pl)) {
    // The constant function is the first null-space column.
    beta.setZero();
    beta[0] = constant_mle(family, data.y, data.total);
    eta = x * beta;
    pl = objective(beta, eta);
  }
  if (!std::isfinite(pl)) throw NumericalError("inadmissible starting point");

  const bool quadratic = family.kind == FamilyKind::Gaussian;
  Eigen::VectorXd w(n), ywork(n);
  auto working = [&](const Eigen::VectorXd& e) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ei = clamp_eta(family, e[i]);
      const auto mw = mean_and_weight(family, ei, data.total_at(i));
      w[i] = std::max(mw.w, options.weight_floor);
      ywork[i] = ei - (mw.mu - data.y[i]) / w[i];
    }
  };

  for (int iter = 0; iter < options.max_iter; ++iter) {
    working(eta);
    const Eigen::MatrixXd mat = weighted_gram(x, w) + pen;
    const Eigen::VectorXd rhs = x.transpose() * (w.array() * ywork.array()).matrix();
    const Eigen::VectorXd target = ScaledCholesky(mat).solve(rhs);
    const Eigen::VectorXd delta = target - beta;

    double step = 1.0;
    bool accepted = false;
    bool stalled = false;
    Eigen::VectorXd beta_try, eta_try;
    double pl_try = kInf;
    for (int h = 0; h <= options.max_halvings; ++h) {
      beta_try = beta + step * delta;
      eta_try = x * beta_try;
      pl_try = objective(beta_try, eta_try);
      if (pl_try <= pl) {
        accepted = true;
        break;
      }
      if (h == 0 && std::isfinite(pl_try) &&
          pl_try - pl <= options.rel_tol * std::max(1.0, std::abs(pl))) {
        // The full Newton step only moves within rounding: already converged.
        stalled = true;
        break;
      }
      step *= 0.5;
      ++fit.halvings;
    }
    if (stalled) {
      fit.converged = true;
      break;
    }
    if (!accepted) {
      if (family.kind == FamilyKind::NegativeBinomial && !std::isfinite(pl_try)) fit.clamped = true;
      break;
    }
    const double change = pl - pl_try;
    beta = beta_try;
    eta = eta_try;
    pl = pl_try;
    ++fit.newton_iterations;
    fit.objective_trace.push_back(pl);
    if (quadratic || change <= options.rel_tol * std::max(1.0, std::abs(pl))) {
      fit.converged = true;
      break;
    }
  }

  const Split parts = split(beta, red);
  fit.d = parts.d;
  fit.c = red.to_c * parts.gamma;
  fit.b = parts.b;
  fit.eta = eta;
  fit.penalized_likelihood = pl;
  fit.mu.resize(n);
  fit.w.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ei = clamp_eta(family, eta[i]);
    if (ei != eta[i]) fit.clamped = true;
    const auto mw = mean_and_weight(family, ei, data.total_at(i));
    fit.mu[i] = mw.mu;
    fit.w[i] = std::max(mw.w, options.weight_floor);
  }
  // Smoothing matrix at the converged weights.
  const Eigen::MatrixXd g = weighted_gram(x, fit.w);
  const ScaledCholesky chol(g + pen);
  fit.trace_aw = chol.trace_of_inverse_times(g);
  fit.trace_aw_winv = chol.trace_of_inverse_times(plain_gram(x));
  fit.deviance = deviance(family, fit.eta.unaryExpr([&](double e) { return clamp_eta(family, e); }),
                          data.y, data.total);
  fit.gacv = gacv(fit, data, family);
  return fit;
}

double gacv(const FitResult& fit, const Dataset& data, const Family& family) {
  const auto n = static_cast<double>(data.n());
  if (fit.trace_aw >= n - 1e-6) return kInf;
  double loglik = 0.0;
  double cross = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double e = clamp_eta(family, fit.eta[i]);
    loglik += data.y[i] * e - cumulant(family, e, data.total_at(i));
    cross += data.y[i] * (data.y[i] - fit.mu[i]);
  }
  return -loglik / n + fit.trace_aw_winv / (n - fit.trace_aw) * cross / n;
}

namespace {

// Maps search parameters to (lambda, thetas, theta_b).
struct Parameterization {
  std::vector<double> theta0;
  std::vector<std::size_t> free_terms;  // term indices whose theta is searched
  bool has_re = false;
  double theta_b0 = 1.0;

  std::size_t dims() const { return 1 + free_terms.size() + (has_re ? 1 : 0); }

  void unpack(const std::vector<double>& p, double& lambda, std::vector<double>& thetas,
              double& theta_b) const {
    lambda = std::pow(10.0, p[0]);
    thetas = theta0;
    for (std::size_t k = 0; k < free_terms.size(); ++k) {
      thetas[free_terms[k]] = theta0[free_terms[k]] * std::pow(10.0, p[1 + k]);
    }
    theta_b = has_re ? std::pow(10.0, p.back()) : theta_b0;
  }
};

class Search {
 public:
  Search(const Dataset& data, const Family& family, const Design& design,
         const SearchConfig& config, Parameterization param)
      : data_(data), family_(family), design_(design), config_(config), param_(std::move(param)) {}

  double operator()(const std::vector<double>& p) {
    double lambda, theta_b;
    std::vector<double> thetas;
    param_.unpack(p, lambda, thetas, theta_b);
    const FitResult* warm = have_last_ ? &last_ : nullptr;
    FitResult fit = newton_fit(data_, family_, design_, lambda, thetas, theta_b, config_.newton, warm);
    const double score = fit.converged ? fit.gacv : kInf;
    trajectory_.push_back({p, fit.converged ? fit.gacv : kInf, fit.converged});
    if (fit.converged) {
      last_ = fit;
      have_last_ = true;
    }
    if (better(fit, p)) {
      best_ = std::move(fit);
      best_params_ = p;
      have_best_ = true;
    } else if (!have_best_ && !have_fallback_) {
      fallback_ = fit;
      have_fallback_ = true;
    }
    return score;
  }

  bool have_best() const { return have_best_; }
  const std::vector<double>& best_params() const { return best_params_; }
  FitResult take_best() { return have_best_ ? std::move(best_) : std::move(fallback_); }
  std::vector<SearchStep>& trajectory() { return trajectory_; }

 private:
  // Lower GACV wins; near-ties go to the larger lambda (more smoothing).
  bool better(const FitResult& fit, const std::vector<double>& p) const {
    if (!fit.converged || !std::isfinite(fit.gacv)) return false;
    if (!have_best_) return true;
    const double tie = 1e-10 * std::max(1.0, std::abs(best_.gacv));
    if (fit.gacv < best_.gacv - tie) return true;
    if (fit.gacv <= best_.gacv + tie) return p[0] > best_params_[0];
    return false;
  }

  const Dataset& data_;
  const Family& family_;
  const Design& design_;
  const SearchConfig& config_;
  Parameterization param_;
  FitResult last_, best_, fallback_;
  bool have_last_ = false, have_best_ = false, have_fallback_ = false;
  std::vector<double> best_params_;
  std::vector<SearchStep> trajectory_;
};

// Golden-section search on [lo, hi] over coordinate 0 with the others fixed.
void golden(Search& f, std::vector<double> base, double lo, double hi, int evals) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  auto at = [&](double v) {
    base[0] = v;
    return f(base);
  };
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = at(c), fd = at(d);
  for (int k = 2; k < evals - 1; ++k) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = at(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = at(d);
    }
  }
  at(hi);
}

// Nelder-Mead within the box [lo, hi].
void nelder_mead(Search& f, const std::vector<double>& start, const std::vector<double>& step,
                 const std::vector<double>& lo, const std::vector<double>& hi, int evals) {
  const std::size_t k = start.size();
  auto clip = [&](std::vector<double> p) {
    for (std::size_t j = 0; j < k; ++j) p[j] = std::clamp(p[j], lo[j], hi[j]);
    return p;
  };
  std::vector<std::vector<double>> pts{clip(start)};
  for (std::size_t j = 0; j < k; ++j) {
    auto p = start;
    p[j] += (p[j] + step[j] > hi[j]) ? -step[j] : step[j];
    pts.push_back(clip(p));
  }
  std::vector<double> val;
  for (const auto& p : pts) val.push_back(f(p));
  int used = static_cast<int>(pts.size());

  std::vector<std::size_t> idx(k + 1);
  while (used < evals) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return val[a] < val[b]; });
    const std::size_t best = idx.front(), worst = idx.back(), second = idx[k - 1];
    if (std::isfinite(val[worst]) &&
        val[worst] - val[best] <= 1e-10 * std::max(1.0, std::abs(val[best]))) {
      double size = 0.0;
      for (const auto& p : pts) {
        for (std::size_t j = 0; j < k; ++j) size = std::max(size, std::abs(p[j] - pts[best][j]));
      }
      if (size < 1e-3) break;
    }
    std::vector<double> centroid(k, 0.0);
    for (std::size_t i = 0; i <= k; ++i) {
      if (i == worst) continue;
      for (std::size_t j = 0; j < k; ++j) centroid[j] += pts[i][j] / static_cast<double>(k);
    }
    auto along = [&](double t) {
      std::vector<double> p(k);
      for (std::size_t j = 0; j < k; ++j) p[j] = centroid[j] + t * (pts[worst][j] - centroid[j]);
      return clip(p);
    };
    const auto refl = along(-1.0);
    const double fr = f(refl);
    ++used;
    if (fr < val[best]) {
      const auto expd = along(-2.0);
      const double fe = f(expd);
      ++used;
      if (fe < fr) {
        pts[worst] = expd;
        val[worst] = fe;
      } else {
        pts[worst] = refl;
        val[worst] = fr;
      }
      continue;
    }
    if (fr < val[second]) {
      pts[worst] = refl;
      val[worst] = fr;
      continue;
    }
    const bool outside = fr < val[worst];
    const auto contr = along(outside ? -0.5 : 0.5);
    const double fcn = f(contr);
    ++used;
    if (fcn < std::min(fr, val[worst])) {
      pts[worst] = contr;
      val[worst] = fcn;
      continue;
    }
    for (std::size_t i = 0; i <= k && used < evals; ++i) {
      if (i == best) continue;
      for (std::size_t j = 0; j < k; ++j) pts[i][j] = pts[best][j] + 0.5 * (pts[i][j] - pts[best][j]);
      pts[i] = clip(pts[i]);
      val[i] = f(pts[i]);
      ++used;
    }
  }
}

}  // namespace

TuneResult tune(const Dataset& data, const Family& family, const Design& design,
                const SearchConfig& config) {
  if (!(config.log10_lambda_hi > config.log10_lambda_lo)) {
    throw ConfigError("empty lambda search range");
  }
  Parameterization param;
  param.theta0 = design.spec.thetas();
  if (config.normalize_thetas) {
    for (std::size_t k = 0; k < design.penalized.size(); ++k) {
      const double scale = design.q_term[k].diagonal().mean();
      if (scale > 0.0) param.theta0[design.penalized[k]] /= scale;
    }
  }
  if (config.tune_thetas && design.penalized.size() >= 2) {
    param.free_terms.assign(design.penalized.begin() + 1, design.penalized.end());
  }
  param.has_re = design.re_dim() > 0;
  const std::size_t k = param.dims();

  std::vector<double> lo(k), hi(k), step(k, 1.0), start(k, 0.0);
  lo[0] = config.log10_lambda_lo;
  hi[0] = config.log10_lambda_hi;
  for (std::size_t j = 1; j <= param.free_terms.size(); ++j) {
    lo[j] = -config.log10_theta_span;
    hi[j] = config.log10_theta_span;
  }
  if (param.has_re) {
    lo[k - 1] = config.log10_theta_b_lo;
    hi[k - 1] = config.log10_theta_b_hi;
    start[k - 1] = std::clamp(0.0, lo[k - 1], hi[k - 1]);
  }

  Search search(data, family, design, config, param);
  golden(search, start, lo[0], hi[0], config.golden_evals);
  if (k > 1) {
    std::vector<double> from = search.have_best() ? search.best_params() : start;
    for (int s = 0; s < config.simplex_starts; ++s) {
      std::vector<double> p = from;
      if (s > 0) {
        for (std::size_t j = 1; j < k; ++j) p[j] = std::clamp(p[j] + ((j + s) % 2 ? 1.0 : -1.0), lo[j], hi[j]);
      }
      nelder_mead(search, p, step, lo, hi, config.simplex_evals);
      if (search.have_best()) from = search.best_params();
    }
  }
  if (!search.have_best()) {
    throw TuneFailure("no candidate fit converged", search.trajectory());
  }
  TuneResult out;
  out.fit = search.take_best();
  out.trajectory = std::move(search.trajectory());
  return out;
}

Eigen::VectorXd predict_eta(const Design& design, const FitResult& fit,
                            const Eigen::MatrixXd& points, const Eigen::MatrixXd& z) {
  const Eigen::MatrixXd s = null_matrix(design.spec, design.null_basis, points);
  const Eigen::MatrixXd r = kernel_matrix(design.spec, points, design.anchors, fit.thetas);
  Eigen::VectorXd eta = s * fit.d + r * fit.c;
  if (fit.b.size() && z.size()) eta += z * fit.b;
  return eta;
}

Eigen::MatrixXd term_contributions(const Design& design, const FitResult& fit) {
  const Eigen::Index n = design.n();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(design.spec.terms.size()) + 1);
  for (std::size_t v = 0; v < design.null_basis.size(); ++v) {
    const Eigen::Index col = design.null_basis[v].term + 1;
    out.col(col) += design.s.col(static_cast<Eigen::Index>(v)) * fit.d[static_cast<Eigen::Index>(v)];
  }
  for (std::size_t k = 0; k < design.penalized.size(); ++k) {
    const std::size_t t = design.penalized[k];
    out.col(static_cast<Eigen::Index>(t) + 1) += fit.thetas[t] * (design.r_term[k] * fit.c);
  }
  return out;
}

}  // namespace abss
