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

#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "abss/basis_select.hpp"
#include "abss/error.hpp"
#include "abss/solver.hpp"

using namespace abss;

namespace {

constexpr double kPi = 3.14159265358979323846;

ModelSpec spec_1d() { return make_anova_spec({Covariate{"x", false, 0}}, 1); }

Dataset gaussian_1d(int n, std::uint64_t seed, double noise = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> e(0, noise);
  Dataset d;
  d.x.resize(n, 1);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    d.x(i, 0) = u(rng);
    d.y[i] = std::sin(2 * kPi * d.x(i, 0)) + e(rng);
  }
  return d;
}

Dataset poisson_1d(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Dataset d;
  d.x.resize(n, 1);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    d.x(i, 0) = u(rng);
    std::poisson_distribution<int> p(std::exp(1.0 + std::sin(2 * kPi * d.x(i, 0))));
    d.y[i] = p(rng);
  }
  return d;
}

EffectiveBasis all_points(std::size_t n) {
  EffectiveBasis b;
  b.method = "uniform";
  b.anchors.resize(n);
  std::iota(b.anchors.begin(), b.anchors.end(), std::size_t{0});
  b.slice_id.assign(n, 0);
  b.per_slice = {n};
  b.slice_sizes = {n};
  return b;
}

EffectiveBasis with_anchors(std::vector<std::size_t> anchors, std::size_t n) {
  EffectiveBasis b = all_points(n);
  b.anchors = std::move(anchors);
  b.slice_id.assign(b.anchors.size(), 0);
  b.per_slice = {b.anchors.size()};
  return b;
}

Eigen::MatrixXd dense_pinv(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > 1e-13 * s[0]) inv[i] = 1.0 / s[i];
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// Smoothing matrix A_w = X (X^T W X + P)^+ X^T W built densely.
Eigen::MatrixXd dense_smoother(const Assembled& a, const Eigen::VectorXd& w, double nlambda) {
  const Eigen::Index m = a.s.cols(), ns = a.r.cols();
  Eigen::MatrixXd x(a.s.rows(), m + ns);
  x << a.s, a.r;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(m + ns, m + ns);
  p.bottomRightCorner(ns, ns) = nlambda * a.q;
  const Eigen::MatrixXd wd = w.asDiagonal();
  return x * dense_pinv(x.transpose() * wd * x + p) * x.transpose() * wd;
}

}  // namespace

TEST(Assemble, ThetaLinearityAndQuadratureValues) {
  Dataset d;
  d.x.resize(3, 1);
  d.x << 0.2, 0.5, 0.9;
  const auto basis = all_points(3);
  const Assembled one = assemble(spec_1d(), d.x, basis, {1.0});
  const Assembled two = assemble(spec_1d(), d.x, basis, {2.0});
  EXPECT_TRUE(two.q.isApprox(2.0 * one.q, 1e-15));
  EXPECT_TRUE(two.s.isApprox(one.s, 0));
  EXPECT_TRUE(one.r.isApprox(one.q, 1e-15));
  // Closed form checked against quadrature in the kernel tests.
  EXPECT_NEAR(one.q(0, 1), 0.2 * 0.5 * 0.2 - 0.7 * 0.04 / 2 + 0.008 / 3, 1e-15);
}

TEST(Pwls, PenaltyDominance) {
  const Dataset d = gaussian_1d(40, 1);
  const Assembled a = assemble(spec_1d(), d.x, all_points(40), {1.0});
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(40);
  const auto sol = pwls_solve(a.s, a.r, a.q, w, d.y, 40, 1e12);
  const Eigen::VectorXd ls = a.s.colPivHouseholderQr().solve(d.y);
  EXPECT_LT((a.s * sol.d + a.r * sol.c - a.s * ls).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT(sol.relative_residual, 1e-8);
}

TEST(Pwls, GaussianMatchesDenseSmoothingSpline) {
  for (int n : {20, 60, 100}) {
    const Dataset d = gaussian_1d(n, static_cast<std::uint64_t>(n));
    const Assembled a = assemble(spec_1d(), d.x, all_points(static_cast<std::size_t>(n)), {1.0});
    const double lambda = 1e-5;
    const auto sol = pwls_solve(a.s, a.r, a.q, Eigen::VectorXd::Ones(n), d.y, n, lambda);
    // Classical system: (Q + n lambda I) c + S d = y, S^T c = 0.
    const Eigen::Index m = a.s.cols();
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n + m, n + m);
    k.topLeftCorner(n, n) = a.q + n * lambda * Eigen::MatrixXd::Identity(n, n);
    k.topRightCorner(n, m) = a.s;
    k.bottomLeftCorner(m, n) = a.s.transpose();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + m);
    rhs.head(n) = d.y;
    const Eigen::VectorXd ref = k.fullPivLu().solve(rhs);
    const Eigen::VectorXd fitted_ref = a.q * ref.head(n) + a.s * ref.tail(m);
    const Eigen::VectorXd fitted = a.s * sol.d + a.r * sol.c;
    EXPECT_LT((fitted - fitted_ref).cwiseAbs().maxCoeff(), 1e-8) << "n=" << n;
    EXPECT_LT(sol.relative_residual, 1e-8);
  }
}

TEST(Pwls, DuplicateAnchorsSameFit) {
  const Dataset d = gaussian_1d(30, 4);
  std::vector<std::size_t> uniq{0, 3, 5, 8, 11, 14, 19, 22, 27};
  std::vector<std::size_t> dup = uniq;
  dup.insert(dup.end(), {3, 3, 19});
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(30);
  const Assembled a = assemble(spec_1d(), d.x, with_anchors(uniq, 30), {1.0});
  const Assembled b = assemble(spec_1d(), d.x, with_anchors(dup, 30), {1.0});
  const auto s1 = pwls_solve(a.s, a.r, a.q, w, d.y, 30, 1e-4);
  const auto s2 = pwls_solve(b.s, b.r, b.q, w, d.y, 30, 1e-4);
  EXPECT_TRUE(s2.rank_deficient);
  EXPECT_LT((a.s * s1.d + a.r * s1.c - b.s * s2.d - b.r * s2.c).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(s2.relative_residual, 1e-8);
}

TEST(Pwls, RejectsBadArguments) {
  const Dataset d = gaussian_1d(10, 1);
  const Assembled a = assemble(spec_1d(), d.x, all_points(10), {1.0});
  EXPECT_THROW(pwls_solve(a.s, a.r, a.q, Eigen::VectorXd::Ones(10), d.y, 10, 0.0), ConfigError);
  EXPECT_THROW(pwls_solve(a.s, a.r, a.q, Eigen::VectorXd::Zero(10), d.y, 10, 1.0), ConfigError);
}

TEST(Traces, DenseOracle) {
  const Dataset d = poisson_1d(30, 9);
  const Assembled a = assemble(spec_1d(), d.x, with_anchors({0, 4, 9, 13, 17, 21, 26}, 30), {1.0});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.5, 4.0);
  Eigen::VectorXd w(30);
  for (auto& v : w) v = u(rng);
  for (double lambda : {1e-6, 1e-3, 1.0}) {
    const Traces t = smoothing_traces(a.s, a.r, a.q, w, 30, lambda);
    const Eigen::MatrixXd aw = dense_smoother(a, w, 30 * lambda);
    EXPECT_NEAR(t.trace_aw, aw.trace(), 1e-6);
    EXPECT_NEAR(t.trace_aw_winv, (aw * w.cwiseInverse().asDiagonal()).trace(), 1e-6);
    EXPECT_GT(t.trace_aw, 0.0);
    EXPECT_LT(t.trace_aw, 30.0);
  }
}

TEST(Traces, LimitsAndIdentities) {
  const Dataset d = gaussian_1d(40, 2);
  const Assembled a = assemble(spec_1d(), d.x, uniform_sample(40, 12, 5), {1.0});
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(40);
  const Traces big = smoothing_traces(a.s, a.r, a.q, ones, 40, 1e12);
  EXPECT_NEAR(big.trace_aw, 2.0, 1e-6);
  const Traces t = smoothing_traces(a.s, a.r, a.q, ones, 40, 1e-4);
  EXPECT_NEAR(t.trace_aw, t.trace_aw_winv, 1e-12);
}

TEST(Traces, MonotoneInLambda) {
  const Dataset d = poisson_1d(50, 5);
  const Assembled a = assemble(spec_1d(), d.x, uniform_sample(50, 15, 1), {1.0});
  Eigen::VectorXd w = (d.y.array() + 1.0).matrix();
  double prev = std::numeric_limits<double>::infinity();
  for (double e = -9; e <= 1; e += 0.5) {
    const double tr = smoothing_traces(a.s, a.r, a.q, w, 50, std::pow(10.0, e)).trace_aw;
    EXPECT_LE(tr, prev + 1e-8);
    prev = tr;
  }
}

TEST(Newton, GaussianOneStep) {
  const Dataset d = gaussian_1d(50, 3);
  const Design design = build_design(spec_1d(), d.x, uniform_sample(50, 15, 2));
  const FitResult f = newton_fit(d, Family::gaussian(), design, 1e-4, {1.0});
  EXPECT_TRUE(f.converged);
  EXPECT_EQ(f.newton_iterations, 1);
  const Assembled a = design.combine({1.0});
  const auto sol = pwls_solve(a.s, a.r, a.q, Eigen::VectorXd::Ones(50), d.y, 50, 1e-4);
  EXPECT_LT((f.eta - a.s * sol.d - a.r * sol.c).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Newton, PoissonConstantModel) {
  ModelSpec spec;
  spec.covariates = {Covariate{"x", false, 0}};
  Dataset d = poisson_1d(40, 6);
  const Design design = build_design(spec, d.x, uniform_sample(40, 3, 1));
  const FitResult f = newton_fit(d, Family::poisson(), design, 1.0, {});
  ASSERT_TRUE(f.converged);
  EXPECT_NEAR(f.eta[0], std::log(d.y.mean()), 1e-10);
  EXPECT_LT((f.eta.array() - f.eta[0]).abs().maxCoeff(), 1e-12);
}

TEST(Newton, BinomialSineToy) {
  const int n = 200;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0, 1);
  Dataset d;
  d.x.resize(n, 1);
  d.y.resize(n);
  d.total = Eigen::VectorXd::Constant(n, 20.0);
  Eigen::VectorXd truth(n);
  for (int i = 0; i < n; ++i) {
    d.x(i, 0) = u(rng);
    truth[i] = 1.0 / (1.0 + std::exp(-std::sin(2 * kPi * d.x(i, 0))));
    std::binomial_distribution<int> b(20, truth[i]);
    d.y[i] = b(rng);
  }
  const Family fam = Family::binomial();
  const int k = scott_slice_count(slicing_statistics(d, fam));
  const auto basis = adaptive_sample(d, fam, k, 20, 2026);
  const Design design = build_design(spec_1d(), d.x, basis);
  const TuneResult t = tune(d, fam, design);
  ASSERT_TRUE(t.fit.converged);
  const Eigen::VectorXd p = t.fit.eta.unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); });
  EXPECT_LT((p - truth).cwiseAbs().maxCoeff(), 0.15);
}

TEST(Newton, PenalizedLikelihoodNonIncreasing) {
  std::mt19937_64 seeds(12);
  for (int trial = 0; trial < 12; ++trial) {
    const Dataset d = poisson_1d(60, seeds());
    const Design design = build_design(spec_1d(), d.x, uniform_sample(60, 12, seeds()));
    for (double lambda : {1e-8, 1e-4, 1e-1}) {
      const FitResult f = newton_fit(d, Family::poisson(), design, lambda, {1.0});
      EXPECT_TRUE(f.converged);
      for (std::size_t j = 1; j < f.objective_trace.size(); ++j) {
        ASSERT_LE(f.objective_trace[j], f.objective_trace[j - 1]);
      }
    }
  }
}

TEST(Newton, AnchorPermutationInvariance) {
  const Dataset d = poisson_1d(50, 8);
  std::vector<std::size_t> anchors{1, 4, 9, 12, 18, 23, 30, 37, 41, 47};
  std::vector<std::size_t> perm(anchors.rbegin(), anchors.rend());
  std::swap(perm[2], perm[7]);
  const FitResult a = newton_fit(d, Family::poisson(), build_design(spec_1d(), d.x, with_anchors(anchors, 50)),
                                 1e-4, {1.0});
  const FitResult b = newton_fit(d, Family::poisson(), build_design(spec_1d(), d.x, with_anchors(perm, 50)),
                                 1e-4, {1.0});
  EXPECT_LT((a.eta - b.eta).cwiseAbs().maxCoeff(), 1e-10);
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    const auto pos = std::find(perm.begin(), perm.end(), anchors[j]) - perm.begin();
    EXPECT_NEAR(a.c[static_cast<Eigen::Index>(j)], b.c[pos], 1e-6 * (1.0 + std::abs(a.c[j])));
  }
}

TEST(Gacv, FivePointPoissonDenseOracle) {
  Dataset d;
  d.x.resize(5, 1);
  d.x << 0.05, 0.3, 0.5, 0.72, 0.95;
  d.y.resize(5);
  d.y << 1, 4, 2, 7, 3;
  const Design design = build_design(spec_1d(), d.x, all_points(5));
  const double lambda = 1e-3;
  const FitResult f = newton_fit(d, Family::poisson(), design, lambda, {1.0});
  ASSERT_TRUE(f.converged);
  const Eigen::VectorXd mu = f.eta.array().exp();
  const Eigen::MatrixXd aw = dense_smoother(design.combine({1.0}), mu, 5 * lambda);
  const double tr_a = aw.trace();
  const double tr_aw = (aw * mu.cwiseInverse().asDiagonal()).trace();
  double ll = 0, cross = 0;
  for (int i = 0; i < 5; ++i) {
    ll += d.y[i] * f.eta[i] - mu[i];
    cross += d.y[i] * (d.y[i] - mu[i]);
  }
  const double expected = -ll / 5 + tr_aw / (5 - tr_a) * cross / 5;
  EXPECT_NEAR(f.gacv, expected, 1e-10);
  EXPECT_NEAR(gacv(f, d, Family::poisson()), expected, 1e-10);
}

TEST(Gacv, SaturatedIsInfinite) {
  FitResult f;
  f.trace_aw = 5.0 - 1e-9;
  f.eta = Eigen::VectorXd::Zero(5);
  f.mu = Eigen::VectorXd::Ones(5);
  Dataset d;
  d.y = Eigen::VectorXd::Ones(5);
  EXPECT_TRUE(std::isinf(gacv(f, d, Family::poisson())));
}

TEST(Tune, GoldenMatchesGrid) {
  const Dataset d = poisson_1d(120, 21);
  const Design design = build_design(spec_1d(), d.x, uniform_sample(120, 25, 4));
  SearchConfig cfg;
  cfg.log10_lambda_lo = -8;
  cfg.log10_lambda_hi = 2;
  cfg.normalize_thetas = false;
  const TuneResult t = tune(d, Family::poisson(), design, cfg);
  double best = std::numeric_limits<double>::infinity(), best_e = 0;
  for (int g = 0; g <= 40; ++g) {
    const double e = -8.0 + 0.25 * g;
    const FitResult f = newton_fit(d, Family::poisson(), design, std::pow(10.0, e), {1.0});
    if (f.converged && f.gacv < best) {
      best = f.gacv;
      best_e = e;
    }
  }
  EXPECT_LE(std::abs(std::log10(t.fit.lambda) - best_e), 0.25);
  EXPECT_LE(t.fit.gacv, best + 1e-12);
  EXPECT_EQ(static_cast<int>(t.trajectory.size()), cfg.golden_evals);
}

TEST(Tune, FlatResponseGoesToUpperBound) {
  Dataset d = poisson_1d(40, 2);
  d.y.setConstant(3.0);
  const Design design = build_design(spec_1d(), d.x, uniform_sample(40, 10, 1));
  SearchConfig cfg;
  const TuneResult t = tune(d, Family::poisson(), design, cfg);
  EXPECT_NEAR(std::log10(t.fit.lambda), cfg.log10_lambda_hi, 1e-12);
}

TEST(Tune, NelderMeadMatchesCoarseGrid) {
  const int n = 150;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0, 1);
  Dataset d;
  d.x.resize(n, 2);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    d.x(i, 0) = u(rng);
    d.x(i, 1) = u(rng);
    std::poisson_distribution<int> p(std::exp(1.0 + std::sin(2 * kPi * d.x(i, 0)) + 0.3 * d.x(i, 1)));
    d.y[i] = p(rng);
  }
  const ModelSpec spec = make_anova_spec({Covariate{"a", false, 0}, Covariate{"b", false, 0}}, 1);
  const Design design = build_design(spec, d.x, uniform_sample(n, 25, 3));
  SearchConfig cfg;
  cfg.simplex_starts = 2;
  cfg.normalize_thetas = false;
  const TuneResult t = tune(d, Family::poisson(), design, cfg);
  ASSERT_TRUE(t.fit.converged);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      const double l = -10.0 + i * 11.0 / 4.0;
      const double th = -3.0 + j * 6.0 / 4.0;
      const FitResult f =
          newton_fit(d, Family::poisson(), design, std::pow(10.0, l), {1.0, std::pow(10.0, th)});
      if (f.converged) best = std::min(best, f.gacv);
    }
  }
  EXPECT_LE(t.fit.gacv, best + 0.05 * std::abs(best));
}

TEST(Predict, ReproducesTrainingEta) {
  const Dataset d = poisson_1d(40, 3);
  const Design design = build_design(spec_1d(), d.x, uniform_sample(40, 10, 2));
  const FitResult f = newton_fit(d, Family::poisson(), design, 1e-3, {1.0});
  EXPECT_LT((predict_eta(design, f, d.x) - f.eta).cwiseAbs().maxCoeff(), 1e-10);
}
