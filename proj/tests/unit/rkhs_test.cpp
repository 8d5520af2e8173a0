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

#include <random>

#include <gtest/gtest.h>

#include "abss/error.hpp"
#include "abss/rkhs.hpp"
#include "test_support.hpp"

using namespace abss;
using abss::testing::cubic_kernel_by_quadrature;
using abss::testing::min_over_max_eigenvalue;

namespace {

ModelSpec mixed_spec(int levels) {
  return make_anova_spec({Covariate{"x", false, 0}, Covariate{"tau", true, levels}}, 2);
}

Eigen::MatrixXd random_points(const ModelSpec& spec, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd p(n, static_cast<Eigen::Index>(spec.dims()));
  for (int i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < spec.dims(); ++j) {
      const auto& c = spec.covariates[j];
      p(i, static_cast<Eigen::Index>(j)) =
          c.categorical ? static_cast<double>(rng() % static_cast<unsigned>(c.levels)) : u(rng);
    }
  }
  return p;
}

}  // namespace

TEST(CubicKernel, Examples) {
  EXPECT_DOUBLE_EQ(cubic_kernel(0.0, 0.7), 0.0);
  EXPECT_NEAR(cubic_kernel(0.5, 0.5), 0.041666666666666664, 1e-15);
  EXPECT_NEAR(cubic_kernel(0.3, 0.8), 0.0315, 1e-15);
  EXPECT_THROW(cubic_kernel(-0.1, 0.5), DomainError);
  EXPECT_THROW(cubic_kernel(0.5, 1.2), DomainError);
}

TEST(CubicKernel, MatchesQuadratureOnGrid) {
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 20; ++j) {
      const double a = i / 19.0, b = j / 19.0;
      worst = std::max(worst, std::abs(cubic_kernel(a, b) - cubic_kernel_by_quadrature(a, b)));
    }
  }
  EXPECT_LT(worst, 1e-8);
}

TEST(LinearKernel, Examples) {
  EXPECT_DOUBLE_EQ(linear_kernel(0.0, 0.3), 0.0);
  EXPECT_DOUBLE_EQ(linear_kernel(0.4, 0.9), 0.4);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  Eigen::MatrixXd g(50, 50);
  std::vector<double> x(50);
  for (auto& v : x) v = u(rng);
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 50; ++j) g(i, j) = linear_kernel(x[i], x[j]);
  EXPECT_GE(min_over_max_eigenvalue(g), -1e-8);
}

TEST(CategoricalKernel, Examples) {
  EXPECT_DOUBLE_EQ(categorical_kernel(0, 0, 2), 0.5);
  EXPECT_DOUBLE_EQ(categorical_kernel(0, 1, 2), -0.5);
  EXPECT_DOUBLE_EQ(categorical_kernel(2, 2, 4), 0.75);
  EXPECT_THROW(categorical_kernel(2, 0, 2), DomainError);
  EXPECT_THROW(categorical_kernel(0, 0, 1), DomainError);
}

TEST(AnovaSideConditions, HoldPointwise) {
  for (int t : {2, 3, 5}) {
    for (int a = 0; a < t; ++a) {
      double sum = 0.0;
      for (int b = 0; b < t; ++b) sum += categorical_kernel(a, b, t);
      EXPECT_NEAR(sum, 0.0, 1e-15);
    }
  }
  for (double x : {0.0, 0.2, 0.9}) {
    EXPECT_EQ(cubic_kernel(0.0, x), 0.0);
    EXPECT_EQ(linear_kernel(0.0, x), 0.0);
  }
}

TEST(NullBasis, Examples) {
  auto cubic = build_null_basis(abss::testing::cubic_1d_spec());
  ASSERT_EQ(cubic.size(), 2u);

  const ModelSpec mixed = mixed_spec(2);
  const auto basis = build_null_basis(mixed);
  ASSERT_EQ(basis.size(), 4u);  // m = 2t
  Eigen::RowVectorXd pt(2);
  pt << 1.0, 0.0;
  std::vector<double> vals;
  for (const auto& phi : basis) vals.push_back(evaluate(phi, mixed, pt));
  EXPECT_EQ(vals, (std::vector<double>{1.0, 1.0, 0.5, 0.5}));

  const ModelSpec lin = make_anova_spec({Covariate{"x", false, 0}}, 1, KernelKind::Linear);
  EXPECT_EQ(build_null_basis(lin).size(), 1u);
}

TEST(NullBasis, DimensionScalesWithLevels) {
  for (int t : {2, 3, 6}) EXPECT_EQ(build_null_basis(mixed_spec(t)).size(), 2u * t);
}

TEST(NullBasis, LinearlyIndependentOnDistinctDesign) {
  std::mt19937_64 rng(8);
  const ModelSpec spec = mixed_spec(3);
  const auto basis = build_null_basis(spec);
  const Eigen::MatrixXd pts = random_points(spec, 40, rng);
  const Eigen::MatrixXd s = null_matrix(spec, basis, pts);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(s);
  EXPECT_EQ(lu.rank(), static_cast<Eigen::Index>(basis.size()));
}

TEST(KernelMatrix, Examples) {
  const ModelSpec c1 = abss::testing::cubic_1d_spec();
  Eigen::MatrixXd half(1, 1);
  half << 0.5;
  EXPECT_NEAR(kernel_matrix(c1, half, half, {1.0})(0, 0), 0.041666666666666664, 1e-15);

  const ModelSpec mixed = mixed_spec(2);
  Eigen::MatrixXd p(1, 2);
  p << 0.5, 0.0;
  // terms: x, tau (unpenalized), x:tau
  EXPECT_NEAR(kernel_matrix(mixed, p, p, {1.0, 1.0, 1.0})(0, 0), 0.0625, 1e-15);
}

TEST(KernelMatrix, LinearInTheta) {
  std::mt19937_64 rng(2);
  const ModelSpec spec = make_anova_spec({Covariate{"a", false, 0}, Covariate{"b", false, 0}}, 1);
  const Eigen::MatrixXd pts = random_points(spec, 12, rng);
  const Eigen::MatrixXd first = kernel_matrix(spec, pts, pts, {1.0, 0.0});
  EXPECT_TRUE(kernel_matrix(spec, pts, pts, {2.0, 0.0}).isApprox(2.0 * first, 1e-15));
  const Eigen::MatrixXd both = kernel_matrix(spec, pts, pts, {1.0, 1.0});
  const Eigen::MatrixXd scaled = kernel_matrix(spec, pts, pts, {1.0, 3.7});
  EXPECT_LT((scaled - both - 2.7 * (both - first)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(KernelMatrix, SchemaMismatch) {
  const ModelSpec spec = mixed_spec(2);
  EXPECT_THROW(kernel_matrix(spec, Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(2, 3),
                             {1, 1, 1}),
               ConfigError);
}

TEST(KernelProperty, SymmetricPsdOnRandomSpecs) {
  std::mt19937_64 rng(2026);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Covariate> cov;
    const int d = 1 + static_cast<int>(rng() % 3);
    for (int j = 0; j < d; ++j) {
      const bool cat = rng() % 3 == 0;
      cov.push_back({"v" + std::to_string(j), cat, cat ? 2 + static_cast<int>(rng() % 3) : 0});
    }
    const KernelKind kind = rng() % 2 ? KernelKind::Cubic : KernelKind::Linear;
    const ModelSpec spec = make_anova_spec(cov, 1 + static_cast<int>(rng() % d), kind);
    std::vector<double> theta(spec.terms.size());
    std::uniform_real_distribution<double> th(0.1, 5.0);
    for (auto& t : theta) t = th(rng);
    const Eigen::MatrixXd pts = random_points(spec, 2 + static_cast<int>(rng() % 49), rng);
    const Eigen::MatrixXd g = kernel_matrix(spec, pts, pts, theta);
    ASSERT_LT((g - g.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    ASSERT_GE(min_over_max_eigenvalue(g), -1e-8) << "trial " << trial;
  }
}

TEST(ModelSpec, ValidationErrors) {
  ModelSpec spec = mixed_spec(2);
  spec.terms[0].vars = {7};
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = mixed_spec(2);
  spec.terms[0].theta = 0.0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = mixed_spec(2);
  spec.terms[0].kinds = {KernelKind::Categorical};
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Scaling, ClampsOutOfRange) {
  ModelSpec spec = abss::testing::cubic_1d_spec();
  Eigen::MatrixXd raw(3, 1);
  raw << 2.0, 4.0, 6.0;
  const auto sc = CovariateScaling::fit(spec, raw);
  Eigen::MatrixXd fresh(2, 1);
  fresh << 5.0, 9.0;
  std::vector<bool> clamped;
  const Eigen::MatrixXd out = sc.apply(spec, fresh, &clamped);
  EXPECT_DOUBLE_EQ(out(0, 0), 0.75);
  EXPECT_DOUBLE_EQ(out(1, 0), 1.0);
  EXPECT_EQ(clamped, (std::vector<bool>{false, true}));
}
