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
#include "abss/linalg.hpp"

using namespace abss;

namespace {

Eigen::MatrixXd random_psd(int n, int rank, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd f(n, rank);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < rank; ++j) f(i, j) = g(rng);
  return f * f.transpose();
}

Eigen::MatrixXd svd_pinv(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > 1e-10 * s[0]) inv[i] = 1.0 / s[i];
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace

TEST(PivotedCholesky, FullRankSolve) {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd a = random_psd(8, 8, rng) + Eigen::MatrixXd::Identity(8, 8);
  const Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(8, -1, 2);
  const PivotedCholesky ch(a);
  EXPECT_EQ(ch.rank(), 8);
  EXPECT_LT((a * ch.solve(b) - b).norm(), 1e-12 * b.norm());
}

TEST(PivotedCholesky, RankDeficientMinimumNorm) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 15);
    const int r = 1 + static_cast<int>(rng() % n);
    const Eigen::MatrixXd a = random_psd(n, r, rng);
    std::normal_distribution<double> g;
    Eigen::VectorXd v(n);
    for (auto& e : v) e = g(rng);
    const Eigen::VectorXd b = a * v;  // consistent right-hand side
    const PivotedCholesky ch(a, 1e-12);
    ASSERT_EQ(ch.rank(), r);
    const Eigen::VectorXd x = ch.solve(b);
    const Eigen::VectorXd ref = svd_pinv(a) * b;
    ASSERT_LT((x - ref).norm(), 1e-7 * (1.0 + ref.norm())) << "trial " << trial;
  }
}

TEST(PivotedCholesky, TraceOfInverseTimes) {
  std::mt19937_64 rng(6);
  const Eigen::MatrixXd f = random_psd(10, 6, rng);
  const Eigen::MatrixXd a = f + f * f;  // same range as f
  const Eigen::MatrixXd c = f;
  const PivotedCholesky ch(a, 1e-12);
  EXPECT_NEAR(ch.trace_of_inverse_times(c), (svd_pinv(a) * c).trace(), 1e-8);
}

TEST(PivotedCholesky, ZeroMatrix) {
  const PivotedCholesky ch(Eigen::MatrixXd::Zero(3, 3));
  EXPECT_EQ(ch.rank(), 0);
  EXPECT_EQ(ch.solve(Eigen::VectorXd::Zero(3)), Eigen::VectorXd::Zero(3));
}

TEST(PivotedCholesky, RejectsBadInput) {
  EXPECT_THROW(PivotedCholesky(Eigen::MatrixXd::Zero(2, 3)), NumericalError);
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2);
  a(0, 1) = std::nan("");
  EXPECT_THROW(PivotedCholesky{a}, NumericalError);
}
