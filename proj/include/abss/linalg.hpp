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

#include <vector>

#include <Eigen/Dense>

namespace abss {

/// Diagonally pivoted Cholesky factorization P^T A P = L L^T of a symmetric
/// positive semidefinite matrix, truncated at numerical rank r.
///
/// Elimination stops once the largest remaining Schur pivot falls below
/// `rel_tol` times the first pivot. Solves return the Moore-Penrose
/// (minimum-norm) solution of the truncated system.
class PivotedCholesky {
 public:
  static constexpr double kDefaultTolerance = 1e-14;

  PivotedCholesky() = default;
  explicit PivotedCholesky(const Eigen::MatrixXd& a, double rel_tol = kDefaultTolerance);

  Eigen::Index rank() const { return rank_; }
  Eigen::Index size() const { return n_; }
  const std::vector<Eigen::Index>& permutation() const { return perm_; }
  /// Leading r x r block and the (n - r) x r remainder of L.
  const Eigen::MatrixXd& l11() const { return l11_; }
  const Eigen::MatrixXd& l21() const { return l21_; }

  /// Minimum-norm x with A x = b (b is assumed to lie in range(A)).
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;

  /// tr(A^+ C) for symmetric C with range(C) inside range(A).
  double trace_of_inverse_times(const Eigen::MatrixXd& c) const;

  /// Dense generalized inverse built column by column from solve(); it agrees
  /// with A^+ on range(A) (test and diagnostic use).
  Eigen::MatrixXd pseudo_inverse() const;

 private:
  Eigen::Index n_ = 0;
  Eigen::Index rank_ = 0;
  std::vector<Eigen::Index> perm_;  ///< perm_[k] = original index of pivot k
  Eigen::MatrixXd l11_;             ///< r x r lower triangular
  Eigen::MatrixXd l21_;             ///< (n - r) x r
  Eigen::MatrixXd null_;            ///< n x (n - r) null-space basis, permuted coordinates
  Eigen::LLT<Eigen::MatrixXd> null_gram_;
};

}  // namespace abss
