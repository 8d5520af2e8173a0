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

#include "abss/linalg.hpp"

#include <cmath>
#include <numeric>

#include "abss/error.hpp"

namespace abss {

PivotedCholesky::PivotedCholesky(const Eigen::MatrixXd& a, double rel_tol) : n_(a.rows()) {
  if (a.rows() != a.cols()) throw NumericalError("pivoted Cholesky needs a square matrix");
  if (!a.allFinite()) throw NumericalError("pivoted Cholesky: non-finite entries");
  Eigen::MatrixXd w = a;
  perm_.resize(static_cast<std::size_t>(n_));
  std::iota(perm_.begin(), perm_.end(), Eigen::Index{0});

  double first_pivot = 0.0;
  rank_ = 0;
  for (Eigen::Index k = 0; k < n_; ++k) {
    Eigen::Index j;
    const double pivot = w.diagonal().tail(n_ - k).maxCoeff(&j);
    j += k;
    if (k == 0) first_pivot = pivot;
    if (!(pivot > 0.0) || pivot <= rel_tol * first_pivot) break;
    if (j != k) {
      w.row(k).swap(w.row(j));
      w.col(k).swap(w.col(j));
      std::swap(perm_[static_cast<std::size_t>(k)], perm_[static_cast<std::size_t>(j)]);
    }
    const double lkk = std::sqrt(pivot);
    w(k, k) = lkk;
    const Eigen::Index rest = n_ - k - 1;
    if (rest > 0) {
      w.col(k).tail(rest) /= lkk;
      w.bottomRightCorner(rest, rest).triangularView<Eigen::Lower>() -=
          w.col(k).tail(rest) * w.col(k).tail(rest).transpose();
      // Keep the working block symmetric for the next pivot search.
      w.bottomRightCorner(rest, rest) =
          w.bottomRightCorner(rest, rest).selfadjointView<Eigen::Lower>();
    }
    ++rank_;
  }

  const Eigen::Index r = rank_;
  l11_ = w.topLeftCorner(r, r).triangularView<Eigen::Lower>();
  l21_ = w.bottomLeftCorner(n_ - r, r);
  if (r < n_) {
    // Null space of L^T in permuted coordinates: [-L11^{-T} L21^T; I].
    null_.resize(n_, n_ - r);
    null_.topRows(r) = -l11_.triangularView<Eigen::Lower>().transpose().solve(l21_.transpose());
    null_.bottomRows(n_ - r).setIdentity();
    null_gram_.compute(null_.transpose() * null_);
  }
}

Eigen::VectorXd PivotedCholesky::solve(const Eigen::VectorXd& b) const {
  if (b.size() != n_) throw NumericalError("pivoted Cholesky solve: size mismatch");
  const Eigen::Index r = rank_;
  Eigen::VectorXd bp(n_);
  for (Eigen::Index k = 0; k < n_; ++k) bp[k] = b[perm_[static_cast<std::size_t>(k)]];

  Eigen::VectorXd u = Eigen::VectorXd::Zero(n_);
  if (r > 0) {
    const auto tri = l11_.triangularView<Eigen::Lower>();
    u.head(r) = tri.transpose().solve(tri.solve(bp.head(r)));
  }
  if (r < n_) u -= null_ * null_gram_.solve(null_.transpose() * u);

  Eigen::VectorXd x(n_);
  for (Eigen::Index k = 0; k < n_; ++k) x[perm_[static_cast<std::size_t>(k)]] = u[k];
  return x;
}

double PivotedCholesky::trace_of_inverse_times(const Eigen::MatrixXd& c) const {
  // range(C) inside range(A) makes tr(G C) the same for every generalized
  // inverse G, so the basic inverse P [L11^{-T} L11^{-1}, 0; 0, 0] P^T suffices.
  const Eigen::Index r = rank_;
  if (r == 0) return 0.0;
  Eigen::MatrixXd c11(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < r; ++j) {
      c11(i, j) = c(perm_[static_cast<std::size_t>(i)], perm_[static_cast<std::size_t>(j)]);
    }
  }
  const auto tri = l11_.triangularView<Eigen::Lower>();
  const Eigen::MatrixXd z = tri.solve(c11);
  const Eigen::MatrixXd y = tri.solve(z.transpose());
  return y.trace();
}

Eigen::MatrixXd PivotedCholesky::pseudo_inverse() const {
  Eigen::MatrixXd out(n_, n_);
  for (Eigen::Index j = 0; j < n_; ++j) out.col(j) = solve(Eigen::VectorXd::Unit(n_, j));
  return out;
}

}  // namespace abss
