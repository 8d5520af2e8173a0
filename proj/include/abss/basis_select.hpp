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

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "abss/dataset.hpp"
#include "abss/family.hpp"
#include "abss/rkhs.hpp"

namespace abss {

/// Equal-width partition of a statistic's range.
struct Slicing {
  int k = 1;
  std::vector<double> boundaries;   ///< k + 1 edges; last interval closed on the right
  std::vector<int> slice_of;        ///< per observation
  std::vector<std::size_t> counts;  ///< |S_k|
  bool degenerate = false;          ///< all statistics equal, collapsed to one slice

  std::vector<std::size_t> members(int slice) const;
};

Slicing slice(const Eigen::VectorXd& statistics, int k);

/// Scott's normal-reference bin count, ceil(range / (3.49 sd n^{-1/3})),
/// clamped to [1, n].
int scott_slice_count(const Eigen::VectorXd& statistics);

/// round(mult * n^{2/9}) for cubic splines (order 4) or round(mult * n^{2/5})
/// for linear splines (order 2), clamped to [null_dim + 1, n].
std::size_t default_nstar(std::size_t n, int kernel_order, double mult,
                          std::size_t null_dim = 0);

/// Splits n* across slices: round(n*/K) each with the remainder on the most
/// populous slices; allocations of empty slices move to the populated ones in
/// proportion to their sizes. The result sums to n*.
std::vector<std::size_t> allocate(const Slicing& slicing, std::size_t nstar);

/// Sampled anchors x*_j spanning the effective model space.
struct EffectiveBasis {
  std::string method;                    ///< "adaptive" or "uniform"
  std::vector<std::size_t> anchors;      ///< row indices into the training data
  std::vector<int> slice_id;             ///< per anchor
  int k = 1;
  std::vector<std::size_t> per_slice;    ///< n_k
  std::vector<std::size_t> slice_sizes;  ///< |S_k|
  std::vector<double> boundaries;
  std::uint64_t seed = 0;
  std::string rng;

  std::size_t nstar() const { return anchors.size(); }
};

/// Per-observation slicing statistics for the family.
Eigen::VectorXd slicing_statistics(const Dataset& data, const Family& family);

/// Within slice k draws n_k row indices uniformly with replacement from S_k,
/// using substream k + 1 of `seed`.
EffectiveBasis adaptive_sample(const Slicing& slicing, const std::vector<std::size_t>& per_slice,
                               std::uint64_t seed, std::size_t null_dim = 0);

/// Slices the family's statistic into K bins, allocates n*, and samples.
EffectiveBasis adaptive_sample(const Dataset& data, const Family& family, int k,
                               std::size_t nstar, std::uint64_t seed, std::size_t null_dim = 0);

/// n* uniform draws with replacement from all rows (substream 0), K = 1.
EffectiveBasis uniform_sample(std::size_t n, std::size_t nstar, std::uint64_t seed);

/// Stratified subsample mean sum_k (|S_k|/n)(1/n_k) sum_j psi(x*_j) given
/// per-observation values psi_i.
double stratified_mean(const EffectiveBasis& basis, const Eigen::VectorXd& psi);

/// Evaluations at the anchors of h = R_J(x0, .) - P R_J(x0, .), where P
/// projects onto the effective model space in the RKHS inner product.
Eigen::VectorXd representer_residual(const ModelSpec& spec, const Eigen::MatrixXd& anchors,
                                     const std::vector<double>& thetas,
                                     const Eigen::RowVectorXd& x0);

/// Rows of `points` selected by the basis.
Eigen::MatrixXd anchor_points(const EffectiveBasis& basis, const Eigen::MatrixXd& points);

}  // namespace abss
