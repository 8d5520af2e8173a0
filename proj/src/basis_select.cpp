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

#include "abss/basis_select.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "abss/error.hpp"
#include "abss/linalg.hpp"
#include "abss/rng.hpp"

namespace abss {

std::vector<std::size_t> Slicing::members(int s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < slice_of.size(); ++i) {
    if (slice_of[i] == s) out.push_back(i);
  }
  return out;
}

Slicing slice(const Eigen::VectorXd& statistics, int k) {
  const auto n = statistics.size();
  if (k < 1) throw ConfigError("slice count must be positive");
  if (n < k) throw ConfigError("slice count exceeds number of observations");
  if (!statistics.allFinite()) throw ConfigError("slicing statistics must be finite");

  Slicing out;
  const double lo = statistics.minCoeff();
  const double hi = statistics.maxCoeff();
  if (!(hi > lo)) {
    if (k > 1) std::cerr << "warning: constant slicing statistic; using a single slice\n";
    out.degenerate = k > 1;
    k = 1;
  }
  out.k = k;
  out.boundaries.resize(static_cast<std::size_t>(k) + 1);
  const double width = (hi - lo) / k;
  for (int j = 0; j <= k; ++j) {
    out.boundaries[static_cast<std::size_t>(j)] = lo + (hi - lo) * j / k;
  }
  out.boundaries.back() = hi;

  out.slice_of.resize(static_cast<std::size_t>(n));
  out.counts.assign(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    int s = 0;
    if (k > 1) {
      s = static_cast<int>(std::floor((statistics[i] - lo) / width));
      s = std::clamp(s, 0, k - 1);
      // The floor can land one bin off when an edge is not representable.
      while (s > 0 && statistics[i] < out.boundaries[static_cast<std::size_t>(s)]) --s;
      while (s + 1 < k && statistics[i] >= out.boundaries[static_cast<std::size_t>(s) + 1]) ++s;
    }
    out.slice_of[static_cast<std::size_t>(i)] = s;
    ++out.counts[static_cast<std::size_t>(s)];
  }
  return out;
}

int scott_slice_count(const Eigen::VectorXd& statistics) {
  const auto n = statistics.size();
  if (n < 2) throw ConfigError("Scott's rule needs at least two observations");
  const double mean = statistics.mean();
  const double sd = std::sqrt((statistics.array() - mean).square().sum() / (n - 1.0));
  const double range = statistics.maxCoeff() - statistics.minCoeff();
  if (!(sd > 0.0) || !(range > 0.0)) return 1;
  const double width = 3.49 * sd * std::pow(static_cast<double>(n), -1.0 / 3.0);
  const double k = std::ceil(range / width);
  return static_cast<int>(std::clamp(k, 1.0, static_cast<double>(n)));
}

std::size_t default_nstar(std::size_t n, int kernel_order, double mult, std::size_t null_dim) {
  double exponent;
  if (kernel_order == 4) {
    exponent = 2.0 / 9.0;
  } else if (kernel_order == 2) {
    exponent = 2.0 / 5.0;
  } else {
    throw ConfigError("kernel order must be 4 (cubic) or 2 (linear)");
  }
  double v = std::round(mult * std::pow(static_cast<double>(n), exponent));
  v = std::max(v, static_cast<double>(null_dim + 1));
  v = std::min(v, static_cast<double>(n));
  return static_cast<std::size_t>(std::max(v, 1.0));
}

std::vector<std::size_t> allocate(const Slicing& slicing, std::size_t nstar) {
  const auto k = static_cast<std::size_t>(slicing.k);
  const auto& sizes = slicing.counts;
  // Slices by decreasing population, ties by index.
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sizes[a] > sizes[b]; });

  std::vector<std::size_t> alloc(k, nstar / k);
  std::size_t remainder = nstar - (nstar / k) * k;
  for (std::size_t j = 0; j < remainder; ++j) ++alloc[order[j]];

  std::size_t orphaned = 0;
  std::size_t populated = 0;
  for (std::size_t s = 0; s < k; ++s) {
    if (sizes[s] == 0) {
      orphaned += alloc[s];
      alloc[s] = 0;
    } else {
      populated += sizes[s];
    }
  }
  if (orphaned > 0 && populated > 0) {
    // Largest-remainder apportionment by slice population.
    std::vector<double> frac(k, 0.0);
    std::size_t given = 0;
    for (std::size_t s = 0; s < k; ++s) {
      if (sizes[s] == 0) continue;
      const double share = static_cast<double>(orphaned) * sizes[s] / populated;
      const auto whole = static_cast<std::size_t>(std::floor(share));
      alloc[s] += whole;
      given += whole;
      frac[s] = share - whole;
    }
    std::vector<std::size_t> by_frac;
    for (std::size_t s : order) {
      if (sizes[s] > 0) by_frac.push_back(s);
    }
    std::stable_sort(by_frac.begin(), by_frac.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t j = 0; given < orphaned; ++j, ++given) ++alloc[by_frac[j % by_frac.size()]];
  }
  return alloc;
}

Eigen::VectorXd slicing_statistics(const Dataset& data, const Family& family) {
  Eigen::VectorXd s(data.n());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    s[i] = slicing_statistic(family, data.y[i], data.total_at(i));
  }
  return s;
}

EffectiveBasis adaptive_sample(const Slicing& slicing, const std::vector<std::size_t>& per_slice,
                               std::uint64_t seed, std::size_t null_dim) {
  if (per_slice.size() != static_cast<std::size_t>(slicing.k)) {
    throw ConfigError("one allocation per slice required");
  }
  const std::size_t nstar = std::accumulate(per_slice.begin(), per_slice.end(), std::size_t{0});
  if (nstar < null_dim + 1) {
    throw ConfigError("n* = " + std::to_string(nstar) + " is below null-space dimension + 1 = " +
                      std::to_string(null_dim + 1));
  }
  EffectiveBasis basis;
  basis.method = "adaptive";
  basis.k = slicing.k;
  basis.per_slice = per_slice;
  basis.slice_sizes = slicing.counts;
  basis.boundaries = slicing.boundaries;
  basis.seed = seed;
  basis.rng = std::string(Rng::kName);
  for (int s = 0; s < slicing.k; ++s) {
    const std::size_t want = per_slice[static_cast<std::size_t>(s)];
    if (want == 0) continue;
    const auto members = slicing.members(s);
    if (members.empty()) {
      throw ConfigError("allocation to empty slice " + std::to_string(s));
    }
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(s) + 1);
    for (std::size_t j = 0; j < want; ++j) {
      basis.anchors.push_back(members[rng.below(members.size())]);
      basis.slice_id.push_back(s);
    }
  }
  return basis;
}

EffectiveBasis adaptive_sample(const Dataset& data, const Family& family, int k,
                               std::size_t nstar, std::uint64_t seed, std::size_t null_dim) {
  const Slicing slicing = slice(slicing_statistics(data, family), k);
  return adaptive_sample(slicing, allocate(slicing, nstar), seed, null_dim);
}

EffectiveBasis uniform_sample(std::size_t n, std::size_t nstar, std::uint64_t seed) {
  if (nstar < 1) throw ConfigError("n* must be at least 1");
  if (n < 1) throw ConfigError("cannot sample from an empty dataset");
  EffectiveBasis basis;
  basis.method = "uniform";
  basis.k = 1;
  basis.per_slice = {nstar};
  basis.slice_sizes = {n};
  basis.seed = seed;
  basis.rng = std::string(Rng::kName);
  Rng rng = Rng::substream(seed, 0);
  for (std::size_t j = 0; j < nstar; ++j) {
    basis.anchors.push_back(rng.below(n));
    basis.slice_id.push_back(0);
  }
  return basis;
}

double stratified_mean(const EffectiveBasis& basis, const Eigen::VectorXd& psi) {
  const double n = std::accumulate(basis.slice_sizes.begin(), basis.slice_sizes.end(), 0.0);
  std::vector<double> sums(static_cast<std::size_t>(basis.k), 0.0);
  for (std::size_t j = 0; j < basis.anchors.size(); ++j) {
    sums[static_cast<std::size_t>(basis.slice_id[j])] +=
        psi[static_cast<Eigen::Index>(basis.anchors[j])];
  }
  double out = 0.0;
  for (std::size_t s = 0; s < sums.size(); ++s) {
    if (basis.per_slice[s] == 0) continue;
    out += (basis.slice_sizes[s] / n) * sums[s] / static_cast<double>(basis.per_slice[s]);
  }
  return out;
}

Eigen::VectorXd representer_residual(const ModelSpec& spec, const Eigen::MatrixXd& anchors,
                                     const std::vector<double>& thetas,
                                     const Eigen::RowVectorXd& x0) {
  // R_J(x0, .) lies in the penalized subspace, orthogonal to the null space,
  // so its projection is sum_j c_j R_J(x*_j, .) with Q c = r0.
  const Eigen::MatrixXd q = kernel_matrix(spec, anchors, anchors, thetas);
  const Eigen::VectorXd r0 = kernel_matrix(spec, anchors, Eigen::MatrixXd(x0), thetas).col(0);
  const PivotedCholesky chol(q);
  const Eigen::VectorXd c = chol.solve(r0);
  return r0 - q * c;
}

Eigen::MatrixXd anchor_points(const EffectiveBasis& basis, const Eigen::MatrixXd& points) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(basis.anchors.size()), points.cols());
  for (std::size_t j = 0; j < basis.anchors.size(); ++j) {
    out.row(static_cast<Eigen::Index>(j)) = points.row(static_cast<Eigen::Index>(basis.anchors[j]));
  }
  return out;
}

}  // namespace abss
