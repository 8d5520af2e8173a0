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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "abss/basis_select.hpp"
#include "abss/dataset.hpp"
#include "abss/diagnostics.hpp"
#include "abss/family.hpp"
#include "abss/rkhs.hpp"
#include "abss/solver.hpp"

namespace abss {

/// Strain random effect realized as ridge-penalized indicator coefficients
/// under a sum-to-zero constraint. The constraint is built in through an
/// orthonormal contrast C (S x (S-1), columns orthogonal to 1): the design
/// carries Z C and b = C beta, so sum_s b_s = 0 and |b|^2 = |beta|^2.
struct RandomEffect {
  std::vector<int> levels;   ///< distinct labels, ascending
  Eigen::MatrixXd contrast;  ///< S x (S-1)
  Eigen::MatrixXd z;         ///< n x (S-1); n x 0 with a single strain

  bool present() const { return z.cols() > 0; }
  /// Per-level effects b_s from fitted contrast coefficients.
  Eigen::VectorXd effects(const Eigen::VectorXd& beta) const;
  /// Design rows for new labels; unseen labels get zero rows.
  Eigen::MatrixXd columns_for(const std::vector<int>& labels) const;
};

/// Throws ConfigError on an empty label vector.
RandomEffect random_effect_columns(const std::vector<int>& strains);

// ---------------------------------------------------------------------------
// GC-bias time-course Poisson model

struct GcBiasData {
  Eigen::VectorXd position;
  Eigen::VectorXd time;
  Eigen::MatrixXd gc;  ///< n x 3
  Eigen::VectorXd count;

  Eigen::Index n() const { return count.size(); }
};

struct GcBiasConfig {
  std::size_t nstar = 0;  ///< 0: round(nstar_mult n^{2/9})
  double nstar_mult = 10.0;
  int k = 0;  ///< 0: Scott's rule
  bool time_categorical = false;
  std::uint64_t seed = 1;
  SearchConfig search;
};

/// Terms position, time, position:time, then every GC main effect, two-way
/// and three-way interaction. `time_levels` 0 keeps time continuous.
ModelSpec gc_bias_spec(int time_levels = 0);

struct GcBiasResult {
  ModelSpec spec;
  CovariateScaling scaling;
  std::vector<double> time_labels;  ///< categorical time: label of each level
  EffectiveBasis basis;
  Design design;
  Dataset data;  ///< scaled covariates fed to the fit
  FitResult fit;
  std::vector<std::string> gc_terms;
  Eigen::VectorXd fitted;     ///< exp(eta)
  /// exp(constant + non-GC terms + mean of the GC part over the rows)
  Eigen::VectorXd corrected;
  std::optional<double> quasi_r2;
  ProjectionReport gc_projection;  ///< every GC term dropped
};

/// Throws ConfigError when every count is zero or inputs are malformed.
GcBiasResult fit_gc_bias(const GcBiasData& data, const GcBiasConfig& config = {});

struct GcSimConfig {
  int positions = 80;
  int times = 12;
  double gc_strength = 1.0;  ///< 0 injects no GC effect
  double baseline = 4.0;     ///< log-scale level
  std::uint64_t seed = 1;
};

/// Counts with log lambda = baseline + eta0(j, t) + gc_strength * eta_gc(x);
/// GC contents are drawn per row. `truth_corrected` (if given) receives
/// exp(baseline + eta0).
GcBiasData simulate_gc_bias(const GcSimConfig& config,
                            Eigen::VectorXd* truth_corrected = nullptr);

// ---------------------------------------------------------------------------
// Windowed differential methylation scan

struct MethylTrack {
  std::vector<long long> position;
  std::vector<int> strain;
  std::vector<int> generation;
  Eigen::VectorXd methylated;
  Eigen::VectorXd total;

  std::size_t size() const { return position.size(); }
};

struct DmrConfig {
  long long width = 20000;
  int k = 10;
  std::size_t per_slice = 10;  ///< n* = k * per_slice
  double threshold = kDefaultRhoThreshold;
  std::uint64_t seed = 1;
  int threads = 1;
  /// Windows with fewer covered rows are skipped; 0 means n*.
  std::size_t min_rows = 0;
  SearchConfig search;
};

struct DmrSegment {
  long long start = 0;
  long long end = 0;  ///< exclusive
  std::size_t rows = 0;
  std::size_t positions = 0;
  std::size_t nstar = 0;
  bool skipped = false;
  std::string reason;
  ProjectionReport drop_generation;   ///< {g, i:g}
  ProjectionReport drop_interaction;  ///< {i:g}
  double lambda = 0.0;
  double theta_b = 0.0;
  bool converged = false;
  std::vector<int> strain_levels;
  Eigen::VectorXd strain_effects;
  /// rho for dropping every generation term exceeds the threshold.
  bool flagged = false;
};

/// Window model: logit p = eta_C + eta_1(i) + eta_2(g) + eta_12(i, g) + b_s,
/// position rescaled to [0, 1] inside the window, generation categorical.
/// Windows are [w * width, (w + 1) * width) and come back in genomic order.
std::vector<DmrSegment> scan_dmr(const MethylTrack& track, const DmrConfig& config = {});

struct DmrSimConfig {
  int windows = 4;
  std::vector<int> planted = {1};  ///< window indices with a generation shift
  int positions_per_window = 60;
  int strains = 2;
  int generations = 3;
  double mean_depth = 15.0;
  double shift = 1.0;      ///< logit gap between first and last generation
  double strain_sd = 0.3;  ///< logit strain offsets
  long long width = 20000;
  std::uint64_t seed = 1;
};

MethylTrack simulate_methylation(const DmrSimConfig& config);

}  // namespace abss
