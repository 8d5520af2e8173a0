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

#include "abss/seqapps.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <thread>

#include "abss/error.hpp"
#include "abss/rng.hpp"

namespace abss {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

Eigen::VectorXd RandomEffect::effects(const Eigen::VectorXd& beta) const {
  if (!present()) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(levels.size()));
  if (beta.size() != contrast.cols()) throw ConfigError("random effect: coefficient count mismatch");
  return contrast * beta;
}

Eigen::MatrixXd RandomEffect::columns_for(const std::vector<int>& labels) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), contrast.cols());
  if (contrast.cols() == 0) return out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto it = std::lower_bound(levels.begin(), levels.end(), labels[i]);
    if (it == levels.end() || *it != labels[i]) continue;
    out.row(static_cast<Eigen::Index>(i)) = contrast.row(it - levels.begin());
  }
  return out;
}

RandomEffect random_effect_columns(const std::vector<int>& strains) {
  if (strains.empty()) throw ConfigError("random effect needs at least one labelled row");
  RandomEffect re;
  const std::set<int> distinct(strains.begin(), strains.end());
  re.levels.assign(distinct.begin(), distinct.end());
  const auto s = static_cast<Eigen::Index>(re.levels.size());
  re.contrast = Eigen::MatrixXd::Zero(s, std::max<Eigen::Index>(s - 1, 0));
  // Normalized Helmert contrasts.
  for (Eigen::Index k = 1; k < s; ++k) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(k * (k + 1)));
    re.contrast.col(k - 1).head(k).setConstant(scale);
    re.contrast(k, k - 1) = -static_cast<double>(k) * scale;
  }
  re.z = re.columns_for(strains);
  return re;
}

// ---------------------------------------------------------------------------

ModelSpec gc_bias_spec(int time_levels) {
  if (time_levels == 1) throw ConfigError("categorical time needs at least two levels");
  ModelSpec spec;
  spec.covariates = {{"position", false, 0},
                     {"time", time_levels > 0, time_levels},
                     {"gc1", false, 0},
                     {"gc2", false, 0},
                     {"gc3", false, 0}};
  const KernelKind tk = time_levels > 0 ? KernelKind::Categorical : KernelKind::Cubic;
  const auto c = KernelKind::Cubic;
  spec.terms = {{"position", {0}, {c}},
                {"time", {1}, {tk}},
                {"position:time", {0, 1}, {c, tk}},
                {"gc1", {2}, {c}},
                {"gc2", {3}, {c}},
                {"gc3", {4}, {c}},
                {"gc1:gc2", {2, 3}, {c, c}},
                {"gc1:gc3", {2, 4}, {c, c}},
                {"gc2:gc3", {3, 4}, {c, c}},
                {"gc1:gc2:gc3", {2, 3, 4}, {c, c, c}}};
  spec.validate();
  return spec;
}

GcBiasResult fit_gc_bias(const GcBiasData& in, const GcBiasConfig& config) {
  const Eigen::Index n = in.n();
  if (n < 2) throw ConfigError("GC-bias model needs at least two rows");
  if (in.position.size() != n || in.time.size() != n || in.gc.rows() != n) {
    throw ConfigError("GC-bias columns differ in length");
  }
  if (in.gc.cols() != 3) throw ConfigError("GC-bias model expects three GC covariates");
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = in.count[i];
    if (!std::isfinite(y) || y < 0.0 || y != std::floor(y)) {
      throw ConfigError("counts must be nonnegative integers (row " + std::to_string(i) + ")");
    }
  }
  if (in.count.maxCoeff() <= 0.0) {
    throw ConfigError("all counts are zero; nothing to separate from GC bias");
  }

  GcBiasResult out;
  Eigen::MatrixXd raw(n, 5);
  raw.col(0) = in.position;
  raw.col(1) = in.time;
  raw.rightCols(3) = in.gc;
  int levels = 0;
  if (config.time_categorical) {
    const std::set<double> labels(in.time.data(), in.time.data() + n);
    out.time_labels.assign(labels.begin(), labels.end());
    levels = static_cast<int>(out.time_labels.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      raw(i, 1) = static_cast<double>(
          std::lower_bound(out.time_labels.begin(), out.time_labels.end(), in.time[i]) -
          out.time_labels.begin());
    }
  }
  out.spec = gc_bias_spec(levels);
  out.scaling = CovariateScaling::fit(out.spec, raw);
  out.data.x = out.scaling.apply(out.spec, raw);
  out.data.y = in.count;

  const Family family = Family::poisson();
  const std::size_t m = build_null_basis(out.spec).size();
  const std::size_t nstar = config.nstar > 0
                                ? config.nstar
                                : default_nstar(static_cast<std::size_t>(n), 4, config.nstar_mult, m);
  const Eigen::VectorXd stats = slicing_statistics(out.data, family);
  const int k = config.k > 0 ? config.k : scott_slice_count(stats);
  const Slicing slicing = slice(stats, k);
  out.basis = adaptive_sample(slicing, allocate(slicing, nstar), config.seed, m);
  out.design = build_design(out.spec, out.data.x, out.basis);
  out.fit = tune(out.data, family, out.design, config.search).fit;

  for (const auto& t : out.spec.terms) {
    if (t.name.rfind("gc", 0) == 0) out.gc_terms.push_back(t.name);
  }
  const Eigen::MatrixXd parts = term_contributions(out.design, out.fit);
  // The GC part is removed centered at its data mean, so the overall level
  // stays with the constant whichever term carries it.
  Eigen::VectorXd gc_sum = Eigen::VectorXd::Zero(n);
  for (std::size_t t = 0; t < out.spec.terms.size(); ++t) {
    if (out.spec.terms[t].name.rfind("gc", 0) == 0) gc_sum += parts.col(static_cast<Eigen::Index>(t) + 1);
  }
  const Eigen::VectorXd eta0 = parts.rowwise().sum() - gc_sum +
                               Eigen::VectorXd::Constant(n, gc_sum.mean());
  out.corrected = eta0.array().exp();
  out.fitted = out.fit.eta.array().exp();
  out.quasi_r2 = quasi_r2(out.fit, out.data, family);
  out.gc_projection = kl_project(out.fit, out.design, out.data, family, out.gc_terms);
  return out;
}

GcBiasData simulate_gc_bias(const GcSimConfig& config, Eigen::VectorXd* truth_corrected) {
  if (config.positions < 2 || config.times < 2) {
    throw ConfigError("simulation needs at least two positions and two times");
  }
  Rng rng = Rng::substream(config.seed, 0x6C);
  const Eigen::Index n = static_cast<Eigen::Index>(config.positions) * config.times;
  GcBiasData out;
  out.position.resize(n);
  out.time.resize(n);
  out.gc.resize(n, 3);
  out.count.resize(n);
  if (truth_corrected) truth_corrected->resize(n);
  Eigen::Index i = 0;
  for (int j = 0; j < config.positions; ++j) {
    const double u = static_cast<double>(j) / (config.positions - 1);
    for (int t = 0; t < config.times; ++t) {
      const double v = static_cast<double>(t) / (config.times - 1);
      Eigen::Vector3d x(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8));
      const double eta0 = 0.8 * std::sin(kTwoPi * u) + 0.6 * v - 0.5 * u * v;
      const double egc = 1.2 * (x[0] - 0.5) - 4.0 * (x[1] - 0.5) * (x[1] - 0.5) +
                         2.0 * (x[0] - 0.5) * (x[2] - 0.5);
      const double lambda = std::exp(config.baseline + eta0 + config.gc_strength * egc);
      std::poisson_distribution<int> po(lambda);
      out.position[i] = j + 1;
      out.time[i] = t + 1;
      out.gc.row(i) = x.transpose();
      out.count[i] = po(rng.engine());
      if (truth_corrected) (*truth_corrected)[i] = std::exp(config.baseline + eta0);
      ++i;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Window {
  long long start;
  std::vector<std::size_t> rows;
};

DmrSegment fit_window(const MethylTrack& track, const Window& w, int generations,
                      const DmrConfig& config) {
  DmrSegment seg;
  seg.start = w.start;
  seg.end = w.start + config.width;
  std::vector<std::size_t> covered;
  std::set<long long> positions;
  std::set<int> gens;
  for (std::size_t r : w.rows) {
    if (track.total[static_cast<Eigen::Index>(r)] > 0.0) {
      covered.push_back(r);
      positions.insert(track.position[r]);
      gens.insert(track.generation[r]);
    }
  }
  seg.rows = covered.size();
  seg.positions = positions.size();
  const std::size_t nstar = static_cast<std::size_t>(config.k) * config.per_slice;
  seg.nstar = nstar;
  const std::size_t floor_rows = config.min_rows > 0 ? config.min_rows : nstar;
  if (covered.size() < floor_rows) {
    seg.skipped = true;
    seg.reason = std::to_string(covered.size()) + " covered rows, fewer than " +
                 std::to_string(floor_rows);
    return seg;
  }
  if (gens.size() < 2) {
    seg.skipped = true;
    seg.reason = "a single generation is covered";
    return seg;
  }

  const auto n = static_cast<Eigen::Index>(covered.size());
  Dataset data;
  data.x.resize(n, 2);
  data.y.resize(n);
  data.total.resize(n);
  std::vector<int> strains(covered.size());
  const double span = static_cast<double>(std::max<long long>(config.width - 1, 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t r = covered[static_cast<std::size_t>(i)];
    data.x(i, 0) = std::clamp(static_cast<double>(track.position[r] - w.start) / span, 0.0, 1.0);
    data.x(i, 1) = track.generation[r];
    data.y[i] = track.methylated[static_cast<Eigen::Index>(r)];
    data.total[i] = track.total[static_cast<Eigen::Index>(r)];
    strains[static_cast<std::size_t>(i)] = track.strain[r];
  }
  data.group = strains;

  try {
    const ModelSpec spec =
        make_anova_spec({{"i", false, 0}, {"g", true, generations}}, 2);
    const Family family = Family::binomial();
    const std::size_t m = build_null_basis(spec).size();
    const Slicing slicing = slice(slicing_statistics(data, family), config.k);
    const std::uint64_t seed = splitmix64(config.seed ^ splitmix64(static_cast<std::uint64_t>(w.start)));
    const EffectiveBasis basis = adaptive_sample(slicing, allocate(slicing, nstar), seed, m);
    const RandomEffect re = random_effect_columns(strains);
    const Design design = build_design(spec, data.x, basis, re.z);
    const FitResult fit = tune(data, family, design, config.search).fit;
    ProjectionOptions opts;
    opts.threshold = config.threshold;
    seg.drop_generation = kl_project(fit, design, data, family, {"g", "i:g"}, opts);
    seg.drop_interaction = kl_project(fit, design, data, family, {"i:g"}, opts);
    seg.lambda = fit.lambda;
    seg.theta_b = re.present() ? fit.theta_b : 0.0;
    seg.converged = fit.converged;
    seg.strain_levels = re.levels;
    seg.strain_effects = re.present() ? re.effects(fit.b) : Eigen::VectorXd::Zero(1);
    seg.flagged = seg.drop_generation.exceeds_threshold();
  } catch (const NumericalError& e) {
    seg.skipped = true;
    seg.reason = std::string("fit failed: ") + e.what();
  }
  return seg;
}

}  // namespace

std::vector<DmrSegment> scan_dmr(const MethylTrack& track, const DmrConfig& config) {
  const std::size_t n = track.size();
  if (track.strain.size() != n || track.generation.size() != n ||
      static_cast<std::size_t>(track.methylated.size()) != n ||
      static_cast<std::size_t>(track.total.size()) != n) {
    throw ConfigError("methylation track columns differ in length");
  }
  if (config.width < 2) throw ConfigError("window width must be at least 2");
  if (config.k < 1 || config.per_slice < 1) throw ConfigError("K and n_k must be positive");
  for (std::size_t i = 0; i < n; ++i) {
    const double y = track.methylated[static_cast<Eigen::Index>(i)];
    const double t = track.total[static_cast<Eigen::Index>(i)];
    if (!(y >= 0.0) || !(t >= y) || y != std::floor(y) || t != std::floor(t)) {
      throw DataFormatError("row " + std::to_string(i) + ": need integer 0 <= methylated <= total");
    }
    if (i > 0 && track.position[i] < track.position[i - 1]) {
      throw DataFormatError("positions must be sorted (row " + std::to_string(i) + ")");
    }
    if (track.generation[i] < 0) throw DataFormatError("generation labels must be nonnegative");
  }
  const std::set<int> gen_labels(track.generation.begin(), track.generation.end());
  if (gen_labels.size() < 2) throw ConfigError("a DMR scan needs at least two generations");
  // Generations are mapped to 0-based levels shared by every window.
  const std::vector<int> gens(gen_labels.begin(), gen_labels.end());
  MethylTrack mapped = track;
  for (auto& g : mapped.generation) {
    g = static_cast<int>(std::lower_bound(gens.begin(), gens.end(), g) - gens.begin());
  }

  std::vector<Window> windows;
  for (std::size_t i = 0; i < n; ++i) {
    const long long p = track.position[i];
    const long long w = (p >= 0 ? p : p - config.width + 1) / config.width;
    const long long start = w * config.width;
    if (windows.empty() || windows.back().start != start) windows.push_back({start, {}});
    windows.back().rows.push_back(i);
  }

  std::vector<DmrSegment> out(windows.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < windows.size(); i = next++) {
      out[i] = fit_window(mapped, windows[i], static_cast<int>(gens.size()), config);
    }
  };
  const int workers = std::clamp<int>(config.threads, 1, std::max<int>(1, static_cast<int>(windows.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  }
  return out;
}

MethylTrack simulate_methylation(const DmrSimConfig& config) {
  if (config.windows < 1 || config.positions_per_window < 1 || config.strains < 1 ||
      config.generations < 2) {
    throw ConfigError("simulation needs windows, positions, strains and two generations");
  }
  Rng rng = Rng::substream(config.seed, 0xD3);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> strain_offset(static_cast<std::size_t>(config.strains));
  for (auto& b : strain_offset) b = config.strain_sd * normal(rng.engine());
  const std::set<int> planted(config.planted.begin(), config.planted.end());

  MethylTrack out;
  std::vector<double> y, t;
  for (int w = 0; w < config.windows; ++w) {
    const long long start = w * config.width;
    const double phase = rng.uniform(0.0, kTwoPi);
    const double level = rng.uniform(-0.5, 0.5);
    std::set<long long> pos;
    while (static_cast<int>(pos.size()) < config.positions_per_window) {
      pos.insert(start + static_cast<long long>(rng.below(static_cast<std::size_t>(config.width))));
    }
    const bool shifted = planted.count(w) > 0;
    for (long long p : pos) {
      const double u = static_cast<double>(p - start) / static_cast<double>(config.width);
      const double base = level + 1.2 * std::sin(kTwoPi * u + phase);
      for (int s = 0; s < config.strains; ++s) {
        for (int g = 0; g < config.generations; ++g) {
          double eta = base + strain_offset[static_cast<std::size_t>(s)];
          if (shifted) eta += config.shift * (static_cast<double>(g) / (config.generations - 1) - 0.5);
          std::poisson_distribution<int> depth(config.mean_depth);
          const int total = depth(rng.engine());
          std::binomial_distribution<int> meth(total, logistic(eta));
          out.position.push_back(p);
          out.strain.push_back(s);
          out.generation.push_back(g);
          t.push_back(total);
          y.push_back(total > 0 ? meth(rng.engine()) : 0);
        }
      }
    }
  }
  out.methylated = Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  out.total = Eigen::Map<Eigen::VectorXd>(t.data(), static_cast<Eigen::Index>(t.size()));
  return out;
}

}  // namespace abss
