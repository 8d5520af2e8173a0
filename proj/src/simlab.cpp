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

#include "abss/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <map>
#include <thread>

#include "abss/basis_select.hpp"
#include "abss/error.hpp"
#include "abss/rng.hpp"

namespace abss {
namespace {

constexpr double kPi = 3.14159265358979323846;

double median_of(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// Linear-interpolation quantile (type 7).
double quantile_of(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

double blocks1(double x) {
  double v = 0.0;
  for (std::size_t j = 0; j < kBlocksKnots.size(); ++j) {
    if (x >= kBlocksKnots[j]) v += kBlocksHeights[j];
  }
  return v;
}

double blocks2(double x1, double /*x2*/) { return blocks1(x1); }

Eigen::MatrixXd copula_sigma(int d) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Identity(d, d);
  for (int j = 0; j + 1 < d; ++j) s(j, j + 1) = s(j + 1, j) = 0.5;
  return s;
}

double nonparanormal_density(const Eigen::VectorXd& x, const Eigen::VectorXd& alpha) {
  const auto d = x.size();
  if (alpha.size() != d) throw ConfigError("one shape parameter per coordinate required");
  if ((alpha.array() <= 0.0).any()) throw ConfigError("shape parameters must be positive");
  const Eigen::MatrixXd sigma = copula_sigma(static_cast<int>(d));
  const Eigen::LLT<Eigen::MatrixXd> chol(sigma);
  Eigen::VectorXd f(d);
  double jac = 1.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    double xj = x[j];
    if (std::abs(xj) < 1e-12) xj = std::signbit(xj) ? -1e-12 : 1e-12;
    const double a = alpha[j];
    const double ax = std::abs(xj);
    f[j] = a * (xj < 0 ? -1.0 : 1.0) * std::pow(ax, a);
    jac *= a * a * std::pow(ax, a - 1.0);
  }
  const double quad = f.dot(chol.solve(f));
  const double det = chol.matrixL().toDenseMatrix().diagonal().prod();  // |Sigma|^{1/2}
  const double v = std::pow(2.0 * kPi, -0.5 * static_cast<double>(d)) / det *
                   std::exp(-0.5 * quad) * jac;
  if (!std::isfinite(v)) throw NumericalError("nonparanormal density is not finite");
  return v;
}

std::string to_string(ScenarioName name) {
  switch (name) {
    case ScenarioName::BlocksNegBin: return "blocks_negbin";
    case ScenarioName::Copula2Poisson: return "copula2_poisson";
    case ScenarioName::Copula4Binomial: return "copula4_binomial";
  }
  return "unknown";
}

std::vector<std::string> scenario_names() {
  return {"blocks_negbin", "copula2_poisson", "copula4_binomial"};
}

ScenarioName parse_scenario(const std::string& name) {
  if (name == "blocks_negbin") return ScenarioName::BlocksNegBin;
  if (name == "copula2_poisson") return ScenarioName::Copula2Poisson;
  if (name == "copula4_binomial") return ScenarioName::Copula4Binomial;
  std::string valid;
  for (const auto& s : scenario_names()) valid += (valid.empty() ? "" : ", ") + s;
  throw ConfigError("unknown scenario '" + name + "' (valid: " + valid + ")");
}

Scenario make_scenario(ScenarioName name) {
  Scenario s;
  s.name = name;
  switch (name) {
    case ScenarioName::BlocksNegBin:
      s.d = 2;
      s.family = Family::negative_binomial(3.0);
      s.lo = 0.0;
      s.hi = 1.0;
      break;
    case ScenarioName::Copula2Poisson:
      s.d = 2;
      s.family = Family::poisson();
      s.alpha = Eigen::Vector2d(2.0, 3.0);
      s.lo = -1.0;
      s.hi = 1.0;
      break;
    case ScenarioName::Copula4Binomial:
      s.d = 4;
      s.family = Family::binomial();
      s.alpha = Eigen::VectorXd::Constant(4, 0.1);
      s.lo = -1.0;
      s.hi = 1.0;
      break;
  }
  return s;
}

ModelSpec Scenario::fitted_spec() const {
  std::vector<Covariate> cov;
  for (int j = 0; j < d; ++j) cov.push_back({"x" + std::to_string(j + 1), false, 0});
  return make_anova_spec(cov, d == 2 ? 2 : 1);
}

std::size_t Scenario::resolved_nstar() const {
  if (nstar > 0) return nstar;
  const std::size_t m = build_null_basis(fitted_spec()).size();
  return default_nstar(n, 4, nstar_mult, m);
}

double truth_parameter(const Scenario& s, const Eigen::VectorXd& x) {
  switch (s.name) {
    case ScenarioName::BlocksNegBin: return (blocks2(x[0], x[1]) + 2.5) / 8.0;
    case ScenarioName::Copula2Poisson: {
      const double det_half = std::sqrt(copula_sigma(s.d).determinant());
      return 1.0 + 2.0 * std::pow(2.0 * kPi, 0.5 * s.d) * det_half *
                       nonparanormal_density(x, s.alpha);
    }
    case ScenarioName::Copula4Binomial: {
      const double v = nonparanormal_density(x, s.alpha);
      return 1.0 / (1.0 + std::exp(-v));
    }
  }
  return 0.0;
}

SimData generate(const Scenario& s, int replicate) {
  if (s.n < 2) throw ConfigError("scenario needs at least two observations");
  Rng rng = Rng::substream(s.seed, 2 * static_cast<std::uint64_t>(replicate));
  SimData out;
  const auto n = static_cast<Eigen::Index>(s.n);
  out.raw.resize(n, s.d);
  out.data.x.resize(n, s.d);
  out.data.y.resize(n);
  out.truth.resize(n);
  if (s.family.kind == FamilyKind::Binomial) out.data.total = Eigen::VectorXd::Constant(n, s.trials);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd x(s.d);
    for (int j = 0; j < s.d; ++j) x[j] = rng.uniform(s.lo, s.hi);
    out.raw.row(i) = x.transpose();
    out.data.x.row(i) = ((x.array() - s.lo) / (s.hi - s.lo)).matrix().transpose();
    const double t = truth_parameter(s, x);
    out.truth[i] = t;
    switch (s.family.kind) {
      case FamilyKind::NegativeBinomial: {
        std::negative_binomial_distribution<int> nb(static_cast<int>(s.family.nb_shape), t);
        out.data.y[i] = nb(rng.engine());
        break;
      }
      case FamilyKind::Poisson: {
        std::poisson_distribution<int> po(t);
        out.data.y[i] = po(rng.engine());
        break;
      }
      case FamilyKind::Binomial: {
        std::binomial_distribution<int> bi(static_cast<int>(s.trials), t);
        out.data.y[i] = bi(rng.engine());
        break;
      }
      case FamilyKind::Gaussian: {
        std::normal_distribution<double> g(t, 1.0);
        out.data.y[i] = g(rng.engine());
        break;
      }
    }
  }
  return out;
}

double mse(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
  if (estimate.size() != truth.size()) throw ConfigError("MSE: vectors differ in length");
  return (estimate - truth).squaredNorm();
}

std::uint64_t basis_seed(std::uint64_t seed, int replicate, bool adaptive) {
  return splitmix64(seed ^ splitmix64(2 * static_cast<std::uint64_t>(replicate) + 1 +
                                      (adaptive ? 0x5AB5ULL << 32 : 0x0B5ULL << 32)));
}

ReplicateRow fit_replicate(const Scenario& s, const SimData& sim, int replicate, bool adaptive) {
  ReplicateRow row;
  row.replicate = replicate;
  row.method = adaptive ? "ABS" : "UBS";
  row.seed = basis_seed(s.seed, replicate, adaptive);
  try {
    const ModelSpec spec = s.fitted_spec();
    const std::size_t m = build_null_basis(spec).size();
    row.nstar = s.resolved_nstar();
    EffectiveBasis basis;
    if (adaptive) {
      const Eigen::VectorXd stats = slicing_statistics(sim.data, s.family);
      row.k = s.k > 0 ? s.k : scott_slice_count(stats);
      const Slicing slicing = slice(stats, row.k);
      row.k = slicing.k;
      basis = adaptive_sample(slicing, allocate(slicing, row.nstar), row.seed, m);
    } else {
      row.k = 1;
      basis = uniform_sample(sim.data.x.rows(), row.nstar, row.seed);
    }
    const Design design = build_design(spec, sim.data.x, basis);
    const TuneResult tuned = tune(sim.data, s.family, design, s.search);
    Eigen::VectorXd est(tuned.fit.eta.size());
    for (Eigen::Index i = 0; i < est.size(); ++i) {
      est[i] = natural_parameter(s.family, clamp_eta(s.family, tuned.fit.eta[i]));
    }
    row.mse = mse(est, sim.truth);
    row.converged = tuned.fit.converged;
    row.lambda = tuned.fit.lambda;
    row.gacv = tuned.fit.gacv;
  } catch (const std::exception& e) {
    row.failed = true;
    row.error = e.what();
    row.mse = std::nan("");
  }
  return row;
}

ExperimentSummary summarize(const std::vector<ReplicateRow>& rows) {
  ExperimentSummary s;
  std::vector<double> a, u;
  std::map<int, std::pair<const ReplicateRow*, const ReplicateRow*>> by_rep;
  for (const auto& r : rows) {
    auto& slot = by_rep[r.replicate];
    if (r.method == "ABS") {
      slot.first = &r;
      if (r.failed) ++s.failures_abs; else a.push_back(r.mse);
    } else {
      slot.second = &r;
      if (r.failed) ++s.failures_ubs; else u.push_back(r.mse);
    }
  }
  for (const auto& [rep, pair] : by_rep) {
    if (!pair.first || !pair.second || pair.first->failed || pair.second->failed) continue;
    ++s.compared;
    if (pair.first->mse < pair.second->mse) ++s.abs_wins;
  }
  s.median_abs = median_of(a);
  s.median_ubs = median_of(u);
  s.iqr_abs = quantile_of(a, 0.75) - quantile_of(a, 0.25);
  s.iqr_ubs = quantile_of(u, 0.75) - quantile_of(u, 0.25);
  return s;
}

ExperimentResult run_experiment(const Scenario& scenario, int threads) {
  if (scenario.reps < 1) throw ConfigError("at least one replicate required");
  ExperimentResult out;
  out.scenario = scenario;
  out.rows.resize(2 * static_cast<std::size_t>(scenario.reps));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < scenario.reps; r = next++) {
      const SimData sim = generate(scenario, r);
      out.rows[2 * static_cast<std::size_t>(r)] = fit_replicate(scenario, sim, r, true);
      out.rows[2 * static_cast<std::size_t>(r) + 1] = fit_replicate(scenario, sim, r, false);
    }
  };
  const int workers = std::clamp(threads, 1, scenario.reps);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  }
  out.summary = summarize(out.rows);
  return out;
}

void write_experiment_csv(const std::vector<ReplicateRow>& rows, std::ostream& out) {
  out << "replicate,method,mse,nstar,K,seed,converged,lambda,gacv,error\n";
  for (const auto& r : rows) {
    std::ostringstream line;
    line << std::setprecision(17);
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    line << r.replicate << ',' << r.method << ',' << r.mse << ',' << r.nstar << ',' << r.k << ','
         << r.seed << ',' << (r.converged ? 1 : 0) << ',' << r.lambda << ',' << r.gacv << ','
         << err << '\n';
    out << line.str();
  }
}

}  // namespace abss
