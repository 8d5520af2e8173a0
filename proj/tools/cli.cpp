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

#include "cli.hpp"

#include <functional>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "abss/error.hpp"

namespace abss::cli {

namespace {

/// Copies options given on the command line into the config; absent ones
/// keep the command defaults.
class Binder {
 public:
  explicit Binder(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* opt(const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* o = app_->add_option(flag, *value, help);
    setters_.push_back([value, o, key](Json& c) {
      if (o->count()) c[key] = *value;
    });
    return o;
  }

  CLI::Option* flag(const std::string& flag, const std::string& key, const std::string& help) {
    CLI::Option* o = app_->add_flag(flag, help);
    setters_.push_back([o, key](Json& c) {
      if (o->count()) c[key] = true;
    });
    return o;
  }

  /// "scott" or an integer.
  void slices(const std::string& key = "k") {
    auto value = std::make_shared<std::string>();
    CLI::Option* o = app_->add_option("--k", *value, "slice count K or 'scott'");
    setters_.push_back([value, o, key](Json& c) {
      if (!o->count()) return;
      try {
        std::size_t used = 0;
        const int k = std::stoi(*value, &used);
        if (used == value->size()) {
          c[key] = k;
          return;
        }
      } catch (const std::exception&) {
      }
      c[key] = *value;
    });
  }

  void search() {
    sub<double>("--log10-lambda-lo", "log10_lambda_lo", "lower log10 lambda bound");
    sub<double>("--log10-lambda-hi", "log10_lambda_hi", "upper log10 lambda bound");
    sub<int>("--golden-evals", "golden_evals", "lambda search evaluations");
    sub<int>("--simplex-evals", "simplex_evals", "theta search evaluations");
    CLI::Option* o = app_->add_flag("--no-theta-tuning", "keep initial thetas fixed");
    setters_.push_back([o](Json& c) {
      if (o->count()) c["search"]["tune_thetas"] = false;
    });
  }

  void apply(Json& c) const {
    for (const auto& s : setters_) s(c);
  }

 private:
  template <typename T>
  void sub(const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* o = app_->add_option(flag, *value, help);
    setters_.push_back([value, o, key](Json& c) {
      if (o->count()) c["search"][key] = *value;
    });
  }

  CLI::App* app_;
  std::vector<std::function<void(Json&)>> setters_;
};

void common_io(Binder& b, bool data = true) {
  if (data) b.opt<std::string>("--data", "data", "input CSV")->required();
  b.opt<std::string>("--out", "out", "output directory")->required();
  b.opt<std::string>("--delimiter", "delimiter", "input delimiter: one character or 'tab'");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive basis selection for exponential-family smoothing splines", "abss"};
  app.require_subcommand(1);
  std::vector<std::pair<CLI::App*, std::unique_ptr<Binder>>> subs;
  std::vector<std::string> drop_sets;
  auto add = [&](const std::string& name, const std::string& help) -> Binder& {
    CLI::App* sub = app.add_subcommand(name, help);
    subs.emplace_back(sub, std::make_unique<Binder>(sub));
    return *subs.back().second;
  };

  {
    Binder& b = add("fit", "fit a smoothing spline ANOVA model");
    common_io(b);
    b.opt<std::string>("--family", "family", "gaussian, poisson, binomial or negbin")->required();
    b.opt<double>("--nb-shape", "nb_shape", "negative binomial shape r");
    b.opt<std::string>("--response", "response", "response column (default y)");
    b.opt<std::string>("--total", "total", "binomial total column (default total)");
    b.opt<std::string>("--group", "group", "random-effect label column");
    b.opt<std::string>("--spec", "spec", "model spec JSON");
    b.opt<int>("--order", "order", "interaction order without a spec (default 1)");
    b.opt<std::string>("--kernel", "kernel", "continuous kernel without a spec: cubic or linear");
    b.opt<std::vector<std::string>>("--categorical", "categorical", "categorical columns without a spec");
    b.opt<std::string>("--method", "method", "basis selection: adaptive or uniform");
    b.opt<std::size_t>("--nstar", "nstar", "basis size; 0 applies the rule");
    b.opt<std::string>("--nstar-rule", "nstar_rule", "cubic (n^{2/9}) or linear (n^{2/5})");
    b.opt<double>("--nstar-mult", "nstar_mult", "multiplier of the n* rule (default 10)");
    b.slices();
    b.opt<std::uint64_t>("--seed", "seed", "basis sampling seed");
    b.search();
  }
  {
    Binder& b = add("predict", "evaluate a stored fit at new points");
    common_io(b);
    b.opt<std::string>("--fit", "fit", "directory written by fit")->required();
  }
  {
    Binder& b = add("diagnose", "Kullback-Leibler projections of a stored fit");
    b.opt<std::string>("--fit", "fit", "directory written by fit")->required();
    b.opt<std::string>("--data", "data", "training CSV (default: the one recorded in the fit)");
    b.opt<std::string>("--out", "out", "output directory")->required();
    b.opt<std::string>("--delimiter", "delimiter", "input delimiter: one character or 'tab'");
    b.opt<double>("--threshold", "threshold", "rho threshold (default 0.03)");
    subs.back().first->add_option("--drop", drop_sets,
                                  "comma-separated terms to drop; repeatable; 'none' or 'all'");
  }
  {
    Binder& b = add("simulate", "ABS versus UBS simulation experiment");
    b.opt<std::string>("--scenario", "scenario", "blocks_negbin, copula2_poisson or copula4_binomial")
        ->required();
    b.opt<std::string>("--out", "out", "output directory")->required();
    b.opt<int>("--reps", "reps", "replicates");
    b.opt<std::uint64_t>("--seed", "seed", "experiment seed");
    b.opt<std::size_t>("--n", "n", "observations per replicate");
    b.opt<std::size_t>("--nstar", "nstar", "basis size; 0 applies the rule");
    b.opt<double>("--nstar-mult", "nstar_mult", "multiplier of the n* rule");
    b.slices();
    b.opt<int>("--threads", "threads", "worker threads");
    b.search();
  }
  {
    Binder& b = add("gc-bias", "GC-bias time-course Poisson model");
    common_io(b);
    b.opt<std::size_t>("--nstar", "nstar", "basis size; 0 applies the rule");
    b.opt<double>("--nstar-mult", "nstar_mult", "multiplier of the n* rule");
    b.slices();
    b.flag("--time-categorical", "time_categorical", "treat time as categorical");
    b.opt<std::uint64_t>("--seed", "seed", "basis sampling seed");
    b.search();
  }
  {
    Binder& b = add("scan-dmr", "windowed differential methylation scan");
    common_io(b);
    b.opt<long long>("--width", "width", "window width in positions (default 20000)");
    b.opt<int>("--k", "k", "slices per window (default 10)");
    b.opt<std::size_t>("--per-slice", "per_slice", "anchors per slice (default 10)");
    b.opt<double>("--threshold", "threshold", "rho threshold (default 0.03)");
    b.opt<std::uint64_t>("--seed", "seed", "basis sampling seed");
    b.opt<int>("--threads", "threads", "worker threads");
    b.opt<std::size_t>("--min-rows", "min_rows", "rows needed to fit a window; 0 means n*");
    b.search();
  }
  {
    Binder& b = add("generate", "write a synthetic dataset");
    b.opt<std::string>("--kind", "kind",
                       "blocks_negbin, copula2_poisson, copula4_binomial, gc or methyl")
        ->required();
    b.opt<std::string>("--out", "out", "output directory")->required();
    b.opt<std::uint64_t>("--seed", "seed", "generator seed");
    b.opt<std::size_t>("--n", "n", "observations (scenarios)");
    b.opt<int>("--replicate", "replicate", "replicate index (scenarios)");
    b.opt<int>("--positions", "positions", "positions per gene (gc)");
    b.opt<int>("--times", "times", "time points (gc)");
    b.opt<double>("--gc-strength", "gc_strength", "GC effect multiplier (gc)");
    b.opt<double>("--baseline", "baseline", "log-scale level (gc)");
    b.opt<int>("--windows", "windows", "windows (methyl)");
    b.opt<std::vector<int>>("--planted", "planted", "windows with a generation shift (methyl)");
    b.opt<int>("--positions-per-window", "positions_per_window", "positions per window (methyl)");
    b.opt<int>("--strains", "strains", "strains (methyl)");
    b.opt<int>("--generations", "generations", "generations (methyl)");
    b.opt<double>("--depth", "mean_depth", "mean read depth (methyl)");
    b.opt<double>("--shift", "shift", "logit shift across generations (methyl)");
    b.opt<long long>("--width", "width", "window width (methyl)");
  }
  CLI::App* replay = app.add_subcommand("replay", "rerun a manifest");
  std::string manifest_path, replay_out;
  replay->add_option("manifest", manifest_path, "manifest.json")->required();
  replay->add_option("--out", replay_out, "output directory override");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (replay->parsed()) {
      Json manifest = read_json_file(manifest_path);
      if (!manifest.is_object() || manifest.value("schema_version", 0) != kSchemaVersion) {
        throw ConfigError("unsupported manifest schema in '" + manifest_path + "'");
      }
      Json config = manifest.at("config");
      if (!replay_out.empty()) config["out"] = replay_out;
      return execute(manifest.at("command").get<std::string>(), config, out);
    }
    for (auto& [sub, binder] : subs) {
      if (!sub->parsed()) continue;
      Json config = Json::object();
      binder->apply(config);
      if (sub->get_name() == "diagnose") {
        Json drops = Json::array();
        for (const auto& d : drop_sets) {
          Json set = Json::array();
          std::stringstream ss(d);
          std::string name;
          while (std::getline(ss, name, ',')) {
            if (!name.empty()) set.push_back(name);
          }
          drops.push_back(set);
        }
        if (!drops.empty()) config["drops"] = drops;
      }
      return execute(sub->get_name(), config, out);
    }
    throw ConfigError("no command given");
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataFormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const Json::exception& e) {
    err << "error: malformed configuration: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace abss::cli
