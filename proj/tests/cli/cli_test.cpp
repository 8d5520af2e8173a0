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

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "abss/io.hpp"
#include "cli.hpp"

using namespace abss;
namespace fs = std::filesystem;

namespace {

const fs::path kData = ABSS_TEST_DATA_DIR;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Fresh directory per test.
fs::path scratch() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const fs::path dir = fs::temp_directory_path() / "abss_cli_tests" /
                       (std::string(info->test_suite_name()) + "." + info->name());
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

/// Every file of `dir` before and after replaying its manifest in place.
void expect_replay_identical(const fs::path& dir) {
  std::map<std::string, std::string> before;
  for (const auto& e : fs::directory_iterator(dir)) before[e.path().filename()] = slurp(e.path());
  const Result r = invoke({"replay", (dir / "manifest.json").string()});
  ASSERT_TRUE(r.code == 0 || r.code == 2) << r.err;
  std::map<std::string, std::string> after;
  for (const auto& e : fs::directory_iterator(dir)) after[e.path().filename()] = slurp(e.path());
  ASSERT_EQ(before.size(), after.size());
  for (const auto& [name, bytes] : before) EXPECT_EQ(bytes, after[name]) << name;
}

CsvTable table(const fs::path& p) { return read_csv_file(p.string()); }

}  // namespace

TEST(CliFit, MinimalPoissonFixture) {
  const fs::path dir = scratch();
  const Result r = invoke({"fit", "--data", (kData / "poisson10.csv").string(), "--family", "poisson",
                     "--out", (dir / "fit").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"fit.json", "basis.json", "fitted.csv", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir / "fit" / f)) << f;
  }
  const CsvTable fitted = table(dir / "fit" / "fitted.csv");
  EXPECT_EQ(fitted.header, (std::vector<std::string>{"row", "eta", "mu"}));
  EXPECT_EQ(fitted.rows.size(), 10u);
  expect_replay_identical(dir / "fit");
}

TEST(CliFit, ManifestMaterializesDefaults) {
  const fs::path dir = scratch();
  ASSERT_EQ(invoke({"fit", "--data", (kData / "poisson10.csv").string(), "--family", "poisson",
                 "--out", dir.string()})
                .code,
            0);
  const Json m = read_json_file((dir / "manifest.json").string());
  EXPECT_EQ(m["schema_version"], 1);
  EXPECT_EQ(m["command"], "fit");
  const Json& c = m["config"];
  for (const char* key : {"data", "family", "nb_shape", "response", "total", "group", "order",
                          "kernel", "method", "nstar", "nstar_rule", "nstar_mult", "k", "k_rule",
                          "seed", "search", "delimiter", "out"}) {
    EXPECT_TRUE(c.contains(key)) << key;
  }
  EXPECT_TRUE(fs::path(c["data"].get<std::string>()).is_absolute());
  EXPECT_TRUE(c["k"].is_number_integer());
  EXPECT_EQ(c["k_rule"], "scott");
  EXPECT_EQ(c["search"]["newton"]["max_iter"], 30);
}

TEST(CliFit, NstarRuleAt1600) {
  const fs::path dir = scratch();
  ASSERT_EQ(invoke({"generate", "--kind", "blocks_negbin", "--n", "1600", "--out",
                 (dir / "gen").string()})
                .code,
            0);
  const Result r = invoke({"fit", "--data", (dir / "gen" / "data.csv").string(), "--family", "negbin",
                     "--nstar-rule", "cubic", "--nstar-mult", "10", "--out",
                     (dir / "fit").string()});
  ASSERT_TRUE(r.code == 0 || r.code == 2) << r.err;
  const Json m = read_json_file((dir / "fit" / "manifest.json").string());
  EXPECT_EQ(m["config"]["nstar"], 52);
  const Json b = read_json_file((dir / "fit" / "basis.json").string());
  EXPECT_EQ(b["anchors"].size(), 52u);
  EXPECT_EQ(b["anchor_points"].size(), 52u);
}

TEST(CliFit, MissingFamilyIsUsageError) {
  const fs::path dir = scratch();
  const Result r = invoke({"fit", "--data", (kData / "poisson10.csv").string(), "--out", dir.string()});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("--family"), std::string::npos);
}

TEST(CliFit, MalformedRowNamesLine) {
  const fs::path dir = scratch();
  write_file(dir / "bad.csv", "x,y\n0.1,1\n0.2\n0.3,2\n");
  const Result r = invoke({"fit", "--data", (dir / "bad.csv").string(), "--family", "poisson", "--out",
                     (dir / "o").string()});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
}

TEST(CliFit, NonNumericCellNamesLineAndColumn) {
  const fs::path dir = scratch();
  write_file(dir / "bad.csv", "x,y\n0.1,1\n0.2,1\nabc,2\n");
  const Result r = invoke({"fit", "--data", (dir / "bad.csv").string(), "--family", "poisson", "--out",
                     (dir / "o").string()});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("line 4"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("'x'"), std::string::npos) << r.err;
}

TEST(CliFit, InvalidResponseIsDataError) {
  const fs::path dir = scratch();
  write_file(dir / "bad.csv", "x,y\n0.1,1\n0.2,-1\n0.3,2\n");
  const Result r = invoke({"fit", "--data", (dir / "bad.csv").string(), "--family", "poisson", "--out",
                     (dir / "o").string()});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
}

TEST(CliFit, UnknownCovariateInSpecNamed) {
  const fs::path dir = scratch();
  write_file(dir / "spec.json",
             R"({"covariates": [{"name": "x"}], "terms": [{"vars": ["x"]}, {"vars": ["zz"]}]})");
  const Result r = invoke({"fit", "--data", (kData / "poisson10.csv").string(), "--family", "poisson",
                     "--spec", (dir / "spec.json").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("zz"), std::string::npos) << r.err;
}

TEST(CliFit, SpecFileAndTabDelimiter) {
  const fs::path dir = scratch();
  std::ostringstream tsv;
  tsv << "x\tdose\ty\n";
  for (int i = 0; i < 40; ++i) {
    tsv << (i + 0.5) / 40.0 << '\t' << (i % 2 ? "high" : "low") << '\t' << (i % 7) + (i % 2) * 3
        << '\n';
  }
  write_file(dir / "d.tsv", tsv.str());
  write_file(dir / "spec.json",
             R"({"covariates": [{"name": "x"}, {"name": "dose", "type": "categorical"}],
                 "terms": [{"vars": ["x"]}, {"vars": ["dose"]}]})");
  const Result r = invoke({"fit", "--data", (dir / "d.tsv").string(), "--delimiter", "tab", "--family",
                     "poisson", "--spec", (dir / "spec.json").string(), "--out",
                     (dir / "fit").string()});
  ASSERT_TRUE(r.code == 0 || r.code == 2) << r.err;
  const Json f = read_json_file((dir / "fit" / "fit.json").string());
  EXPECT_EQ(f["labels"]["dose"], (std::vector<std::string>{"high", "low"}));
  EXPECT_EQ(f["spec"]["covariates"][1]["levels"], 2);
  expect_replay_identical(dir / "fit");
}

TEST(CliPredict, TrainingDataMatchesFitted) {
  const fs::path dir = scratch();
  const std::string data = (kData / "poisson10.csv").string();
  ASSERT_EQ(invoke({"fit", "--data", data, "--family", "poisson", "--out", (dir / "fit").string()})
                .code,
            0);
  const Result r = invoke({"predict", "--fit", (dir / "fit").string(), "--data", data, "--out",
                     (dir / "pred").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const CsvTable a = table(dir / "fit" / "fitted.csv");
  const CsvTable b = table(dir / "pred" / "predictions.csv");
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_NEAR(a.number(i, 1), b.number(i, 1), 1e-10);
    EXPECT_NEAR(a.number(i, 2), b.number(i, 2), 1e-10);
    EXPECT_EQ(b.rows[i][3], "");
  }
  expect_replay_identical(dir / "pred");
}

TEST(CliPredict, OutOfRangeClampedWithWarning) {
  const fs::path dir = scratch();
  const std::string data = (kData / "poisson10.csv").string();
  ASSERT_EQ(invoke({"fit", "--data", data, "--family", "poisson", "--out", (dir / "fit").string()})
                .code,
            0);
  write_file(dir / "new.csv", "x\n2.5\n0.5\n-1\n0.96\n");
  ASSERT_EQ(invoke({"predict", "--fit", (dir / "fit").string(), "--data", (dir / "new.csv").string(),
                 "--out", (dir / "pred").string()})
                .code,
            0);
  const CsvTable p = table(dir / "pred" / "predictions.csv");
  ASSERT_EQ(p.rows.size(), 4u);
  EXPECT_EQ(p.rows[0][3], "clamped");
  EXPECT_EQ(p.rows[1][3], "");
  EXPECT_EQ(p.rows[2][3], "clamped");
  EXPECT_EQ(p.rows[3][3], "");
  // Clamped rows evaluate at the nearest edge of the training range.
  EXPECT_DOUBLE_EQ(p.number(0, 1), p.number(3, 1));
}

TEST(CliPredict, EmptyInputGivesHeaderOnly) {
  const fs::path dir = scratch();
  const std::string data = (kData / "poisson10.csv").string();
  ASSERT_EQ(invoke({"fit", "--data", data, "--family", "poisson", "--out", (dir / "fit").string()})
                .code,
            0);
  write_file(dir / "empty.csv", "x\n");
  const Result r = invoke({"predict", "--fit", (dir / "fit").string(), "--data",
                     (dir / "empty.csv").string(), "--out", (dir / "pred").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir / "pred" / "predictions.csv"), "row,eta,mu,warning\n");
}

TEST(CliPredict, SchemaMismatchIsDataError) {
  const fs::path dir = scratch();
  const std::string data = (kData / "poisson10.csv").string();
  ASSERT_EQ(invoke({"fit", "--data", data, "--family", "poisson", "--out", (dir / "fit").string()})
                .code,
            0);
  write_file(dir / "new.csv", "z\n0.5\n");
  const Result r = invoke({"predict", "--fit", (dir / "fit").string(), "--data",
                     (dir / "new.csv").string(), "--out", (dir / "pred").string()});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("'x'"), std::string::npos) << r.err;
}

TEST(CliDiagnose, LimitCasesAndDefaultThreshold) {
  const fs::path dir = scratch();
  std::ostringstream csv;
  csv << "x1,x2,y\n";
  for (int i = 0; i < 60; ++i) {
    const double x1 = (i % 10 + 0.5) / 10.0, x2 = (i / 10 + 0.5) / 6.0;
    csv << x1 << ',' << x2 << ',' << (i * 7 % 5) + static_cast<int>(6 * x1) << '\n';
  }
  write_file(dir / "d.csv", csv.str());
  ASSERT_EQ(invoke({"fit", "--data", (dir / "d.csv").string(), "--family", "poisson", "--out",
                 (dir / "fit").string()})
                .code,
            0);
  const Result r = invoke({"diagnose", "--fit", (dir / "fit").string(), "--out",
                     (dir / "diag").string(), "--drop", "none", "--drop", "all", "--drop", "x2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const CsvTable p = table(dir / "diag" / "projections.csv");
  ASSERT_EQ(p.rows.size(), 3u);
  EXPECT_EQ(p.rows[0][0], "");
  EXPECT_EQ(p.number(0, 2), 0.0);
  EXPECT_EQ(p.rows[1][0], "x1;x2");
  EXPECT_EQ(p.number(1, 2), 1.0);
  EXPECT_GE(p.number(2, 2), 0.0);
  EXPECT_LE(p.number(2, 2), 1.0);
  const Json m = read_json_file((dir / "diag" / "manifest.json").string());
  EXPECT_DOUBLE_EQ(m["config"]["threshold"].get<double>(), 0.03);
  const Json j = read_json_file((dir / "diag" / "projections.json").string());
  EXPECT_EQ(j["projections"].size(), 3u);
  expect_replay_identical(dir / "diag");
}

TEST(CliDiagnose, UnknownTermIsUsageError) {
  const fs::path dir = scratch();
  ASSERT_EQ(invoke({"fit", "--data", (kData / "poisson10.csv").string(), "--family", "poisson",
                 "--out", (dir / "fit").string()})
                .code,
            0);
  const Result r = invoke({"diagnose", "--fit", (dir / "fit").string(), "--out",
                     (dir / "diag").string(), "--drop", "nope"});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("nope"), std::string::npos);
}

TEST(CliSimulate, SameSeedIdenticalCsv) {
  const fs::path dir = scratch();
  for (const char* sub : {"a", "b"}) {
    const Result r = invoke({"simulate", "--scenario", "blocks_negbin", "--reps", "1", "--n", "300",
                       "--seed", "7", "--out", (dir / sub).string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(slurp(dir / "a" / "experiment.csv"), slurp(dir / "b" / "experiment.csv"));
  const Json s = read_json_file((dir / "a" / "summary.json").string());
  EXPECT_TRUE(s.contains("abs_wins"));
  EXPECT_EQ(s["reps"], 1);
  expect_replay_identical(dir / "a");
}

TEST(CliSimulate, ThreadCountDoesNotChangeOutput) {
  const fs::path dir = scratch();
  for (const auto& [sub, threads] : {std::pair{"a", "1"}, std::pair{"b", "2"}}) {
    const Result r = invoke({"simulate", "--scenario", "copula2_poisson", "--reps", "3", "--n", "200",
                       "--threads", threads, "--out", (dir / sub).string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(slurp(dir / "a" / "experiment.csv"), slurp(dir / "b" / "experiment.csv"));
  EXPECT_EQ(slurp(dir / "a" / "summary.json"), slurp(dir / "b" / "summary.json"));
}

TEST(CliSimulate, Copula4Smoke) {
  const fs::path dir = scratch();
  const Result r = invoke({"simulate", "--scenario", "copula4_binomial", "--reps", "5", "--out",
                     dir.string(), "--threads", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const CsvTable t = table(dir / "experiment.csv");
  ASSERT_EQ(t.rows.size(), 10u);
  int abs = 0, ubs = 0;
  for (const auto& row : t.rows) (row[1] == "ABS" ? abs : ubs)++;
  EXPECT_EQ(abs, 5);
  EXPECT_EQ(ubs, 5);
}

TEST(CliSimulate, UnknownScenarioListsNames) {
  const fs::path dir = scratch();
  const Result r = invoke({"simulate", "--scenario", "nope", "--out", dir.string()});
  EXPECT_EQ(r.code, cli::kExitUsage);
  for (const char* name : {"blocks_negbin", "copula2_poisson", "copula4_binomial"}) {
    EXPECT_NE(r.err.find(name), std::string::npos) << name;
  }
}

TEST(CliGcBias, ReportAndReplay) {
  const fs::path dir = scratch();
  ASSERT_EQ(invoke({"generate", "--kind", "gc", "--positions", "30", "--times", "6", "--out",
                 (dir / "gen").string()})
                .code,
            0);
  const Result r = invoke({"gc-bias", "--data", (dir / "gen" / "data.csv").string(), "--nstar", "72",
                     "--out", (dir / "gc").string()});
  ASSERT_TRUE(r.code == 0 || r.code == 2) << r.err;
  const CsvTable t = table(dir / "gc" / "corrected.csv");
  EXPECT_EQ(t.rows.size(), 180u);
  EXPECT_GE(t.find("corrected"), 0);
  const Json m = read_json_file((dir / "gc" / "manifest.json").string());
  EXPECT_EQ(m["config"]["nstar"], 72);
  const Json rep = read_json_file((dir / "gc" / "gc_fit.json").string());
  EXPECT_EQ(rep["gc_terms"].size(), 7u);
  expect_replay_identical(dir / "gc");
}

TEST(CliGcBias, AllZeroCountsRefused) {
  const fs::path dir = scratch();
  std::ostringstream csv;
  csv << "position,time,gc1,gc2,gc3,count\n";
  for (int i = 0; i < 20; ++i) csv << i << ',' << i % 4 << ",0.4,0.5,0.6,0\n";
  write_file(dir / "d.csv", csv.str());
  const Result r = invoke({"gc-bias", "--data", (dir / "d.csv").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("zero"), std::string::npos) << r.err;
}

TEST(CliScanDmr, PlantedWindowFlaggedAndDefaults) {
  const fs::path dir = scratch();
  ASSERT_EQ(invoke({"generate", "--kind", "methyl", "--windows", "3", "--planted", "2", "--out",
                 (dir / "gen").string()})
                .code,
            0);
  const Result r = invoke({"scan-dmr", "--data", (dir / "gen" / "data.csv").string(), "--out",
                     (dir / "dmr").string(), "--threads", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const CsvTable t = table(dir / "dmr" / "dmr.csv");
  ASSERT_EQ(t.rows.size(), 3u);
  const std::size_t flag = t.require("flagged");
  EXPECT_EQ(t.rows[2][flag], "1");
  EXPECT_EQ(t.rows[2][0], "40000");
  const Json m = read_json_file((dir / "dmr" / "manifest.json").string());
  EXPECT_EQ(m["config"]["k"], 10);
  EXPECT_EQ(m["config"]["per_slice"], 10);
  EXPECT_EQ(m["config"]["nstar"], 100);
  EXPECT_EQ(m["config"]["width"], 20000);
  expect_replay_identical(dir / "dmr");
}

TEST(CliScanDmr, EmptyTrackGivesEmptyReport) {
  const fs::path dir = scratch();
  write_file(dir / "t.csv", "position,strain,generation,methylated,total\n");
  const Result r = invoke({"scan-dmr", "--data", (dir / "t.csv").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  const CsvTable t = table(dir / "o" / "dmr.csv");
  EXPECT_TRUE(t.rows.empty());
  EXPECT_EQ(read_json_file((dir / "o" / "dmr.json").string())["windows"].size(), 0u);
}

TEST(CliScanDmr, UnsortedTrackIsDataError) {
  const fs::path dir = scratch();
  write_file(dir / "t.csv",
             "position,strain,generation,methylated,total\n10,1,1,3,5\n5,1,2,2,5\n");
  const Result r = invoke({"scan-dmr", "--data", (dir / "t.csv").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, cli::kExitData);
}

TEST(CliGenerate, DeterministicPerSeed) {
  const fs::path dir = scratch();
  for (const char* sub : {"a", "b", "c"}) {
    const std::string seed = std::string(sub) == "c" ? "2" : "1";
    ASSERT_EQ(invoke({"generate", "--kind", "copula4_binomial", "--n", "50", "--seed", seed, "--out",
                   (dir / sub).string()})
                  .code,
              0);
  }
  EXPECT_EQ(slurp(dir / "a" / "data.csv"), slurp(dir / "b" / "data.csv"));
  EXPECT_NE(slurp(dir / "a" / "data.csv"), slurp(dir / "c" / "data.csv"));
  EXPECT_EQ(table(dir / "a" / "data.csv").header,
            (std::vector<std::string>{"x1", "x2", "x3", "x4", "y", "total"}));
}

TEST(CliReplay, BadManifestIsUsageError) {
  const fs::path dir = scratch();
  write_file(dir / "m.json", R"({"schema_version": 99, "command": "fit", "config": {}})");
  EXPECT_EQ(invoke({"replay", (dir / "m.json").string()}).code, cli::kExitUsage);
  write_file(dir / "m2.json", R"({"schema_version": 1, "command": "launch", "config": {}})");
  EXPECT_EQ(invoke({"replay", (dir / "m2.json").string()}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"replay", (dir / "missing.json").string()}).code, cli::kExitData);
}

TEST(CliReplay, NoCommandMutatesItsInputs) {
  const fs::path dir = scratch();
  fs::copy_file(kData / "poisson10.csv", dir / "in.csv");
  const std::string before = slurp(dir / "in.csv");
  ASSERT_EQ(invoke({"fit", "--data", (dir / "in.csv").string(), "--family", "poisson", "--out",
                 (dir / "fit").string()})
                .code,
            0);
  ASSERT_EQ(invoke({"predict", "--fit", (dir / "fit").string(), "--data", (dir / "in.csv").string(),
                 "--out", (dir / "pred").string()})
                .code,
            0);
  EXPECT_EQ(slurp(dir / "in.csv"), before);
}

TEST(CliUsage, NoSubcommandAndHelp) {
  EXPECT_EQ(invoke({}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"--help"}).code, 0);
  EXPECT_EQ(invoke({"fit", "--bogus"}).code, cli::kExitUsage);
}
