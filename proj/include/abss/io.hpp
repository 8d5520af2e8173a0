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

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "abss/basis_select.hpp"
#include "abss/diagnostics.hpp"
#include "abss/family.hpp"
#include "abss/rkhs.hpp"
#include "abss/solver.hpp"

namespace abss {

using Json = nlohmann::json;

/// Header plus rows of string cells. `line` holds the 1-based file line of
/// each row for error messages.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line;

  /// Column index or -1.
  int find(const std::string& name) const;
  /// Column index; DataFormatError naming the column when absent.
  std::size_t require(const std::string& name) const;
  /// Numeric cell; DataFormatError naming line and column otherwise.
  double number(std::size_t row, std::size_t col) const;
};

/// Reads a delimited table with a header row. Blank lines are skipped,
/// surrounding whitespace of cells is trimmed, double quotes may wrap cells.
/// Throws DataFormatError naming the line for ragged rows.
CsvTable read_csv(std::istream& in, char delimiter = ',');
CsvTable read_csv_file(const std::string& path, char delimiter = ',');

/// Shortest decimal that reads back to the same double.
std::string format_double(double v);
void write_csv_row(std::ostream& out, const std::vector<std::string>& cells, char delimiter = ',');

Json to_json(const ModelSpec& spec);
/// Accepts {"covariates": [...], "terms": [...]} or {"covariates": [...],
/// "order": k}. Term variables are covariate names; unknown names raise
/// ConfigError naming them.
ModelSpec spec_from_json(const Json& j);

Json to_json(const Family& family);
Family family_from_json(const Json& j);

Json to_json(const CovariateScaling& s);
CovariateScaling scaling_from_json(const Json& j);

Json to_json(const EffectiveBasis& b);
EffectiveBasis basis_from_json(const Json& j);

/// Coefficients, tuning parameters and summary statistics; per-observation
/// vectors are left to the CSV outputs.
Json to_json(const FitResult& fit);
FitResult fit_from_json(const Json& j);

Json to_json(const SearchConfig& c);
SearchConfig search_from_json(const Json& j);

Json to_json(const ProjectionReport& r);

Json to_json(const Eigen::VectorXd& v);
Json to_json(const Eigen::MatrixXd& m);  ///< array of rows
Eigen::VectorXd vector_from_json(const Json& j);
Eigen::MatrixXd matrix_from_json(const Json& j, Eigen::Index cols);

/// Pretty-printed (2-space) with sorted keys and a trailing newline.
void write_json_file(const std::string& path, const Json& j);
Json read_json_file(const std::string& path);

}  // namespace abss
