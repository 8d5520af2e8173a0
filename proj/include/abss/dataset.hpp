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

/// Training or prediction rows. `x` holds raw covariate values (categorical
/// columns carry 0-based level indices); `total` is the binomial N and is
/// empty for other families; `group` holds random-effect levels or is empty.
struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd total;
  std::vector<int> group;

  Eigen::Index n() const { return y.size(); }
  double total_at(Eigen::Index i) const { return total.size() ? total[i] : 1.0; }
  Eigen::VectorXd totals_or_ones() const {
    return total.size() ? total : Eigen::VectorXd::Ones(y.size());
  }
};

}  // namespace abss
