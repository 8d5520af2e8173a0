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

#include "abss/io.hpp"

namespace abss::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUnconverged = 2;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitData = 65;
inline constexpr int kExitInternal = 70;

inline constexpr int kSchemaVersion = 1;

/// Commands driven by a resolved config: fit, predict, diagnose, simulate,
/// gc-bias, scan-dmr, generate.
std::vector<std::string> command_names();

/// Runs one command from its config. Defaults are filled in place, outputs go
/// to config["out"] together with manifest.json. Returns the exit code;
/// library exceptions propagate.
int execute(const std::string& command, Json& config, std::ostream& log);

/// Parses `args` (without the program name), runs the command and maps
/// errors to exit codes.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace abss::cli
