// Copyright 2026 The ccbp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccbp/zoo.hpp"

namespace ccbp {

inline constexpr const char* kVersion = "0.1.0";

/// Full default configuration. Every accepted key appears here; keys whose
/// default is null accept any JSON type and are checked where used.
nlohmann::json DefaultConfig();

/// Recursively merges `patch` into `base`, rejecting keys that `base` lacks.
/// `where` prefixes error messages ("config", "--set").
void MergeStrict(nlohmann::json& base, const nlohmann::json& patch, const std::string& where);

/// Applies one "a.b.c=value" override. The value is parsed as JSON when
/// possible and otherwise taken as a string.
void ApplyOverride(nlohmann::json& config, const std::string& assignment);

/// Defaults, then the file (if any), then overrides, all strict.
nlohmann::json LoadConfig(const std::optional<std::string>& path,
                          const std::vector<std::string>& overrides);

/// Lower-case hex SHA-256.
std::string Sha256Hex(const std::string& data);

/// SHA-256 of the canonical (key-sorted, compact) serialization.
std::string ConfigHash(const nlohmann::json& config);

/// "<command>-<first 12 hex of sha256(command, config)>". jobs and output_dir
/// do not enter the hash.
std::string RunId(const std::string& command, const nlohmann::json& config);

struct RunRequest {
  std::string command;  // explain, contrast, perturb, ablate, visualize,
                        // regress, verify, reproduce, bootstrap
  std::string target;   // reproduce: fig3, fig4, fig5, table1, table3, regression
  std::optional<std::string> config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> artifact_root;
  std::size_t jobs = 0;  // 0 = use the config value
  LogFn log;
};

struct RunResult {
  int exit_code = 0;  // 0 only when every stage succeeded
  std::string run_id;
  std::string output_dir;
  nlohmann::json summary;
};

/// Validates the request and configuration before touching the file system,
/// then runs the command and writes its artifact directory.
RunResult Run(const RunRequest& request);

const std::vector<std::string>& Commands();
const std::vector<std::string>& ReproduceTargets();

}  // namespace ccbp
