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

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ccbp/dataset.hpp"
#include "ccbp/model.hpp"

namespace ccbp {

using LogFn = std::function<void(const std::string&)>;

/// `override` if set, else $CCBP_ARTIFACT_ROOT, else "./artifacts".
std::string ArtifactRoot(const std::optional<std::string>& override = std::nullopt);

/// Built-in toy models: "toy-cnn" and "toy-vit".
const std::vector<std::string>& ToyModelNames();

/// Generates the toy train (4000) and test (1000) splits under
/// <root>/data/<split>/ unless their manifests already exist.
void EnsureToyData(const std::string& root, const LogFn& log = {});

/// Loads a toy split, generating the data first if needed.
Dataset LoadToySplit(const std::string& root, const std::string& split,
                     const LogFn& log = {});

/// Loads <root>/models/<name>, training and saving it first if absent.
std::unique_ptr<Classifier> EnsureToyModel(const std::string& root, const std::string& name,
                                           const LogFn& log = {});

/// Resolves a model reference: a toy model name, or a directory holding
/// <id>.json and <id>.weights given as "dir/id".
std::unique_ptr<Classifier> ResolveModel(const std::string& root, const std::string& ref,
                                         const LogFn& log = {});

}  // namespace ccbp
