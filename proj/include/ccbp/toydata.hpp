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

#include <array>
#include <cstdint>
#include <string>

#include "ccbp/dataset.hpp"

namespace ccbp {

/// Synthetic 10-class image set. Each class is a (shape, colour) pair; every
/// shape and every colour is shared by two classes, and a fraction of images
/// carry a second, weaker object of another class, so both confident and
/// two-way ambiguous samples occur.
struct ToyDataConfig {
  std::size_t size = 24;            // square images, 3 channels
  double distractor_prob = 0.7;     // chance of a second object
  double distractor_min = 0.6;      // its relative contrast range
  double distractor_max = 1.0;
  double noise = 0.06;              // per-pixel Gaussian noise
};

constexpr std::size_t kToyClasses = 10;

/// Human-readable class names ("red disc", ...).
const std::array<std::string, kToyClasses>& ToyClassNames();

/// Images are quantized to 8 bits so they round-trip through PNG exactly.
Dataset GenerateToyDataset(std::size_t count, std::uint64_t seed,
                           const std::string& id_prefix,
                           const ToyDataConfig& config = {});

/// Writes `<dir>/images/<id>.png` and `<dir>/manifest.tsv`. Returns the
/// manifest path.
std::string WriteDataset(const Dataset& dataset, const std::string& dir);

}  // namespace ccbp
