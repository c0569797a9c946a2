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

#include <cstdint>
#include <functional>
#include <vector>

#include "ccbp/dataset.hpp"
#include "ccbp/model.hpp"

namespace ccbp {

/// Minimal cross-entropy fitting with Adam, enough to give the toy models
/// meaningful decision structure.
struct FitOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  bool cosine_schedule = true;
  std::uint64_t seed = 0;
  /// Called after every epoch with (epoch, mean loss, train accuracy).
  std::function<void(std::size_t, double, double)> on_epoch;
};

struct FitReport {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_accuracy;
};

FitReport Fit(Classifier& model, const Dataset& data, const FitOptions& options);

/// Fraction of images whose arg-max logit equals the label.
double Accuracy(const Classifier& model, const Dataset& data, std::size_t batch_size = 64);

}  // namespace ccbp
