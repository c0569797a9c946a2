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

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccbp/contrast.hpp"
#include "ccbp/dataset.hpp"
#include "ccbp/model.hpp"

namespace ccbp {

enum class TargetRule { kTrueLabel, kPredictedLabel };

std::string ToString(TargetRule r);
TargetRule ParseTargetRule(const std::string& s);

/// Iterative sign ascent under an l-infinity budget.
struct PerturbConfig {
  double epsilon = 3e-3;
  std::size_t n_total = 20;
  std::vector<Combinator> selectors{Combinator::kOriginal, Combinator::kMean,
                                    Combinator::kMax, Combinator::kWeighted};
  TargetRule target_rule = TargetRule::kTrueLabel;
  /// Reuse the explanation of the clean image at every step.
  bool frozen_explanation = false;
  bool mean_scaled = true;

  /// epsilon / n_total (zero when n_total is zero).
  double step() const;
  void Validate() const;

  /// "reported" (epsilon 1e-3) or "used" (epsilon 3e-3, the default).
  static PerturbConfig Preset(const std::string& name);
  nlohmann::json ToJson() const;
};

/// x + step * sign(phi), clamped to [max(x0 - eps, 0), min(x0 + eps, 1)].
/// sign(0) = 0 leaves the pixel where it is.
Tensor PerturbStep(const Tensor& x_n, const Tensor& x_0, const Tensor& phi,
                   const PerturbConfig& config);

struct SelectorSeries {
  Combinator selector = Combinator::kWeighted;
  std::vector<double> accuracy;  // index = iteration, 0 = clean
  std::vector<double> mean_y_t;
  std::vector<double> mean_p_t;
};

struct PerturbationTrace {
  std::string model_id;
  std::string dataset_id;
  double epsilon = 0.0;
  std::size_t n_total = 0;
  std::size_t sample_count = 0;   // images that completed for every selector
  std::vector<std::string> failures;
  nlohmann::json config;
  std::vector<SelectorSeries> series;

  const SelectorSeries& Get(Combinator c) const;
  nlohmann::json ToJson() const;
  /// Rows: iteration,selector,accuracy,mean_y_t,mean_p_t.
  std::string ToCsv() const;
  static PerturbationTrace FromJson(const nlohmann::json& j);
};

struct PerturbRunOptions {
  std::size_t jobs = 1;
  std::string dataset_id = "dataset";
};

/// The explanation is the input gradient, combined per selector with the
/// current logits (one back-propagation through the contrast cotangent).
PerturbationTrace RunPerturbation(const Classifier& model, const Dataset& data,
                                  const PerturbConfig& config,
                                  const PerturbRunOptions& options = {});

/// Input-gradient contrast for one image: d/dx of sum_s c_s y_s where c are
/// the combinator's coefficients at the current logits.
Tensor ContrastGradient(const Classifier& model, const Tensor& image, Combinator selector,
                        std::size_t target, bool mean_scaled = true,
                        std::vector<double>* logits_out = nullptr);

}  // namespace ccbp
