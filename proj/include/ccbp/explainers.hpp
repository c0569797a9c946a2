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
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccbp/gradients.hpp"
#include "ccbp/model.hpp"
#include "ccbp/tensor.hpp"

namespace ccbp {

enum class Method {
  kGradient,
  kGradCam,
  kLinearApprox,
  kXGradCam,
  kFullGrad,
  kVitGradCam,
  kAttnRollout,
};

enum class ReluMode { kNone, kFinalRelu };

/// How the residual stream enters attention rollout.
enum class RolloutResidual { kIdentity, kNone };

std::string ToString(Method m);
Method ParseMethod(const std::string& s);
std::string ToString(ReluMode m);
ReluMode ParseReluMode(const std::string& s);
std::string ToString(RolloutResidual r);
RolloutResidual ParseRolloutResidual(const std::string& s);

/// True for methods that read an internal layer and therefore need a name.
bool NeedsLayer(Method m);

/// Signed relevance grid plus provenance. Raw values: explainers never
/// normalize.
struct ExplanationMap {
  Tensor values;  // (H', W')
  Method method = Method::kGradient;
  SeedMode seed_mode = SeedMode::kLogit;
  ReluMode relu_mode = ReluMode::kNone;
  std::size_t target_class = 0;
  std::optional<std::string> layer_name;
  std::vector<std::string> notes;  // provenance remarks, e.g. contrast ties

  std::size_t height() const { return values.dim(0); }
  std::size_t width() const { return values.dim(1); }
  /// Checks finiteness and the relu_mode sign invariant.
  void Validate() const;
};

struct ExplainRequest {
  Method method = Method::kGradient;
  SeedMode seed_mode = SeedMode::kLogit;
  ReluMode relu_mode = ReluMode::kNone;
  std::size_t target_class = 0;
  std::optional<std::string> layer_name;
  RolloutResidual rollout_residual = RolloutResidual::kIdentity;

  /// Rejects requests whose fields contradict the method, e.g. a layer name
  /// on a pixel-level method.
  void Validate(const Classifier& model) const;
};

ExplanationMap Explain(const Classifier& model, const Tensor& image,
                       const ExplainRequest& request);

/// Map for an arbitrary logit cotangent (the seed's dseed/dy row). Every
/// method except rollout and final-ReLU variants is linear in `cotangent`.
/// The seed fields of `request` are recorded as provenance only.
ExplanationMap ExplainCotangent(const Classifier& model, const Tensor& image,
                                const ExplainRequest& request,
                                std::span<const double> cotangent);

/// Logit-seed maps of every class from one forward pass.
struct ClassMaps {
  std::vector<ExplanationMap> maps;  // index = class
  std::vector<double> logits;
};
ClassMaps ExplainAllClasses(const Classifier& model, const Tensor& image,
                            const ExplainRequest& request);

/// True when the map is linear in the seed, so per-class maps combine.
bool IsSeedLinear(const ExplainRequest& request);

// Convenience wrappers, one per method.
ExplanationMap ExplainGradient(const Classifier& model, const Tensor& image,
                               std::size_t t, SeedMode seed);
ExplanationMap ExplainGradCam(const Classifier& model, const Tensor& image,
                              std::size_t t, const std::string& layer, SeedMode seed,
                              ReluMode relu = ReluMode::kNone);
ExplanationMap ExplainLinearApprox(const Classifier& model, const Tensor& image,
                                   std::size_t t, const std::string& layer, SeedMode seed);
ExplanationMap ExplainXGradCam(const Classifier& model, const Tensor& image,
                               std::size_t t, const std::string& layer, SeedMode seed);
ExplanationMap ExplainFullGrad(const Classifier& model, const Tensor& image,
                               std::size_t t, SeedMode seed);
ExplanationMap ExplainVitGradCam(const Classifier& model, const Tensor& image,
                                 std::size_t t, std::size_t block_index, SeedMode seed,
                                 ReluMode relu = ReluMode::kNone);
ExplanationMap ExplainAttentionRollout(const Classifier& model, const Tensor& image,
                                       std::size_t t, SeedMode seed,
                                       ReluMode relu = ReluMode::kNone,
                                       RolloutResidual residual = RolloutResidual::kIdentity);

// ------------------------------------------------------------ building blocks

/// GradCAM-family maps from one (K, h, w) activation and its gradient.
Tensor GradCamMap(const Tensor& activation, const Tensor& gradient);
Tensor LinearApproxMap(const Tensor& activation, const Tensor& gradient);
Tensor XGradCamMap(const Tensor& activation, const Tensor& gradient);

/// (tokens, embed) block output with class token at row 0 -> (rows, cols).
Tensor VitGradCamMap(const Tensor& tokens, const Tensor& gradient, std::size_t rows,
                     std::size_t cols);

/// G_l = mean over heads of gradient * attention, each (heads, T, T) -> (T, T).
Tensor GradientWeightedAttention(const Tensor& attention, const Tensor& gradient);

/// Rolls gradient-weighted attentions (depth order) into R = M_L ... M_1,
/// where M_l = rownorm(relu?(G_l) + I) for the identity residual and
/// relu?(G_l) otherwise. Rows are normalized by their sum of absolute values.
Tensor Rollout(const std::vector<Tensor>& weighted, bool per_layer_relu,
               RolloutResidual residual);

/// Class-token row of a rollout over patch tokens, as a (rows, cols) grid.
Tensor RolloutMap(const Tensor& rollout, std::size_t rows, std::size_t cols);

// ------------------------------------------------------------ serialization

nlohmann::json Sidecar(const ExplanationMap& map);

/// Writes `<stem>.bin` (little-endian float64, row-major) and `<stem>.json`.
void SaveMap(const ExplanationMap& map, const std::string& stem);
ExplanationMap LoadMap(const std::string& stem);

}  // namespace ccbp
