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

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccbp/layers.hpp"
#include "ccbp/tensor.hpp"

namespace ccbp {

enum class ModelKind { kCnn, kPatchTransformer };

std::string ToString(ModelKind kind);
ModelKind ParseModelKind(const std::string& s);

struct ModelInfo {
  std::string model_id;
  std::size_t num_classes = 0;
  Shape input_shape;  // (channels, height, width)
  std::vector<std::string> layer_names;
  ModelKind kind = ModelKind::kCnn;
};

/// Adds `delta` to one element of a named internal tensor during the forward
/// pass. Used by finite-difference checks of layer gradients.
struct ActivationNudge {
  std::string layer;
  std::size_t index = 0;
  double delta = 0.0;
};

/// Adds `delta` to one post-softmax attention weight of the first image in
/// the batch.
struct AttentionNudge {
  std::size_t block = 0;
  std::size_t head = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  double delta = 0.0;
};

struct TraceOptions {
  bool training = false;
  std::optional<ActivationNudge> activation_nudge;
  std::optional<AttentionNudge> attention_nudge;
};

/// Record of one forward pass over a batch. Owns all state needed by the
/// backward pass, so a handle can serve concurrent calls.
class ForwardTrace {
 public:
  virtual ~ForwardTrace() = default;

  const Tensor& logits() const { return logits_; }

  /// Batch-leading activation of a named internal tensor.
  virtual const Tensor& Activation(const std::string& name) const = 0;

  /// Per block: (N, heads, tokens, tokens). Empty for CNNs.
  virtual std::vector<Tensor> Attentions() const { return {}; }

 protected:
  Tensor logits_;
};

struct BackwardRequest {
  bool input = true;
  std::vector<std::string> layers;
  bool attentions = false;
  bool bias_terms = false;
  /// When set, parameter gradients (aligned with MutableParams()) are
  /// accumulated here.
  std::vector<Tensor>* param_grads = nullptr;
};

struct BiasTerm {
  std::string layer;  // type and depth of the bias-carrying stage
  Tensor value;       // (N, C, H, W): dseed/dz * bias
};

struct BackwardResult {
  Tensor input;
  std::map<std::string, Tensor> layers;
  std::vector<Tensor> attentions;
  std::vector<BiasTerm> bias_terms;
};

/// Uniform view of a differentiable image classifier. Inputs are pixel
/// batches (N, C, H, W) in [0, 1]; model-specific normalization happens
/// inside. Immutable after construction except through training helpers.
class Classifier {
 public:
  explicit Classifier(ModelInfo info) : info_(std::move(info)) {}
  virtual ~Classifier() = default;

  const ModelInfo& info() const { return info_; }
  std::size_t num_classes() const { return info_.num_classes; }

  virtual std::unique_ptr<ForwardTrace> Trace(
      const Tensor& batch, const TraceOptions& options = {}) const = 0;

  /// Back-propagates a cotangent on the logits (N, C). A one-hot row seeds
  /// from a logit; a softmax-Jacobian row seeds from a probability.
  virtual BackwardResult Backward(const ForwardTrace& trace,
                                  const Tensor& logit_cotangent,
                                  const BackwardRequest& request) const = 0;

  /// True when every bias-carrying stage is exposed for full-gradient
  /// decompositions.
  virtual bool records_biases() const = 0;

  virtual std::vector<nn::Param*> MutableParams() = 0;
  virtual std::vector<const nn::Param*> Params() const = 0;
  virtual void UpdateStatistics(const ForwardTrace&) {}

  virtual nlohmann::json Architecture() const = 0;

  /// (rows, cols) of patch tokens for token-based models.
  virtual std::optional<std::pair<std::size_t, std::size_t>> token_grid() const {
    return std::nullopt;
  }

  /// Checks batch shape against input_shape; throws kShapeMismatch with a
  /// dimension report.
  void CheckBatch(const Tensor& batch) const;

  Tensor Logits(const Tensor& batch) const;

 protected:
  ModelInfo info_;
};

// ------------------------------------------------------------------ builders

/// A plain layer stack with named hook points.
class SequentialClassifier final : public Classifier {
 public:
  struct Stage {
    std::unique_ptr<nn::Layer> layer;
    std::string name;  // empty unless the stage output is hookable
  };

  SequentialClassifier(ModelInfo info, std::vector<Stage> stages);

  std::unique_ptr<ForwardTrace> Trace(const Tensor& batch,
                                      const TraceOptions& options) const override;
  BackwardResult Backward(const ForwardTrace& trace, const Tensor& cotangent,
                          const BackwardRequest& request) const override;
  bool records_biases() const override { return true; }
  std::vector<nn::Param*> MutableParams() override;
  std::vector<const nn::Param*> Params() const override;
  void UpdateStatistics(const ForwardTrace& trace) override;
  nlohmann::json Architecture() const override;

  const std::vector<Stage>& stages() const { return stages_; }
  std::vector<Stage>& mutable_stages() { return stages_; }

 private:
  std::vector<Stage> stages_;
};

struct PatchTransformerConfig {
  Shape input_shape{3, 24, 24};
  std::size_t patch = 6;
  std::size_t embed = 24;
  std::size_t heads = 2;
  std::size_t mlp = 48;
  std::size_t depth = 3;
  std::size_t num_classes = 10;
  std::vector<double> mean{0.5, 0.5, 0.5};
  std::vector<double> stddev{0.25, 0.25, 0.25};

  nlohmann::json ToJson() const;
  static PatchTransformerConfig FromJson(const nlohmann::json& j);
};

std::unique_ptr<Classifier> MakePatchTransformer(const std::string& model_id,
                                                 const PatchTransformerConfig& config,
                                                 std::uint64_t seed);

struct ToyCnnConfig {
  Shape input_shape{3, 24, 24};
  std::vector<std::size_t> channels{8, 16, 32, 32};
  std::vector<bool> pool_after{true, true, false, false};
  std::size_t num_classes = 10;
  std::vector<double> mean{0.5, 0.5, 0.5};
  std::vector<double> stddev{0.25, 0.25, 0.25};
};

/// VGG-style stand-in: per block conv3x3 -> batchnorm -> relu (-> maxpool),
/// then global average pooling and a linear head. Hook names "block1".. and
/// "logits".
std::unique_ptr<Classifier> MakeToyCnn(const std::string& model_id,
                                       const ToyCnnConfig& config,
                                       std::uint64_t seed);

/// Flatten -> linear, with optional bias. Hook name "logits".
std::unique_ptr<Classifier> MakeLinearClassifier(const std::string& model_id,
                                                 const Shape& input_shape,
                                                 std::size_t num_classes,
                                                 bool bias, std::uint64_t seed);

/// Builds a classifier from a descriptor's architecture block. Weights are
/// zero until loaded.
std::unique_ptr<Classifier> ClassifierFromDescriptor(const nlohmann::json& descriptor);

// ------------------------------------------------------------------ registry

/// Writes `<dir>/<model_id>.json` (descriptor) and `<dir>/<model_id>.weights`.
void SaveModel(const Classifier& model, const std::string& dir);

std::unique_ptr<Classifier> LoadModel(const std::string& dir,
                                      const std::string& model_id);

nlohmann::json Descriptor(const Classifier& model);

}  // namespace ccbp
