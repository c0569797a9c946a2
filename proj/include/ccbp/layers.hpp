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

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccbp/rng.hpp"
#include "ccbp/tensor.hpp"

namespace ccbp::nn {

// Per-call scratch a layer needs to run its backward pass. Layers are
// immutable during inference, so all call state lives here.
struct Cache {
  Tensor input;
  Tensor aux;
  Tensor aux2;
  std::vector<std::size_t> indices;
};

struct Param {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// A differentiable stage of a sequential network. Spatial tensors are
/// (N, C, H, W); flat tensors are (N, F).
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string type() const = 0;
  virtual Shape OutputShape(const Shape& input) const { return input; }

  virtual Tensor Forward(const Tensor& x, Cache& cache, bool training) const = 0;

  /// Returns dL/dx. When `param_grads` is non-empty it has one tensor per
  /// entry of params(), and parameter gradients are accumulated into it.
  virtual Tensor Backward(const Tensor& dy, const Cache& cache,
                          std::span<Tensor> param_grads) const = 0;

  virtual bool differentiable() const { return true; }

  /// Per-output-channel additive bias of the affine map this layer applies
  /// (after folding normalization statistics). Used by full-gradient
  /// decompositions; nullopt for layers that carry no bias.
  virtual std::optional<std::vector<double>> EffectiveBias() const {
    return std::nullopt;
  }

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  /// Updates inference-time statistics from a training-mode cache.
  virtual void UpdateStatistics(const Cache&) {}

  virtual nlohmann::json Config() const { return {{"type", type()}}; }

 protected:
  std::vector<Param> params_;
};

/// Per-channel (x - mean) / std. Not trainable.
class Normalize final : public Layer {
 public:
  Normalize(std::vector<double> mean, std::vector<double> stddev);
  std::string type() const override { return "normalize"; }
  Tensor Forward(const Tensor& x, Cache& cache, bool training) const override;
  Tensor Backward(const Tensor& dy, const Cache& cache,
                  std::span<Tensor> param_grads) const override;
  std::optional<std::vector<double>> EffectiveBias() const override;
  nlohmann::json Config() const override;

 private:
  std::vector<double> mean_;
  std::vector<double> stddev_;
};

/// Stride-1 "same" convolution with odd square kernels.
class Conv2d final : public Layer {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         bool bias = true);
  std::string type() const override { return "conv2d"; }
  Shape OutputShape(const Shape& input) const override;
  Tensor Forward(const Tensor& x, Cache& cache, bool training) const override;
  Tensor Backward(const Tensor& dy, const Cache& cache,
                  std::span<Tensor> param_grads) const override;
  std::optional<std::vector<double>> EffectiveBias() const override;
  nlohmann::json Config() const override;
  void InitHe(Rng& rng);

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  std::size_t kernel() const { return k_; }
  bool has_bias() const { return has_bias_; }

 private:
  std::size_t in_, out_, k_;
  bool has_bias_;
};

class BatchNorm2d final : public Layer {
 public:
  explicit BatchNorm2d(std::size_t channels, double eps = 1e-5,
                       double momentum = 0.1);
  std::string type() const override { return "batchnorm2d"; }
  Tensor Forward(const Tensor& x, Cache& cache, bool training) const override;
  Tensor Backward(const Tensor& dy, const Cache& cache,
                  std::span<Tensor> param_grads) const override;
  std::optional<std::vector<double>> EffectiveBias() const override;
  void UpdateStatistics(const Cache& cache) override;
  nlohmann::json Config() const override;

  // params(): gamma, beta, running_mean, running_var. The last two are
  // buffers; their gradient slots stay zero.
 private:
  std::size_t channels_;
  double eps_, momentum_;
};

class ReLU final : public Layer {
 public:
  std::string type() const override { return "relu"; }
  Tensor Forward(const Tensor& x, Cache& cache, bool training) const override;
  Tensor Backward(const Tensor& dy, const Cache& cache,
                  std::span<Tensor> param_grads) const override;
};

/// 2x2 max pooling, stride 2. First maximum wins on ties.
class MaxPool2d final : public Layer {
 public:
  std::string type() const override { return "maxpool2d"; }
  Shape OutputShape(const Shape& input) const override;
  Tensor Forward(const Tensor& x, Cache& cache, bool training) const override;
  Tensor Backward(const Tensor& dy, const Cache& cache,
                  std::span<Tensor> param_grads) const override;
};

/// (N, C, H, W) -> (N, C)
class GlobalAvgPool final : public Layer {
 public:
  std::string type() const override { return "global_avg_pool"; }
  Shape OutputShape(const Shape& input) const override;
  Tensor Forward(const Tensor& x, Cache& cache, bool training) const override;
  Tensor Backward(const Tensor& dy, const Cache& cache,
                  std::span<Tensor> param_grads) const override;
};

/// (N, ...) -> (N, F)
class Flatten final : public Layer {
 public:
  std::string type() const override { return "flatten"; }
  Shape OutputShape(const Shape& input) const override;
  Tensor Forward(const Tensor& x, Cache& cache, bool training) const override;
  Tensor Backward(const Tensor& dy, const Cache& cache,
                  std::span<Tensor> param_grads) const override;
};

class Linear final : public Layer {
 public:
  Linear(std::size_t in_features, std::size_t out_features, bool bias = true);
  std::string type() const override { return "linear"; }
  Shape OutputShape(const Shape& input) const override;
  Tensor Forward(const Tensor& x, Cache& cache, bool training) const override;
  Tensor Backward(const Tensor& dy, const Cache& cache,
                  std::span<Tensor> param_grads) const override;
  nlohmann::json Config() const override;
  void InitHe(Rng& rng);

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  bool has_bias() const { return has_bias_; }

 private:
  std::size_t in_, out_;
  bool has_bias_;
};

/// Rounds activations to a fixed grid. Piecewise constant, so it has no
/// usable gradient; networks containing it refuse back-propagation.
class Quantize final : public Layer {
 public:
  explicit Quantize(double step) : step_(step) {}
  std::string type() const override { return "quantize"; }
  Tensor Forward(const Tensor& x, Cache& cache, bool training) const override;
  Tensor Backward(const Tensor& dy, const Cache& cache,
                  std::span<Tensor> param_grads) const override;
  bool differentiable() const override { return false; }
  nlohmann::json Config() const override;

 private:
  double step_;
};

std::unique_ptr<Layer> LayerFromConfig(const nlohmann::json& config);

}  // namespace ccbp::nn
