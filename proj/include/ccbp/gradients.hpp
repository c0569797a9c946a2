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

#include <span>
#include <vector>

#include "ccbp/model.hpp"
#include "ccbp/tensor.hpp"

namespace ccbp {

/// Where back-propagation starts: the logit y_t or the probability p_t.
enum class SeedMode { kLogit, kSoftmax };

std::string ToString(SeedMode mode);
SeedMode ParseSeedMode(const std::string& s);

struct Seed {
  SeedMode mode = SeedMode::kLogit;
  std::size_t target = 0;
};

std::vector<double> Softmax(std::span<const double> logits);

/// J(i, j) = dp_i/dy_j = p_i (delta_ij - p_j).
Tensor SoftmaxJacobian(std::span<const double> logits);

/// Row of dseed/dy: one-hot for a logit seed, the target's softmax-Jacobian
/// row for a probability seed.
std::vector<double> SeedCotangent(std::span<const double> logits, Seed seed);

/// Builds the (N, C) cotangent for a batch, applying `seed` to every row.
Tensor BatchCotangent(const Tensor& logits, Seed seed);

/// Accepts (C, H, W) or (N, C, H, W); returns (N, C, H, W).
Tensor AsBatch(const Tensor& pixels);

Tensor Forward(const Classifier& model, const Tensor& batch);

/// d(seed)/d(pixels), shaped like `pixels`.
Tensor GradWrtInput(const Classifier& model, const Tensor& pixels, Seed seed);

struct LayerGradient {
  Tensor activation;  // single image, batch axis removed
  Tensor gradient;
};

LayerGradient GradWrtLayer(const Classifier& model, const Tensor& image,
                           const std::string& layer, Seed seed);

struct AttentionStack {
  std::vector<Tensor> attentions;  // per block, (heads, tokens, tokens)
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  bool has_class_token = true;

  std::size_t tokens() const { return grid_rows * grid_cols + (has_class_token ? 1 : 0); }
};

struct AttentionCapture {
  AttentionStack stack;
  std::vector<Tensor> gradients;  // dseed/dattention, same shapes
  std::vector<double> logits;
};

/// Attention matrices and their seed gradients for one image, in depth order.
AttentionCapture CaptureAttentions(const Classifier& model, const Tensor& image,
                                   Seed seed);

}  // namespace ccbp
