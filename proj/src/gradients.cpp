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

#include "ccbp/gradients.hpp"

#include <algorithm>
#include <cmath>

#include "ccbp/error.hpp"

namespace ccbp {

std::string ToString(SeedMode mode) {
  return mode == SeedMode::kLogit ? "logit" : "softmax";
}

SeedMode ParseSeedMode(const std::string& s) {
  if (s == "logit") return SeedMode::kLogit;
  if (s == "softmax") return SeedMode::kSoftmax;
  Fail(ErrorCode::kInvalidArgument, "unknown seed mode '" + s + "'");
}

std::vector<double> Softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

Tensor SoftmaxJacobian(std::span<const double> logits) {
  const auto p = Softmax(logits);
  const std::size_t c = p.size();
  Tensor j({c, c});
  for (std::size_t a = 0; a < c; ++a) {
    for (std::size_t b = 0; b < c; ++b) {
      j.at(a, b) = p[a] * ((a == b ? 1.0 : 0.0) - p[b]);
    }
  }
  return j;
}

std::vector<double> SeedCotangent(std::span<const double> logits, Seed seed) {
  Require(seed.target < logits.size(), ErrorCode::kInvalidArgument,
          "target class " + std::to_string(seed.target) + " outside [0, " +
              std::to_string(logits.size()) + ")");
  std::vector<double> c(logits.size(), 0.0);
  if (seed.mode == SeedMode::kLogit) {
    c[seed.target] = 1.0;
    return c;
  }
  const auto p = Softmax(logits);
  const double pt = p[seed.target];
  for (std::size_t s = 0; s < c.size(); ++s) {
    c[s] = pt * ((s == seed.target ? 1.0 : 0.0) - p[s]);
  }
  return c;
}

Tensor BatchCotangent(const Tensor& logits, Seed seed) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = SeedCotangent(
        std::span<const double>(logits.data() + i * c, c), seed);
    std::copy(row.begin(), row.end(), out.data() + i * c);
  }
  return out;
}

Tensor AsBatch(const Tensor& pixels) {
  if (pixels.rank() == 4) return pixels;
  Require(pixels.rank() == 3, ErrorCode::kShapeMismatch,
          "expected (C, H, W) or (N, C, H, W) pixels, got " +
              ShapeString(pixels.shape()));
  Shape s = pixels.shape();
  s.insert(s.begin(), 1);
  return pixels.Reshaped(s);
}

Tensor Forward(const Classifier& model, const Tensor& batch) {
  return model.Logits(batch);
}

Tensor GradWrtInput(const Classifier& model, const Tensor& pixels, Seed seed) {
  const Tensor batch = AsBatch(pixels);
  auto trace = model.Trace(batch);
  const Tensor cot = BatchCotangent(trace->logits(), seed);
  BackwardRequest req;
  Tensor g = model.Backward(*trace, cot, req).input;
  g.Reshape(pixels.shape());
  return g;
}

LayerGradient GradWrtLayer(const Classifier& model, const Tensor& image,
                           const std::string& layer, Seed seed) {
  const Tensor batch = AsBatch(image);
  Require(batch.dim(0) == 1, ErrorCode::kInvalidArgument,
          "layer gradients are taken one image at a time");
  const auto& names = model.info().layer_names;
  if (std::find(names.begin(), names.end(), layer) == names.end()) {
    std::string msg = "unknown layer '" + layer + "'; valid layers:";
    for (const auto& n : names) msg += " " + n;
    Fail(ErrorCode::kUnknownLayer, msg);
  }
  auto trace = model.Trace(batch);
  const Tensor cot = BatchCotangent(trace->logits(), seed);
  BackwardRequest req;
  req.input = false;
  req.layers = {layer};
  BackwardResult r = model.Backward(*trace, cot, req);
  LayerGradient out{trace->Activation(layer).Slice(0), r.layers.at(layer).Slice(0)};
  return out;
}

AttentionCapture CaptureAttentions(const Classifier& model, const Tensor& image,
                                   Seed seed) {
  Require(model.info().kind == ModelKind::kPatchTransformer,
          ErrorCode::kUnsupported,
          "attention capture needs a patch_transformer handle; '" +
              model.info().model_id + "' is a " + ToString(model.info().kind));
  const Tensor batch = AsBatch(image);
  Require(batch.dim(0) == 1, ErrorCode::kInvalidArgument,
          "attention capture takes one image at a time");
  auto trace = model.Trace(batch);
  const Tensor cot = BatchCotangent(trace->logits(), seed);
  BackwardRequest req;
  req.input = false;
  req.attentions = true;
  BackwardResult r = model.Backward(*trace, cot, req);
  AttentionCapture cap;
  const auto grid = model.token_grid();
  Require(grid.has_value(), ErrorCode::kInternal, "token model without a grid");
  cap.stack.grid_rows = grid->first;
  cap.stack.grid_cols = grid->second;
  cap.stack.has_class_token = true;
  for (const Tensor& a : trace->Attentions()) cap.stack.attentions.push_back(a.Slice(0));
  for (const Tensor& g : r.attentions) cap.gradients.push_back(g.Slice(0));
  cap.logits = trace->logits().storage();
  return cap;
}

}  // namespace ccbp
