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

#include "ccbp/explainers.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "ccbp/error.hpp"
#include "ccbp/resize.hpp"

namespace ccbp {
namespace {

constexpr std::pair<Method, const char*> kMethodNames[] = {
    {Method::kGradient, "gradient"},     {Method::kGradCam, "gradcam"},
    {Method::kLinearApprox, "linear_approx"}, {Method::kXGradCam, "xgradcam"},
    {Method::kFullGrad, "fullgrad"},     {Method::kVitGradCam, "vit_gradcam"},
    {Method::kAttnRollout, "attn_rollout"},
};

bool AllowsFinalRelu(Method m) {
  return m == Method::kGradCam || m == Method::kVitGradCam || m == Method::kAttnRollout;
}

void ApplyRelu(Tensor& t) {
  for (double& v : t.storage()) v = std::max(v, 0.0);
}

Tensor SpatialActivation(const Tensor& a, const std::string& layer) {
  Require(a.rank() == 3, ErrorCode::kInvalidArgument,
          "layer '" + layer + "' is not a spatial feature map (shape " +
              ShapeString(a.shape()) + ")");
  return a;
}

ExplanationMap FromTrace(const Classifier& model, const Tensor& batch,
                         const ForwardTrace& trace, const ExplainRequest& req,
                         std::span<const double> cotangent) {
  const std::size_t c = model.num_classes();
  Require(cotangent.size() == c, ErrorCode::kShapeMismatch,
          "cotangent has " + std::to_string(cotangent.size()) + " entries, model has " +
              std::to_string(c) + " classes");
  const Tensor cot({1, c}, std::vector<double>(cotangent.begin(), cotangent.end()));

  ExplanationMap out;
  out.method = req.method;
  out.seed_mode = req.seed_mode;
  out.relu_mode = req.relu_mode;
  out.target_class = req.target_class;
  out.layer_name = req.layer_name;

  BackwardRequest br;
  br.input = false;
  switch (req.method) {
    case Method::kGradient: {
      br.input = true;
      out.values = ChannelSum(model.Backward(trace, cot, br).input.Slice(0));
      break;
    }
    case Method::kGradCam:
    case Method::kLinearApprox:
    case Method::kXGradCam: {
      const std::string& layer = *req.layer_name;
      const Tensor a = SpatialActivation(trace.Activation(layer).Slice(0), layer);
      br.layers = {layer};
      const Tensor g = model.Backward(trace, cot, br).layers.at(layer).Slice(0);
      if (req.method == Method::kGradCam) {
        out.values = GradCamMap(a, g);
      } else if (req.method == Method::kLinearApprox) {
        out.values = LinearApproxMap(a, g);
      } else {
        out.values = XGradCamMap(a, g);
      }
      break;
    }
    case Method::kFullGrad: {
      br.input = true;
      br.bias_terms = true;
      const BackwardResult r = model.Backward(trace, cot, br);
      Tensor gx = r.input.Slice(0);
      const Tensor x = batch.Slice(0);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= x[i];
      out.values = ChannelSum(gx);
      for (const BiasTerm& term : r.bias_terms) {
        out.values += BilinearResize(ChannelSum(term.value.Slice(0)), out.values.dim(0),
                                     out.values.dim(1));
      }
      break;
    }
    case Method::kVitGradCam: {
      const std::string& layer = *req.layer_name;
      const auto grid = *model.token_grid();
      br.layers = {layer};
      const Tensor g = model.Backward(trace, cot, br).layers.at(layer).Slice(0);
      out.values = VitGradCamMap(trace.Activation(layer).Slice(0), g, grid.first, grid.second);
      break;
    }
    case Method::kAttnRollout: {
      const auto grid = *model.token_grid();
      br.attentions = true;
      const BackwardResult r = model.Backward(trace, cot, br);
      const auto attentions = trace.Attentions();
      std::vector<Tensor> weighted;
      for (std::size_t l = 0; l < attentions.size(); ++l) {
        weighted.push_back(GradientWeightedAttention(attentions[l].Slice(0), r.attentions[l].Slice(0)));
      }
      const Tensor roll = Rollout(weighted, req.relu_mode == ReluMode::kFinalRelu,
                                  req.rollout_residual);
      out.values = RolloutMap(roll, grid.first, grid.second);
      out.notes.push_back("rollout_residual=" + ToString(req.rollout_residual));
      return out;
    }
  }
  if (req.relu_mode == ReluMode::kFinalRelu) ApplyRelu(out.values);
  return out;
}

}  // namespace

std::string ToString(Method m) {
  for (const auto& [k, name] : kMethodNames) {
    if (k == m) return name;
  }
  return "unknown";
}

Method ParseMethod(const std::string& s) {
  for (const auto& [k, name] : kMethodNames) {
    if (s == name) return k;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown explanation method '" + s + "'");
}

std::string ToString(ReluMode m) { return m == ReluMode::kNone ? "none" : "final_relu"; }

ReluMode ParseReluMode(const std::string& s) {
  if (s == "none") return ReluMode::kNone;
  if (s == "final_relu") return ReluMode::kFinalRelu;
  Fail(ErrorCode::kInvalidArgument, "unknown relu mode '" + s + "'");
}

std::string ToString(RolloutResidual r) {
  return r == RolloutResidual::kIdentity ? "identity" : "none";
}

RolloutResidual ParseRolloutResidual(const std::string& s) {
  if (s == "identity") return RolloutResidual::kIdentity;
  if (s == "none") return RolloutResidual::kNone;
  Fail(ErrorCode::kInvalidArgument, "unknown rollout residual '" + s + "'");
}

bool NeedsLayer(Method m) {
  return m == Method::kGradCam || m == Method::kLinearApprox || m == Method::kXGradCam ||
         m == Method::kVitGradCam;
}

void ExplanationMap::Validate() const {
  Require(values.rank() == 2, ErrorCode::kShapeMismatch,
          "explanation maps are 2-d grids, got " + ShapeString(values.shape()));
  Require(values.AllFinite(), ErrorCode::kInternal, "explanation map has non-finite values");
  if (relu_mode == ReluMode::kFinalRelu) {
    Require(values.Min() >= 0.0, ErrorCode::kInternal, "final_relu map has negative values");
  }
}

void ExplainRequest::Validate(const Classifier& model) const {
  const ModelInfo& info = model.info();
  Require(target_class < info.num_classes, ErrorCode::kInvalidArgument,
          "target class " + std::to_string(target_class) + " outside [0, " +
              std::to_string(info.num_classes) + ")");
  const std::string m = ToString(method);
  const bool token_method = method == Method::kVitGradCam || method == Method::kAttnRollout;
  if (token_method) {
    Require(info.kind == ModelKind::kPatchTransformer && model.token_grid().has_value(),
            ErrorCode::kUnsupported,
            "method '" + m + "' needs a patch_transformer handle; '" + info.model_id +
                "' is a " + ToString(info.kind));
  }
  if (NeedsLayer(method)) {
    Require(layer_name.has_value(), ErrorCode::kInvalidArgument,
            "method '" + m + "' needs a layer_name");
    const auto& names = info.layer_names;
    if (std::find(names.begin(), names.end(), *layer_name) == names.end()) {
      std::string msg = "unknown layer '" + *layer_name + "'; valid layers:";
      for (const auto& n : names) msg += " " + n;
      Fail(ErrorCode::kUnknownLayer, msg);
    }
  } else {
    Require(!layer_name.has_value(), ErrorCode::kInvalidArgument,
            "method '" + m + "' does not take a layer_name");
  }
  Require(relu_mode == ReluMode::kNone || AllowsFinalRelu(method), ErrorCode::kInvalidArgument,
          "method '" + m + "' has no ReLU variant");
  if (method == Method::kVitGradCam) {
    Require(layer_name->rfind("block", 0) == 0, ErrorCode::kInvalidArgument,
            "vit_gradcam reads a transformer block output, not '" + *layer_name + "'");
  }
  if (method == Method::kFullGrad) {
    Require(model.records_biases(), ErrorCode::kUnsupported,
            "fullgrad needs every bias-carrying layer exposed; '" + info.model_id +
                "' does not record biases");
  }
}

bool IsSeedLinear(const ExplainRequest& request) {
  return request.method != Method::kAttnRollout && request.relu_mode == ReluMode::kNone;
}

ExplanationMap ExplainCotangent(const Classifier& model, const Tensor& image,
                                const ExplainRequest& request,
                                std::span<const double> cotangent) {
  request.Validate(model);
  const Tensor batch = AsBatch(image);
  Require(batch.dim(0) == 1, ErrorCode::kInvalidArgument, "explain takes one image at a time");
  auto trace = model.Trace(batch);
  return FromTrace(model, batch, *trace, request, cotangent);
}

ExplanationMap Explain(const Classifier& model, const Tensor& image,
                       const ExplainRequest& request) {
  request.Validate(model);
  const Tensor batch = AsBatch(image);
  Require(batch.dim(0) == 1, ErrorCode::kInvalidArgument, "explain takes one image at a time");
  auto trace = model.Trace(batch);
  const auto cot = SeedCotangent(trace->logits().values(),
                                 {request.seed_mode, request.target_class});
  return FromTrace(model, batch, *trace, request, cot);
}

ClassMaps ExplainAllClasses(const Classifier& model, const Tensor& image,
                            const ExplainRequest& request) {
  ExplainRequest req = request;
  req.seed_mode = SeedMode::kLogit;
  req.target_class = 0;
  req.Validate(model);
  const Tensor batch = AsBatch(image);
  Require(batch.dim(0) == 1, ErrorCode::kInvalidArgument, "explain takes one image at a time");
  auto trace = model.Trace(batch);
  ClassMaps out;
  out.logits = trace->logits().storage();
  const std::size_t c = model.num_classes();
  for (std::size_t s = 0; s < c; ++s) {
    req.target_class = s;
    std::vector<double> onehot(c, 0.0);
    onehot[s] = 1.0;
    out.maps.push_back(FromTrace(model, batch, *trace, req, onehot));
  }
  return out;
}

ExplanationMap ExplainGradient(const Classifier& model, const Tensor& image, std::size_t t,
                               SeedMode seed) {
  return Explain(model, image, {Method::kGradient, seed, ReluMode::kNone, t, std::nullopt});
}

ExplanationMap ExplainGradCam(const Classifier& model, const Tensor& image, std::size_t t,
                              const std::string& layer, SeedMode seed, ReluMode relu) {
  return Explain(model, image, {Method::kGradCam, seed, relu, t, layer});
}

ExplanationMap ExplainLinearApprox(const Classifier& model, const Tensor& image,
                                   std::size_t t, const std::string& layer, SeedMode seed) {
  return Explain(model, image, {Method::kLinearApprox, seed, ReluMode::kNone, t, layer});
}

ExplanationMap ExplainXGradCam(const Classifier& model, const Tensor& image, std::size_t t,
                               const std::string& layer, SeedMode seed) {
  return Explain(model, image, {Method::kXGradCam, seed, ReluMode::kNone, t, layer});
}

ExplanationMap ExplainFullGrad(const Classifier& model, const Tensor& image, std::size_t t,
                               SeedMode seed) {
  return Explain(model, image, {Method::kFullGrad, seed, ReluMode::kNone, t, std::nullopt});
}

ExplanationMap ExplainVitGradCam(const Classifier& model, const Tensor& image, std::size_t t,
                                 std::size_t block_index, SeedMode seed, ReluMode relu) {
  return Explain(model, image,
                 {Method::kVitGradCam, seed, relu, t, "block" + std::to_string(block_index)});
}

ExplanationMap ExplainAttentionRollout(const Classifier& model, const Tensor& image,
                                       std::size_t t, SeedMode seed, ReluMode relu,
                                       RolloutResidual residual) {
  ExplainRequest req{Method::kAttnRollout, seed, relu, t, std::nullopt};
  req.rollout_residual = residual;
  return Explain(model, image, req);
}

// ------------------------------------------------------------ building blocks

Tensor GradCamMap(const Tensor& activation, const Tensor& gradient) {
  Require(activation.shape() == gradient.shape() && activation.rank() == 3,
          ErrorCode::kShapeMismatch, "gradcam expects matching (K, h, w) tensors");
  const std::size_t k = activation.dim(0), plane = activation.dim(1) * activation.dim(2);
  Tensor out({activation.dim(1), activation.dim(2)});
  for (std::size_t ch = 0; ch < k; ++ch) {
    double w = 0.0;
    for (std::size_t i = 0; i < plane; ++i) w += gradient[ch * plane + i];
    w /= static_cast<double>(plane);
    for (std::size_t i = 0; i < plane; ++i) out[i] += w * activation[ch * plane + i];
  }
  return out;
}

Tensor LinearApproxMap(const Tensor& activation, const Tensor& gradient) {
  Require(activation.shape() == gradient.shape() && activation.rank() == 3,
          ErrorCode::kShapeMismatch, "linear approximation expects matching (K, h, w) tensors");
  const std::size_t k = activation.dim(0), plane = activation.dim(1) * activation.dim(2);
  Tensor out({activation.dim(1), activation.dim(2)});
  for (std::size_t ch = 0; ch < k; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) {
      out[i] += activation[ch * plane + i] * gradient[ch * plane + i];
    }
  }
  return out;
}

Tensor XGradCamMap(const Tensor& activation, const Tensor& gradient) {
  Require(activation.shape() == gradient.shape() && activation.rank() == 3,
          ErrorCode::kShapeMismatch, "xgradcam expects matching (K, h, w) tensors");
  const std::size_t k = activation.dim(0), plane = activation.dim(1) * activation.dim(2);
  Tensor out({activation.dim(1), activation.dim(2)});
  for (std::size_t ch = 0; ch < k; ++ch) {
    double l1 = 0.0, num = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      l1 += std::abs(activation[ch * plane + i]);
      num += activation[ch * plane + i] * gradient[ch * plane + i];
    }
    if (l1 == 0.0) continue;
    const double w = num / l1;
    for (std::size_t i = 0; i < plane; ++i) out[i] += w * activation[ch * plane + i];
  }
  return out;
}

Tensor VitGradCamMap(const Tensor& tokens, const Tensor& gradient, std::size_t rows,
                     std::size_t cols) {
  Require(tokens.shape() == gradient.shape() && tokens.rank() == 2 &&
              tokens.dim(0) == rows * cols + 1,
          ErrorCode::kShapeMismatch,
          "vit_gradcam expects (1 + rows*cols, embed) tokens, got " + ShapeString(tokens.shape()));
  const std::size_t n = rows * cols, d = tokens.dim(1);
  std::vector<double> w(d, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t k = 0; k < d; ++k) w[k] += gradient.at(p + 1, k);
  }
  for (double& v : w) v /= static_cast<double>(n);
  Tensor out({rows, cols});
  for (std::size_t p = 0; p < n; ++p) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += w[k] * tokens.at(p + 1, k);
    out[p] = s / static_cast<double>(d);
  }
  return out;
}

Tensor GradientWeightedAttention(const Tensor& attention, const Tensor& gradient) {
  Require(attention.shape() == gradient.shape() && attention.rank() == 3 &&
              attention.dim(1) == attention.dim(2),
          ErrorCode::kShapeMismatch, "expected matching (heads, T, T) tensors");
  const std::size_t heads = attention.dim(0), t = attention.dim(1);
  Tensor g({t, t});
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < t * t; ++i) g[i] += attention[h * t * t + i] * gradient[h * t * t + i];
  }
  g *= 1.0 / static_cast<double>(heads);
  return g;
}

Tensor Rollout(const std::vector<Tensor>& weighted, bool per_layer_relu,
               RolloutResidual residual) {
  Require(!weighted.empty(), ErrorCode::kInvalidArgument, "rollout needs at least one block");
  const std::size_t t = weighted.front().dim(0);
  Tensor r({t, t});
  for (std::size_t i = 0; i < t; ++i) r.at(i, i) = 1.0;
  for (const Tensor& g : weighted) {
    Require(g.shape() == Shape({t, t}), ErrorCode::kShapeMismatch, "rollout blocks disagree on T");
    Tensor m = g;
    if (per_layer_relu) ApplyRelu(m);
    if (residual == RolloutResidual::kIdentity) {
      for (std::size_t i = 0; i < t; ++i) m.at(i, i) += 1.0;
      for (std::size_t i = 0; i < t; ++i) {
        double norm = 0.0;
        for (std::size_t j = 0; j < t; ++j) norm += std::abs(m.at(i, j));
        if (norm == 0.0) continue;
        for (std::size_t j = 0; j < t; ++j) m.at(i, j) /= norm;
      }
    }
    Tensor next({t, t});
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t k = 0; k < t; ++k) {
        const double a = m.at(i, k);
        if (a == 0.0) continue;
        for (std::size_t j = 0; j < t; ++j) next.at(i, j) += a * r.at(k, j);
      }
    }
    r = std::move(next);
  }
  return r;
}

Tensor RolloutMap(const Tensor& rollout, std::size_t rows, std::size_t cols) {
  Require(rollout.rank() == 2 && rollout.dim(0) == rows * cols + 1 &&
              rollout.dim(1) == rows * cols + 1,
          ErrorCode::kShapeMismatch, "rollout does not match a " + std::to_string(rows) + "x" +
                                         std::to_string(cols) + " token grid plus class token");
  Tensor out({rows, cols});
  for (std::size_t p = 0; p < rows * cols; ++p) out[p] = rollout.at(0, p + 1);
  return out;
}

// ------------------------------------------------------------ serialization

nlohmann::json Sidecar(const ExplanationMap& map) {
  nlohmann::json j;
  j["method"] = ToString(map.method);
  j["seed_mode"] = ToString(map.seed_mode);
  j["relu_mode"] = ToString(map.relu_mode);
  j["target_class"] = map.target_class;
  j["layer_name"] = map.layer_name ? nlohmann::json(*map.layer_name) : nlohmann::json();
  j["native_resolution"] = {map.values.dim(0), map.values.dim(1)};
  j["dtype"] = "float64-le";
  j["notes"] = map.notes;
  return j;
}

void SaveMap(const ExplanationMap& map, const std::string& stem) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  map.Validate();
  const auto parent = std::filesystem::path(stem).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream bin(stem + ".bin", std::ios::binary);
  Require(static_cast<bool>(bin), ErrorCode::kIo, "cannot write " + stem + ".bin");
  bin.write(reinterpret_cast<const char*>(map.values.data()),
            static_cast<std::streamsize>(map.values.size() * sizeof(double)));
  std::ofstream js(stem + ".json");
  Require(static_cast<bool>(js), ErrorCode::kIo, "cannot write " + stem + ".json");
  js << Sidecar(map).dump(2) << "\n";
}

ExplanationMap LoadMap(const std::string& stem) {
  std::ifstream js(stem + ".json");
  Require(static_cast<bool>(js), ErrorCode::kIo, "cannot open " + stem + ".json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kParse, stem + ".json: " + e.what());
  }
  ExplanationMap map;
  try {
    map.method = ParseMethod(j.at("method").get<std::string>());
    map.seed_mode = ParseSeedMode(j.at("seed_mode").get<std::string>());
    map.relu_mode = ParseReluMode(j.at("relu_mode").get<std::string>());
    map.target_class = j.at("target_class").get<std::size_t>();
    if (!j.at("layer_name").is_null()) map.layer_name = j.at("layer_name").get<std::string>();
    map.notes = j.value("notes", std::vector<std::string>{});
    const auto res = j.at("native_resolution").get<std::vector<std::size_t>>();
    Require(res.size() == 2, ErrorCode::kParse, stem + ".json: bad native_resolution");
    map.values = Tensor({res[0], res[1]});
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kParse, stem + ".json: " + e.what());
  }
  std::ifstream bin(stem + ".bin", std::ios::binary);
  Require(static_cast<bool>(bin), ErrorCode::kIo, "cannot open " + stem + ".bin");
  bin.read(reinterpret_cast<char*>(map.values.data()),
           static_cast<std::streamsize>(map.values.size() * sizeof(double)));
  Require(bin.gcount() == static_cast<std::streamsize>(map.values.size() * sizeof(double)),
          ErrorCode::kParse, stem + ".bin is truncated");
  return map;
}

}  // namespace ccbp
