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

#include "ccbp/model.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "ccbp/error.hpp"

namespace ccbp {

std::string ToString(ModelKind kind) {
  return kind == ModelKind::kCnn ? "cnn" : "patch_transformer";
}

ModelKind ParseModelKind(const std::string& s) {
  if (s == "cnn") return ModelKind::kCnn;
  if (s == "patch_transformer") return ModelKind::kPatchTransformer;
  Fail(ErrorCode::kParse, "unknown model kind '" + s + "'");
}

void Classifier::CheckBatch(const Tensor& batch) const {
  const Shape& want = info_.input_shape;
  const Shape& got = batch.shape();
  const bool ok = got.size() == 4 && got[1] == want[0] && got[2] == want[1] &&
                  got[3] == want[2];
  Require(ok, ErrorCode::kShapeMismatch,
          "model '" + info_.model_id + "' expects batches (N, " +
              std::to_string(want[0]) + ", " + std::to_string(want[1]) + ", " +
              std::to_string(want[2]) + "), got " + ShapeString(got));
}

Tensor Classifier::Logits(const Tensor& batch) const {
  return Trace(batch, {})->logits();
}

// --------------------------------------------------------------- Sequential

namespace {

class SequentialTrace final : public ForwardTrace {
 public:
  const Tensor& Activation(const std::string& name) const override {
    auto it = named.find(name);
    Require(it != named.end(), ErrorCode::kUnknownLayer,
            "no activation named '" + name + "'");
    return outputs[it->second];
  }

  std::vector<nn::Cache> caches;
  std::vector<Tensor> outputs;
  std::map<std::string, std::size_t> named;
  std::vector<std::string> layer_names;

  void set_logits(Tensor t) { logits_ = std::move(t); }
};

std::string UnknownLayerMessage(const std::string& name,
                                const std::vector<std::string>& valid) {
  std::string msg = "unknown layer '" + name + "'; valid layers:";
  for (const auto& v : valid) msg += " " + v;
  return msg;
}

}  // namespace

SequentialClassifier::SequentialClassifier(ModelInfo info,
                                           std::vector<Stage> stages)
    : Classifier(std::move(info)), stages_(std::move(stages)) {
  info_.layer_names.clear();
  for (const auto& s : stages_) {
    if (!s.name.empty()) info_.layer_names.push_back(s.name);
  }
}

std::unique_ptr<ForwardTrace> SequentialClassifier::Trace(
    const Tensor& batch, const TraceOptions& options) const {
  CheckBatch(batch);
  auto trace = std::make_unique<SequentialTrace>();
  trace->caches.resize(stages_.size());
  trace->outputs.reserve(stages_.size());
  Tensor x = batch;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    x = stages_[i].layer->Forward(x, trace->caches[i], options.training);
    const std::string& name = stages_[i].name;
    if (options.activation_nudge && !name.empty() &&
        options.activation_nudge->layer == name) {
      Require(options.activation_nudge->index < x.size(),
              ErrorCode::kInvalidArgument, "activation nudge out of range");
      x[options.activation_nudge->index] += options.activation_nudge->delta;
    }
    if (!name.empty()) trace->named[name] = i;
    trace->outputs.push_back(x);
  }
  if (options.activation_nudge) {
    Require(trace->named.count(options.activation_nudge->layer) == 1,
            ErrorCode::kUnknownLayer,
            UnknownLayerMessage(options.activation_nudge->layer,
                                info_.layer_names));
  }
  Require(x.rank() == 2 && x.dim(1) == info_.num_classes, ErrorCode::kInternal,
          "sequential model did not produce (N, C) logits");
  trace->set_logits(x);
  return trace;
}

BackwardResult SequentialClassifier::Backward(const ForwardTrace& base,
                                              const Tensor& cotangent,
                                              const BackwardRequest& request) const {
  const auto& trace = dynamic_cast<const SequentialTrace&>(base);
  Require(cotangent.shape() == trace.logits().shape(),
          ErrorCode::kShapeMismatch,
          "logit cotangent " + ShapeString(cotangent.shape()) +
              " does not match logits " + ShapeString(trace.logits().shape()));
  for (const auto& s : stages_) {
    Require(s.layer->differentiable(), ErrorCode::kNotDifferentiable,
            "model '" + info_.model_id + "' contains a non-differentiable '" +
                s.layer->type() + "' stage");
  }
  for (const auto& name : request.layers) {
    Require(trace.named.count(name) == 1, ErrorCode::kUnknownLayer,
            UnknownLayerMessage(name, info_.layer_names));
  }
  Require(!request.attentions, ErrorCode::kUnsupported,
          "attention gradients requested from a CNN handle");

  // Parameter gradient slots, laid out like MutableParams().
  std::vector<std::size_t> param_offset(stages_.size(), 0);
  if (request.param_grads) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      param_offset[i] = off;
      off += stages_[i].layer->params().size();
    }
    Require(request.param_grads->size() == off, ErrorCode::kInternal,
            "param gradient slot count mismatch");
  }

  BackwardResult result;
  Tensor grad = cotangent;
  for (std::size_t i = stages_.size(); i-- > 0;) {
    const auto& stage = stages_[i];
    if (!stage.name.empty() &&
        std::find(request.layers.begin(), request.layers.end(), stage.name) !=
            request.layers.end()) {
      result.layers[stage.name] = grad;
    }
    if (request.bias_terms && grad.rank() == 4) {
      if (auto bias = stage.layer->EffectiveBias()) {
        Tensor term = grad;
        const std::size_t ch = grad.dim(1), hw = grad.dim(2) * grad.dim(3);
        for (std::size_t n = 0; n < grad.dim(0); ++n) {
          for (std::size_t c = 0; c < ch; ++c) {
            double* p = term.data() + (n * ch + c) * hw;
            for (std::size_t k = 0; k < hw; ++k) p[k] *= (*bias)[c];
          }
        }
        result.bias_terms.push_back(
            {stage.layer->type() + "@" + std::to_string(i), std::move(term)});
      }
    }
    std::span<Tensor> pg;
    if (request.param_grads && !stage.layer->params().empty()) {
      pg = std::span<Tensor>(request.param_grads->data() + param_offset[i],
                             stage.layer->params().size());
    }
    grad = stage.layer->Backward(grad, trace.caches[i], pg);
  }
  std::reverse(result.bias_terms.begin(), result.bias_terms.end());
  if (request.input) result.input = std::move(grad);
  return result;
}

std::vector<nn::Param*> SequentialClassifier::MutableParams() {
  std::vector<nn::Param*> out;
  for (auto& s : stages_) {
    for (auto& p : s.layer->params()) out.push_back(&p);
  }
  return out;
}

std::vector<const nn::Param*> SequentialClassifier::Params() const {
  std::vector<const nn::Param*> out;
  for (const auto& s : stages_) {
    for (const auto& p : s.layer->params()) out.push_back(&p);
  }
  return out;
}

void SequentialClassifier::UpdateStatistics(const ForwardTrace& base) {
  const auto& trace = dynamic_cast<const SequentialTrace&>(base);
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    stages_[i].layer->UpdateStatistics(trace.caches[i]);
  }
}

nlohmann::json SequentialClassifier::Architecture() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& s : stages_) {
    nlohmann::json c = s.layer->Config();
    if (!s.name.empty()) c["name"] = s.name;
    layers.push_back(std::move(c));
  }
  return {{"family", "sequential"}, {"layers", std::move(layers)}};
}

// ------------------------------------------------------------------ builders

std::unique_ptr<Classifier> MakeToyCnn(const std::string& model_id,
                                       const ToyCnnConfig& config,
                                       std::uint64_t seed) {
  Require(config.channels.size() == config.pool_after.size(),
          ErrorCode::kInvalidArgument, "toy cnn: channels/pool size mismatch");
  Rng rng(seed);
  std::vector<SequentialClassifier::Stage> stages;
  stages.push_back({std::make_unique<nn::Normalize>(config.mean, config.stddev), ""});
  std::size_t in = config.input_shape.at(0);
  for (std::size_t b = 0; b < config.channels.size(); ++b) {
    auto conv = std::make_unique<nn::Conv2d>(in, config.channels[b], 3);
    conv->InitHe(rng);
    stages.push_back({std::move(conv), ""});
    stages.push_back({std::make_unique<nn::BatchNorm2d>(config.channels[b]), ""});
    stages.push_back({std::make_unique<nn::ReLU>(), "block" + std::to_string(b + 1)});
    if (config.pool_after[b]) stages.push_back({std::make_unique<nn::MaxPool2d>(), ""});
    in = config.channels[b];
  }
  stages.push_back({std::make_unique<nn::GlobalAvgPool>(), ""});
  auto head = std::make_unique<nn::Linear>(in, config.num_classes);
  head->InitHe(rng);
  stages.push_back({std::move(head), "logits"});
  ModelInfo info{model_id, config.num_classes, config.input_shape, {},
                 ModelKind::kCnn};
  return std::make_unique<SequentialClassifier>(std::move(info), std::move(stages));
}

std::unique_ptr<Classifier> MakeLinearClassifier(const std::string& model_id,
                                                 const Shape& input_shape,
                                                 std::size_t num_classes,
                                                 bool bias, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SequentialClassifier::Stage> stages;
  stages.push_back({std::make_unique<nn::Flatten>(), ""});
  auto head = std::make_unique<nn::Linear>(ShapeSize(input_shape), num_classes, bias);
  head->InitHe(rng);
  if (bias) {
    for (double& v : head->params()[1].value.storage()) v = 0.1 * rng.Normal();
  }
  stages.push_back({std::move(head), "logits"});
  ModelInfo info{model_id, num_classes, input_shape, {}, ModelKind::kCnn};
  return std::make_unique<SequentialClassifier>(std::move(info), std::move(stages));
}

std::unique_ptr<Classifier> ClassifierFromDescriptor(const nlohmann::json& d) {
  ModelInfo info;
  info.model_id = d.at("model_id").get<std::string>();
  info.kind = ParseModelKind(d.at("kind").get<std::string>());
  info.num_classes = d.at("num_classes").get<std::size_t>();
  info.input_shape = d.at("input_shape").get<Shape>();
  const auto& arch = d.at("architecture");
  std::unique_ptr<Classifier> model;
  if (info.kind == ModelKind::kPatchTransformer) {
    model = MakePatchTransformer(info.model_id,
                                 PatchTransformerConfig::FromJson(arch), 0);
  } else {
    std::vector<SequentialClassifier::Stage> stages;
    for (const auto& c : arch.at("layers")) {
      stages.push_back({nn::LayerFromConfig(c), c.value("name", std::string())});
    }
    model = std::make_unique<SequentialClassifier>(info, std::move(stages));
  }
  const auto declared = d.at("layer_names").get<std::vector<std::string>>();
  Require(declared == model->info().layer_names, ErrorCode::kParse,
          "descriptor layer_names do not match the architecture");
  return model;
}

// ------------------------------------------------------------------ registry

nlohmann::json Descriptor(const Classifier& model) {
  const ModelInfo& info = model.info();
  return {{"model_id", info.model_id},
          {"kind", ToString(info.kind)},
          {"num_classes", info.num_classes},
          {"input_shape", info.input_shape},
          {"layer_names", info.layer_names},
          {"architecture", model.Architecture()}};
}

namespace {

constexpr char kWeightsMagic[8] = {'C', 'C', 'B', 'P', 'W', '0', '0', '1'};

template <typename T>
void WritePod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T ReadPod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  Require(static_cast<bool>(in), ErrorCode::kIo, "truncated weight file");
  return v;
}

}  // namespace

void SaveModel(const Classifier& model, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::string stem = dir + "/" + model.info().model_id;
  {
    std::ofstream out(stem + ".json");
    Require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + stem + ".json");
    out << Descriptor(model).dump(2) << '\n';
  }
  std::ofstream out(stem + ".weights", std::ios::binary);
  Require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + stem + ".weights");
  out.write(kWeightsMagic, sizeof(kWeightsMagic));
  const auto params = model.Params();
  WritePod<std::uint64_t>(out, params.size());
  for (const nn::Param* p : params) {
    WritePod<std::uint64_t>(out, p->value.size());
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
}

std::unique_ptr<Classifier> LoadModel(const std::string& dir,
                                      const std::string& model_id) {
  const std::string stem = dir + "/" + model_id;
  std::ifstream desc(stem + ".json");
  Require(static_cast<bool>(desc), ErrorCode::kIo,
          "model '" + model_id + "' not found in registry " + dir +
              " (run `ccbp bootstrap` to train the toy models)");
  nlohmann::json d;
  try {
    desc >> d;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kParse, stem + ".json: " + e.what());
  }
  auto model = ClassifierFromDescriptor(d);
  std::ifstream in(stem + ".weights", std::ios::binary);
  Require(static_cast<bool>(in), ErrorCode::kIo, "missing " + stem + ".weights");
  char magic[8];
  in.read(magic, sizeof(magic));
  Require(in && std::memcmp(magic, kWeightsMagic, sizeof(magic)) == 0,
          ErrorCode::kParse, stem + ".weights: bad magic");
  auto params = model->MutableParams();
  const auto count = ReadPod<std::uint64_t>(in);
  Require(count == params.size(), ErrorCode::kParse,
          stem + ".weights: parameter count mismatch");
  for (nn::Param* p : params) {
    const auto n = ReadPod<std::uint64_t>(in);
    Require(n == p->value.size(), ErrorCode::kParse,
            stem + ".weights: size mismatch for " + p->name);
    in.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    Require(static_cast<bool>(in), ErrorCode::kIo, "truncated weight file");
  }
  return model;
}

}  // namespace ccbp
