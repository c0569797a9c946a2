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

#include "ccbp/ccbp.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <mutex>

#include "ccbp/contrast.hpp"
#include "ccbp/dataset.hpp"
#include "ccbp/error.hpp"
#include "ccbp/explainers.hpp"
#include "ccbp/gradients.hpp"
#include "ccbp/perturb.hpp"
#include "ccbp/runner.hpp"
#include "ccbp/zoo.hpp"

struct ccbp_model {
  std::unique_ptr<ccbp::Classifier> impl;
};

struct ccbp_dataset {
  ccbp::Dataset impl;
};

struct ccbp_map {
  ccbp::ExplanationMap impl;
};

namespace {

using ccbp::ErrorCode;
using ccbp::Require;
using nlohmann::json;

thread_local std::string g_last_error;

std::mutex g_log_mutex;
ccbp_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

void Log(const std::string& message) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  if (g_log_fn) g_log_fn(message.c_str(), g_log_user);
}

template <typename F>
ccbp_status Guard(F&& fn) {
  try {
    fn();
    g_last_error.clear();
    return CCBP_OK;
  } catch (const ccbp::Error& e) {
    g_last_error = e.what();
    return static_cast<ccbp_status>(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CCBP_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CCBP_INTERNAL;
  }
}

void NotNull(const void* p, const char* name) {
  Require(p != nullptr, ErrorCode::kInvalidArgument, std::string(name) + " is null");
}

char* Dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  Require(out != nullptr, ErrorCode::kInternal, "out of memory");
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

ccbp::Tensor Image(const ccbp_model* model, const double* pixels, size_t count) {
  NotNull(model, "model");
  NotNull(pixels, "pixels");
  const ccbp::Shape& shape = model->impl->info().input_shape;
  Require(count == ccbp::ShapeSize(shape), ErrorCode::kShapeMismatch,
          "expected " + std::to_string(ccbp::ShapeSize(shape)) + " pixels for " +
              ccbp::ShapeString(shape) + ", got " + std::to_string(count));
  return ccbp::Tensor(shape, std::vector<double>(pixels, pixels + count));
}

json ParseRequest(const char* request_json) {
  if (request_json == nullptr || *request_json == '\0') return json::object();
  json j = json::parse(request_json, nullptr, false);
  Require(!j.is_discarded() && j.is_object(), ErrorCode::kParse,
          "request must be a JSON object");
  return j;
}

ccbp::ExplainRequest BuildRequest(const json& j, const ccbp::Classifier& model,
                                  const ccbp::Tensor& image, std::initializer_list<const char*> extra) {
  static const char* known[] = {"method", "seed_mode", "relu_mode",
                                "target", "layer",     "rollout_residual"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = std::find_if(std::begin(known), std::end(known),
                           [&](const char* k) { return it.key() == k; }) != std::end(known);
    for (const char* e : extra) ok = ok || it.key() == e;
    Require(ok, ErrorCode::kParse, "unknown request key '" + it.key() + "'");
  }
  try {
    ccbp::ExplainRequest r;
    if (j.contains("method")) r.method = ccbp::ParseMethod(j["method"].get<std::string>());
    if (j.contains("seed_mode")) r.seed_mode = ccbp::ParseSeedMode(j["seed_mode"].get<std::string>());
    if (j.contains("relu_mode")) r.relu_mode = ccbp::ParseReluMode(j["relu_mode"].get<std::string>());
    if (j.contains("rollout_residual")) {
      r.rollout_residual = ccbp::ParseRolloutResidual(j["rollout_residual"].get<std::string>());
    }
    if (j.contains("layer") && !j["layer"].is_null()) r.layer_name = j["layer"].get<std::string>();
    if (j.contains("target") && j["target"].is_number()) {
      r.target_class = j["target"].get<std::size_t>();
    } else {
      const auto y = model.Logits(ccbp::AsBatch(image)).storage();
      r.target_class = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
    }
    return r;
  } catch (const json::exception& e) {
    ccbp::Fail(ErrorCode::kParse, e.what());
  }
}

}  // namespace

extern "C" {

const char* ccbp_version(void) { return ccbp::kVersion; }

const char* ccbp_status_name(ccbp_status status) {
  switch (status) {
    case CCBP_OK: return "ok";
    case CCBP_INVALID_ARGUMENT: return "invalid_argument";
    case CCBP_SHAPE_MISMATCH: return "shape_mismatch";
    case CCBP_UNKNOWN_LAYER: return "unknown_layer";
    case CCBP_UNSUPPORTED: return "unsupported";
    case CCBP_NOT_DIFFERENTIABLE: return "not_differentiable";
    case CCBP_IO: return "io";
    case CCBP_PARSE: return "parse";
    case CCBP_EMPTY_RESULT: return "empty_result";
    case CCBP_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* ccbp_last_error(void) { return g_last_error.c_str(); }

void ccbp_set_log_callback(ccbp_log_fn fn, void* user) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  g_log_fn = fn;
  g_log_user = user;
}

void ccbp_string_free(char* s) { std::free(s); }

ccbp_status ccbp_model_load(const char* ref, const char* artifact_root, ccbp_model** out) {
  return Guard([&] {
    NotNull(ref, "ref");
    NotNull(out, "out");
    *out = nullptr;
    const auto root = ccbp::ArtifactRoot(artifact_root ? std::optional<std::string>(artifact_root)
                                                       : std::nullopt);
    auto m = std::make_unique<ccbp_model>();
    m->impl = ccbp::ResolveModel(root, ref, Log);
    *out = m.release();
  });
}

ccbp_status ccbp_model_info(const ccbp_model* model, char** json_out) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(json_out, "json_out");
    const auto& info = model->impl->info();
    const json j = {{"model_id", info.model_id},
                    {"kind", ccbp::ToString(info.kind)},
                    {"num_classes", info.num_classes},
                    {"input_shape", info.input_shape},
                    {"layer_names", info.layer_names}};
    *json_out = Dup(j.dump());
  });
}

ccbp_status ccbp_model_logits(const ccbp_model* model, const double* pixels, size_t pixel_count,
                              double* logits, size_t logit_count) {
  return Guard([&] {
    const ccbp::Tensor x = Image(model, pixels, pixel_count);
    NotNull(logits, "logits");
    Require(logit_count == model->impl->num_classes(), ErrorCode::kShapeMismatch,
            "logit buffer must hold " + std::to_string(model->impl->num_classes()) + " values");
    const auto y = model->impl->Logits(ccbp::AsBatch(x));
    std::copy(y.storage().begin(), y.storage().end(), logits);
  });
}

void ccbp_model_free(ccbp_model* model) { delete model; }

ccbp_status ccbp_dataset_load(const char* manifest_path, size_t limit, ccbp_dataset** out) {
  return Guard([&] {
    NotNull(manifest_path, "manifest_path");
    NotNull(out, "out");
    *out = nullptr;
    ccbp::DatasetOptions opt;
    opt.limit = limit;
    auto d = std::make_unique<ccbp_dataset>();
    d->impl = ccbp::Dataset::Load(manifest_path, opt);
    *out = d.release();
  });
}

size_t ccbp_dataset_size(const ccbp_dataset* data) { return data ? data->impl.size() : 0; }

size_t ccbp_dataset_pixel_count(const ccbp_dataset* data) {
  return data && !data->impl.empty() ? data->impl.image(0).size() : 0;
}

ccbp_status ccbp_dataset_image(const ccbp_dataset* data, size_t index, double* pixels,
                               size_t pixel_count) {
  return Guard([&] {
    NotNull(data, "data");
    NotNull(pixels, "pixels");
    Require(index < data->impl.size(), ErrorCode::kInvalidArgument, "index out of range");
    const auto& img = data->impl.image(index).storage();
    Require(pixel_count == img.size(), ErrorCode::kShapeMismatch,
            "pixel buffer must hold " + std::to_string(img.size()) + " values");
    std::copy(img.begin(), img.end(), pixels);
  });
}

ccbp_status ccbp_dataset_label(const ccbp_dataset* data, size_t index, size_t* label) {
  return Guard([&] {
    NotNull(data, "data");
    NotNull(label, "label");
    Require(index < data->impl.size(), ErrorCode::kInvalidArgument, "index out of range");
    *label = data->impl.label(index);
  });
}

void ccbp_dataset_free(ccbp_dataset* data) { delete data; }

ccbp_status ccbp_explain(const ccbp_model* model, const double* pixels, size_t pixel_count,
                         const char* request_json, ccbp_map** out) {
  return Guard([&] {
    NotNull(out, "out");
    *out = nullptr;
    const ccbp::Tensor x = Image(model, pixels, pixel_count);
    const auto req = BuildRequest(ParseRequest(request_json), *model->impl, x, {});
    auto m = std::make_unique<ccbp_map>();
    m->impl = ccbp::Explain(*model->impl, x, req);
    *out = m.release();
  });
}

ccbp_status ccbp_contrast(const ccbp_model* model, const double* pixels, size_t pixel_count,
                          const char* request_json, ccbp_map** out) {
  return Guard([&] {
    NotNull(out, "out");
    *out = nullptr;
    const ccbp::Tensor x = Image(model, pixels, pixel_count);
    const json j = ParseRequest(request_json);
    const auto req = BuildRequest(j, *model->impl, x, {"combinator", "mean_scaled"});
    Require(req.seed_mode == ccbp::SeedMode::kLogit && ccbp::IsSeedLinear(req), ErrorCode::kInvalidArgument,
            "contrast needs a seed-linear request (logit seed, no final relu)");
    ccbp::ContrastSpec spec;
    spec.target_class = req.target_class;
    try {
      if (j.contains("combinator")) spec.combinator = ccbp::ParseCombinator(j["combinator"].get<std::string>());
      if (j.contains("mean_scaled")) spec.mean_scaled = j["mean_scaled"].get<bool>();
    } catch (const json::exception& e) {
      ccbp::Fail(ErrorCode::kParse, e.what());
    }
    auto m = std::make_unique<ccbp_map>();
    m->impl = ccbp::Combine(ccbp::ExplainAllClasses(*model->impl, x, req), spec);
    *out = m.release();
  });
}

ccbp_status ccbp_map_shape(const ccbp_map* map, size_t* height, size_t* width) {
  return Guard([&] {
    NotNull(map, "map");
    NotNull(height, "height");
    NotNull(width, "width");
    *height = map->impl.height();
    *width = map->impl.width();
  });
}

const double* ccbp_map_data(const ccbp_map* map) {
  return map ? map->impl.values.storage().data() : nullptr;
}

ccbp_status ccbp_map_json(const ccbp_map* map, char** json_out) {
  return Guard([&] {
    NotNull(map, "map");
    NotNull(json_out, "json_out");
    *json_out = Dup(ccbp::Sidecar(map->impl).dump());
  });
}

void ccbp_map_free(ccbp_map* map) { delete map; }

ccbp_status ccbp_verify(const ccbp_model* model, const double* pixels, size_t pixel_count,
                        const char* request_json, double* max_rel_error, double* scale_factor,
                        double* expected_scale) {
  return Guard([&] {
    const ccbp::Tensor x = Image(model, pixels, pixel_count);
    const auto req = BuildRequest(ParseRequest(request_json), *model->impl, x, {});
    const auto r = ccbp::VerifySoftmaxEquivalence(*model->impl, x, req);
    if (max_rel_error) *max_rel_error = r.max_rel_error;
    if (scale_factor) *scale_factor = r.scale_factor;
    if (expected_scale) *expected_scale = r.expected_scale;
  });
}

ccbp_status ccbp_perturb_step(const double* x, const double* x0, const double* phi, size_t count,
                              double epsilon, size_t n_total, double* out) {
  return Guard([&] {
    NotNull(x, "x");
    NotNull(x0, "x0");
    NotNull(phi, "phi");
    NotNull(out, "out");
    ccbp::PerturbConfig cfg;
    cfg.epsilon = epsilon;
    cfg.n_total = n_total;
    Require(n_total > 0, ErrorCode::kInvalidArgument, "n_total must be positive");
    cfg.Validate();
    const ccbp::Shape shape{count};
    const auto r = ccbp::PerturbStep(ccbp::Tensor(shape, std::vector<double>(x, x + count)),
                                     ccbp::Tensor(shape, std::vector<double>(x0, x0 + count)),
                                     ccbp::Tensor(shape, std::vector<double>(phi, phi + count)),
                                     cfg);
    std::copy(r.storage().begin(), r.storage().end(), out);
  });
}

ccbp_status ccbp_run(const char* command, const char* target, const char* config_path,
                     const char* const* overrides, size_t override_count,
                     const char* artifact_root, size_t jobs, int* exit_code,
                     char** summary_json) {
  return Guard([&] {
    NotNull(command, "command");
    NotNull(exit_code, "exit_code");
    Require(override_count == 0 || overrides != nullptr, ErrorCode::kInvalidArgument,
            "overrides is null");
    ccbp::RunRequest req;
    req.command = command;
    if (target) req.target = target;
    if (config_path) req.config_path = config_path;
    for (size_t i = 0; i < override_count; ++i) {
      NotNull(overrides[i], "override");
      req.overrides.emplace_back(overrides[i]);
    }
    if (artifact_root) req.artifact_root = artifact_root;
    req.jobs = jobs;
    req.log = Log;
    const auto r = ccbp::Run(req);
    *exit_code = r.exit_code;
    if (summary_json) *summary_json = Dup(r.summary.dump());
  });
}

}  // extern "C"
