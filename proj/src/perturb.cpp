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

#include "ccbp/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ccbp/error.hpp"
#include "ccbp/gradients.hpp"
#include "ccbp/parallel.hpp"

namespace ccbp {

std::string ToString(TargetRule r) {
  return r == TargetRule::kTrueLabel ? "true_label" : "predicted_label";
}

TargetRule ParseTargetRule(const std::string& s) {
  if (s == "true_label") return TargetRule::kTrueLabel;
  if (s == "predicted_label") return TargetRule::kPredictedLabel;
  Fail(ErrorCode::kInvalidArgument,
       "unknown target_rule '" + s + "' (expected true_label or predicted_label)");
}

double PerturbConfig::step() const {
  return n_total == 0 ? 0.0 : epsilon / static_cast<double>(n_total);
}

void PerturbConfig::Validate() const {
  Require(std::isfinite(epsilon) && epsilon > 0.0, ErrorCode::kInvalidArgument,
          "epsilon must be positive");
  Require(!selectors.empty(), ErrorCode::kInvalidArgument, "selectors must be non-empty");
  for (std::size_t i = 0; i < selectors.size(); ++i) {
    for (std::size_t j = i + 1; j < selectors.size(); ++j) {
      Require(selectors[i] != selectors[j], ErrorCode::kInvalidArgument,
              "duplicate selector '" + ToString(selectors[i]) + "'");
    }
  }
}

PerturbConfig PerturbConfig::Preset(const std::string& name) {
  PerturbConfig c;
  if (name == "reported") {
    c.epsilon = 1e-3;
  } else if (name == "used") {
    c.epsilon = 3e-3;
  } else {
    Fail(ErrorCode::kInvalidArgument,
         "unknown perturbation preset '" + name + "' (expected reported or used)");
  }
  return c;
}

nlohmann::json PerturbConfig::ToJson() const {
  nlohmann::json sel = nlohmann::json::array();
  for (auto s : selectors) sel.push_back(ToString(s));
  return {{"epsilon", epsilon},
          {"n_total", n_total},
          {"step", step()},
          {"selectors", sel},
          {"target_rule", ToString(target_rule)},
          {"frozen_explanation", frozen_explanation},
          {"mean_scaled", mean_scaled}};
}

Tensor PerturbStep(const Tensor& x_n, const Tensor& x_0, const Tensor& phi,
                   const PerturbConfig& config) {
  Require(x_n.shape() == x_0.shape() && phi.shape() == x_0.shape(),
          ErrorCode::kShapeMismatch,
          "perturbation shapes differ: x_n " + ShapeString(x_n.shape()) + ", x_0 " +
              ShapeString(x_0.shape()) + ", phi " + ShapeString(phi.shape()));
  const double a = config.step();
  const double eps = config.epsilon;
  Tensor out = x_n;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double g = phi[i];
    const double s = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
    const double lo = std::max(x_0[i] - eps, 0.0);
    const double hi = std::min(x_0[i] + eps, 1.0);
    out[i] = std::clamp(x_n[i] + a * s, lo, hi);
  }
  return out;
}

const SelectorSeries& PerturbationTrace::Get(Combinator c) const {
  for (const auto& s : series) {
    if (s.selector == c) return s;
  }
  Fail(ErrorCode::kInvalidArgument, "trace has no selector '" + ToString(c) + "'");
}

nlohmann::json PerturbationTrace::ToJson() const {
  nlohmann::json sel = nlohmann::json::object();
  for (const auto& s : series) {
    sel[ToString(s.selector)] = {
        {"accuracy", s.accuracy}, {"mean_y_t", s.mean_y_t}, {"mean_p_t", s.mean_p_t}};
  }
  return {{"model_id", model_id},     {"dataset_id", dataset_id},
          {"epsilon", epsilon},       {"n_total", n_total},
          {"sample_count", sample_count}, {"failures", failures},
          {"config", config},         {"selector_order", [&] {
             nlohmann::json order = nlohmann::json::array();
             for (const auto& s : series) order.push_back(ToString(s.selector));
             return order;
           }()},
          {"series", sel}};
}

std::string PerturbationTrace::ToCsv() const {
  std::ostringstream os;
  os << "iteration,selector,accuracy,mean_y_t,mean_p_t\n";
  char buf[160];
  for (const auto& s : series) {
    for (std::size_t n = 0; n < s.accuracy.size(); ++n) {
      std::snprintf(buf, sizeof buf, "%zu,%s,%.17g,%.17g,%.17g\n", n,
                    ToString(s.selector).c_str(), s.accuracy[n], s.mean_y_t[n],
                    s.mean_p_t[n]);
      os << buf;
    }
  }
  return os.str();
}

PerturbationTrace PerturbationTrace::FromJson(const nlohmann::json& j) {
  PerturbationTrace t;
  t.model_id = j.at("model_id").get<std::string>();
  t.dataset_id = j.at("dataset_id").get<std::string>();
  t.epsilon = j.at("epsilon").get<double>();
  t.n_total = j.at("n_total").get<std::size_t>();
  t.sample_count = j.at("sample_count").get<std::size_t>();
  t.failures = j.at("failures").get<std::vector<std::string>>();
  t.config = j.value("config", nlohmann::json::object());
  for (const auto& name : j.at("selector_order")) {
    const auto& s = j.at("series").at(name.get<std::string>());
    SelectorSeries out;
    out.selector = ParseCombinator(name.get<std::string>());
    out.accuracy = s.at("accuracy").get<std::vector<double>>();
    out.mean_y_t = s.at("mean_y_t").get<std::vector<double>>();
    out.mean_p_t = s.at("mean_p_t").get<std::vector<double>>();
    t.series.push_back(std::move(out));
  }
  return t;
}

Tensor ContrastGradient(const Classifier& model, const Tensor& image, Combinator selector,
                        std::size_t target, bool mean_scaled,
                        std::vector<double>* logits_out) {
  const Tensor batch = AsBatch(image);
  Require(batch.dim(0) == 1, ErrorCode::kInvalidArgument,
          "contrast gradients are taken one image at a time");
  auto trace = model.Trace(batch);
  const auto& y = trace->logits().storage();
  if (logits_out != nullptr) *logits_out = y;
  const auto coef = ContrastCoefficients(y, {selector, target, mean_scaled});
  Tensor cot({1, y.size()}, coef);
  Tensor g = model.Backward(*trace, cot, {}).input;
  g.Reshape(image.shape());
  return g;
}

namespace {

struct Point {
  double correct = 0.0;
  double y_t = 0.0;
  double p_t = 0.0;
};

Point Measure(std::span<const double> y, std::size_t target, std::size_t label) {
  const auto p = Softmax(y);
  const auto arg = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  return {arg == label ? 1.0 : 0.0, y[target], p[target]};
}

}  // namespace

PerturbationTrace RunPerturbation(const Classifier& model, const Dataset& data,
                                  const PerturbConfig& config,
                                  const PerturbRunOptions& options) {
  config.Validate();
  const std::size_t n_img = data.size();
  const std::size_t n_sel = config.selectors.size();
  const std::size_t iters = config.n_total + 1;
  const std::size_t classes = model.num_classes();

  // points[i][s][n]
  std::vector<std::vector<std::vector<Point>>> points(n_img);
  std::vector<std::string> errors(n_img);

  ParallelFor(n_img, options.jobs, [&](std::size_t i) {
    try {
      const Tensor& x0 = data.image(i);
      const std::size_t label = data.label(i);
      Require(label < classes, ErrorCode::kInvalidArgument,
              "label " + std::to_string(label) + " out of range");
      const auto y0 = model.Logits(AsBatch(x0)).storage();
      const std::size_t target =
          config.target_rule == TargetRule::kTrueLabel
              ? label
              : static_cast<std::size_t>(std::max_element(y0.begin(), y0.end()) - y0.begin());
      const Point clean = Measure(y0, target, label);
      auto& mine = points[i];
      mine.assign(n_sel, std::vector<Point>(iters));
      for (std::size_t s = 0; s < n_sel; ++s) {
        mine[s][0] = clean;
        Tensor x = x0;
        Tensor frozen;
        std::vector<double> y;
        for (std::size_t n = 1; n < iters; ++n) {
          Tensor phi;
          if (config.frozen_explanation) {
            if (frozen.empty()) {
              frozen = ContrastGradient(model, x0, config.selectors[s], target,
                                        config.mean_scaled);
            }
            phi = frozen;
          } else {
            phi = ContrastGradient(model, x, config.selectors[s], target, config.mean_scaled);
          }
          x = PerturbStep(x, x0, phi, config);
          y = model.Logits(AsBatch(x)).storage();
          Require(std::all_of(y.begin(), y.end(), [](double v) { return std::isfinite(v); }),
                  ErrorCode::kInternal, "non-finite logits");
          mine[s][n] = Measure(y, target, label);
        }
      }
    } catch (const std::exception& e) {
      errors[i] = e.what();
      points[i].clear();
    }
  });

  PerturbationTrace trace;
  trace.model_id = model.info().model_id;
  trace.dataset_id = options.dataset_id;
  trace.epsilon = config.epsilon;
  trace.n_total = config.n_total;
  trace.config = config.ToJson();
  for (std::size_t i = 0; i < n_img; ++i) {
    if (!errors[i].empty()) trace.failures.push_back(data.id(i) + ": " + errors[i]);
  }
  trace.series.resize(n_sel);
  for (std::size_t s = 0; s < n_sel; ++s) {
    auto& out = trace.series[s];
    out.selector = config.selectors[s];
    out.accuracy.assign(iters, 0.0);
    out.mean_y_t.assign(iters, 0.0);
    out.mean_p_t.assign(iters, 0.0);
  }
  std::size_t count = 0;
  for (std::size_t i = 0; i < n_img; ++i) {
    if (points[i].empty()) continue;
    ++count;
    for (std::size_t s = 0; s < n_sel; ++s) {
      for (std::size_t n = 0; n < iters; ++n) {
        trace.series[s].accuracy[n] += points[i][s][n].correct;
        trace.series[s].mean_y_t[n] += points[i][s][n].y_t;
        trace.series[s].mean_p_t[n] += points[i][s][n].p_t;
      }
    }
  }
  trace.sample_count = count;
  Require(count > 0 || n_img == 0, ErrorCode::kEmptyResult,
          "every image failed; first error: " + (n_img ? errors[0] : std::string()));
  if (count > 0) {
    const double inv = 1.0 / static_cast<double>(count);
    for (auto& s : trace.series) {
      for (std::size_t n = 0; n < iters; ++n) {
        s.accuracy[n] *= inv;
        s.mean_y_t[n] *= inv;
        s.mean_p_t[n] *= inv;
      }
    }
  }
  return trace;
}

}  // namespace ccbp
