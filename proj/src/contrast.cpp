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

#include "ccbp/contrast.hpp"

#include <algorithm>
#include <cmath>

#include "ccbp/error.hpp"

namespace ccbp {

std::string ToString(Combinator c) {
  switch (c) {
    case Combinator::kOriginal: return "original";
    case Combinator::kMean: return "mean";
    case Combinator::kMax: return "max";
    case Combinator::kWeighted: return "weighted";
  }
  return "unknown";
}

Combinator ParseCombinator(const std::string& s) {
  if (s == "original") return Combinator::kOriginal;
  if (s == "mean") return Combinator::kMean;
  if (s == "max") return Combinator::kMax;
  if (s == "weighted") return Combinator::kWeighted;
  Fail(ErrorCode::kInvalidArgument, "unknown combinator '" + s + "'");
}

namespace {

void CheckTarget(std::span<const double> logits, std::size_t t) {
  Require(logits.size() >= 2, ErrorCode::kInvalidArgument,
          "contrast needs at least two classes");
  Require(t < logits.size(), ErrorCode::kInvalidArgument,
          "target class " + std::to_string(t) + " outside [0, " +
              std::to_string(logits.size()) + ")");
  for (double y : logits) {
    Require(std::isfinite(y), ErrorCode::kInvalidArgument, "non-finite logit");
  }
}

}  // namespace

std::vector<double> AlphaWeights(std::span<const double> logits, std::size_t t) {
  CheckTarget(logits, t);
  double mx = -INFINITY;
  for (std::size_t s = 0; s < logits.size(); ++s) {
    if (s != t) mx = std::max(mx, logits[s]);
  }
  std::vector<double> w;
  double sum = 0.0;
  for (std::size_t s = 0; s < logits.size(); ++s) {
    if (s == t) continue;
    w.push_back(std::exp(logits[s] - mx));
    sum += w.back();
  }
  for (double& v : w) v /= sum;
  return w;
}

std::size_t RunnerUp(std::span<const double> logits, std::size_t t, bool* tied) {
  CheckTarget(logits, t);
  std::size_t best = t == 0 ? 1 : 0;
  bool tie = false;
  for (std::size_t s = best + 1; s < logits.size(); ++s) {
    if (s == t) continue;
    if (logits[s] > logits[best]) {
      best = s;
      tie = false;
    } else if (logits[s] == logits[best]) {
      tie = true;
    }
  }
  if (tied) *tied = tie;
  return best;
}

std::vector<double> ContrastCoefficients(std::span<const double> logits,
                                         const ContrastSpec& spec,
                                         std::vector<std::string>* notes) {
  CheckTarget(logits, spec.target_class);
  const std::size_t c = logits.size(), t = spec.target_class;
  std::vector<double> coef(c, 0.0);
  coef[t] = 1.0;
  switch (spec.combinator) {
    case Combinator::kOriginal:
      break;
    case Combinator::kMean: {
      const double w = spec.mean_scaled ? 1.0 / static_cast<double>(c - 1) : 1.0;
      for (std::size_t s = 0; s < c; ++s) {
        if (s != t) coef[s] = -w;
      }
      break;
    }
    case Combinator::kMax: {
      bool tied = false;
      const std::size_t s = RunnerUp(logits, t, &tied);
      coef[s] = -1.0;
      if (tied && notes) {
        notes->push_back("max contrast: runner-up tie broken to lowest class " +
                         std::to_string(s));
      }
      break;
    }
    case Combinator::kWeighted: {
      const auto alpha = AlphaWeights(logits, t);
      std::size_t k = 0;
      for (std::size_t s = 0; s < c; ++s) {
        if (s != t) coef[s] = -alpha[k++];
      }
      break;
    }
  }
  return coef;
}

Tensor Combine(std::span<const Tensor> per_class, std::span<const double> logits,
               const ContrastSpec& spec, std::vector<std::string>* notes) {
  Require(per_class.size() == logits.size(), ErrorCode::kInvalidArgument,
          "incomplete class set: " + std::to_string(per_class.size()) + " maps for " +
              std::to_string(logits.size()) + " classes");
  const auto coef = ContrastCoefficients(logits, spec, notes);
  const std::size_t t = spec.target_class;
  Tensor out = per_class[t];
  for (std::size_t s = 0; s < per_class.size(); ++s) {
    Require(per_class[s].shape() == out.shape(), ErrorCode::kShapeMismatch,
            "class maps differ in shape");
    if (s == t || coef[s] == 0.0) continue;
    out.Axpy(coef[s], per_class[s]);
  }
  return out;
}

ExplanationMap Combine(const ClassMaps& set, const ContrastSpec& spec) {
  Require(!set.maps.empty() && set.maps.size() == set.logits.size(),
          ErrorCode::kInvalidArgument, "incomplete class set");
  std::vector<Tensor> values;
  for (const auto& m : set.maps) values.push_back(m.values);
  ExplanationMap out = set.maps.at(spec.target_class);
  out.values = Combine(values, set.logits, spec, &out.notes);
  out.notes.push_back("contrast=" + ToString(spec.combinator));
  return out;
}

Tensor JacobianCombination(const ClassMaps& set, std::size_t t) {
  Require(set.maps.size() == set.logits.size() && t < set.maps.size(),
          ErrorCode::kInvalidArgument, "incomplete class set");
  const Tensor jac = SoftmaxJacobian(set.logits);
  Tensor out(set.maps.front().values.shape());
  for (std::size_t s = 0; s < set.maps.size(); ++s) out.Axpy(jac.at(t, s), set.maps[s].values);
  return out;
}

EquivalenceReport VerifySoftmaxEquivalence(const Classifier& model, const Tensor& image,
                                           const ExplainRequest& request) {
  if (!IsSeedLinear(request)) {
    Fail(ErrorCode::kInvalidArgument,
         "method '" + ToString(request.method) + "' with relu_mode '" +
             ToString(request.relu_mode) +
             "' is not linear in the seed, so per-class maps do not combine into the "
             "softmax-seed map");
  }
  ExplainRequest soft = request;
  soft.seed_mode = SeedMode::kSoftmax;
  const ExplanationMap direct = Explain(model, image, soft);
  const ClassMaps set = ExplainAllClasses(model, image, request);
  std::vector<Tensor> per_class;
  for (const auto& m : set.maps) per_class.push_back(m.values);
  const Tensor weighted =
      Combine(per_class, set.logits, {Combinator::kWeighted, request.target_class});
  EquivalenceReport r;
  r.p_t = Softmax(set.logits)[request.target_class];
  r.expected_scale = r.p_t * (1.0 - r.p_t);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < weighted.size(); ++i) {
    num += direct.values[i] * weighted[i];
    den += weighted[i] * weighted[i];
  }
  r.degenerate = den == 0.0;
  r.scale_factor = r.degenerate ? r.expected_scale : num / den;
  r.max_rel_error = MaxRelativeError(direct.values, r.expected_scale * weighted);
  return r;
}

}  // namespace ccbp
