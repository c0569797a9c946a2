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
#include <string>
#include <vector>

#include "ccbp/explainers.hpp"

namespace ccbp {

enum class Combinator { kOriginal, kMean, kMax, kWeighted };

std::string ToString(Combinator c);
Combinator ParseCombinator(const std::string& s);

struct ContrastSpec {
  Combinator combinator = Combinator::kWeighted;
  std::size_t target_class = 0;
  /// Mean contrast divides the other-class sum by C - 1. Off gives the bare
  /// sum.
  bool mean_scaled = true;
};

/// alpha_s = exp(y_s) / sum_{k != t} exp(y_k) for s != t, in class order
/// with t skipped. Needs at least two classes.
std::vector<double> AlphaWeights(std::span<const double> logits, std::size_t t);

/// Index of the largest non-target logit; ties go to the lowest index.
/// `tied` reports whether a tie was broken.
std::size_t RunnerUp(std::span<const double> logits, std::size_t t, bool* tied = nullptr);

/// Per-class coefficients c with combine(phi) = sum_s c_s phi^s. c_t = 1.
/// `notes` (optional) receives provenance such as tie breaks.
std::vector<double> ContrastCoefficients(std::span<const double> logits,
                                         const ContrastSpec& spec,
                                         std::vector<std::string>* notes = nullptr);

/// Applies the combinator to per-class tensors of any (equal) shape:
/// phi^t minus the coefficient-weighted other classes, in class order.
Tensor Combine(std::span<const Tensor> per_class, std::span<const double> logits,
               const ContrastSpec& spec, std::vector<std::string>* notes = nullptr);

/// Same on a full set of logit-seed maps; provenance follows the set.
ExplanationMap Combine(const ClassMaps& set, const ContrastSpec& spec);

/// sum_s (dp_t/dy_s) phi^s over a full set of logit-seed maps.
Tensor JacobianCombination(const ClassMaps& set, std::size_t t);

struct EquivalenceReport {
  double max_rel_error = 0.0;   // softmax-seed map vs p_t(1 - p_t) * weighted
  double scale_factor = 0.0;    // least-squares ratio softmax-seed / weighted
  double expected_scale = 0.0;  // p_t (1 - p_t)
  double p_t = 0.0;
  bool degenerate = false;      // weighted map is identically zero
};

/// One softmax-seed back-propagation against C logit-seed ones. Rejects
/// methods that are not linear in the seed.
EquivalenceReport VerifySoftmaxEquivalence(const Classifier& model, const Tensor& image,
                                           const ExplainRequest& request);

}  // namespace ccbp
