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

namespace ccbp {

/// Predicate on the k-th largest class probability, written "p2>0.1".
struct Threshold {
  std::size_t rank = 2;  // 1-based rank of the probability tested
  bool above = true;     // p_k > value, otherwise p_k < value
  double value = 0.1;

  bool Accept(double p_k) const { return above ? p_k > value : p_k < value; }
  /// Tests the rank-th largest entry of a probability vector.
  bool AcceptProbabilities(std::span<const double> probs) const;
  std::string ToString() const;
  static Threshold Parse(const std::string& s);
};

}  // namespace ccbp
