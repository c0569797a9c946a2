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

#include "ccbp/threshold.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "ccbp/error.hpp"

namespace ccbp {

bool Threshold::AcceptProbabilities(std::span<const double> probs) const {
  Require(rank >= 1 && rank <= probs.size(), ErrorCode::kInvalidArgument,
          "threshold " + ToString() + " needs at least " + std::to_string(rank) + " classes");
  std::vector<double> p(probs.begin(), probs.end());
  std::nth_element(p.begin(), p.begin() + static_cast<long>(rank - 1), p.end(),
                   std::greater<>());
  return Accept(p[rank - 1]);
}

std::string Threshold::ToString() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "p%zu%s%g", rank, above ? ">" : "<", value);
  return buf;
}

Threshold Threshold::Parse(const std::string& s) {
  std::string t;
  for (char c : s) {
    if (c != ' ') t += c;
  }
  const auto op = t.find_first_of("<>");
  const bool shape_ok = t.size() > 2 && t[0] == 'p' && op != std::string::npos && op > 1 &&
                        op + 1 < t.size() &&
                        std::all_of(t.begin() + 1, t.begin() + static_cast<long>(op),
                                    [](char c) { return c >= '0' && c <= '9'; });
  Require(shape_ok, ErrorCode::kInvalidArgument,
          "threshold must look like 'p2>0.1', got '" + s + "'");
  Threshold th;
  th.rank = std::stoul(t.substr(1, op - 1));
  th.above = t[op] == '>';
  std::size_t used = 0;
  try {
    th.value = std::stod(t.substr(op + 1), &used);
  } catch (const std::exception&) {
    used = 0;
  }
  Require(th.rank >= 1 && used == t.size() - op - 1 && std::isfinite(th.value),
          ErrorCode::kInvalidArgument, "malformed threshold '" + s + "'");
  return th;
}

}  // namespace ccbp
