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

#include "ccbp/resize.hpp"

#include <algorithm>
#include <cmath>

#include "ccbp/error.hpp"

namespace ccbp {
namespace {

struct Tap {
  std::size_t lo, hi;
  double frac;
};

std::vector<Tap> Taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    taps[i] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
  }
  return taps;
}

void ResizePlane(const double* in, std::size_t w, double* out,
                 const std::vector<Tap>& ty, const std::vector<Tap>& tx) {
  for (std::size_t y = 0; y < ty.size(); ++y) {
    const double* r0 = in + ty[y].lo * w;
    const double* r1 = in + ty[y].hi * w;
    const double fy = ty[y].frac;
    for (std::size_t x = 0; x < tx.size(); ++x) {
      const double fx = tx[x].frac;
      const double top = r0[tx[x].lo] * (1.0 - fx) + r0[tx[x].hi] * fx;
      const double bottom = r1[tx[x].lo] * (1.0 - fx) + r1[tx[x].hi] * fx;
      out[y * tx.size() + x] = top * (1.0 - fy) + bottom * fy;
    }
  }
}

}  // namespace

Tensor BilinearResize(const Tensor& grid, std::size_t out_h, std::size_t out_w) {
  Require(grid.rank() == 2 || grid.rank() == 3, ErrorCode::kShapeMismatch,
          "resize expects (H, W) or (C, H, W), got " + ShapeString(grid.shape()));
  Require(out_h > 0 && out_w > 0, ErrorCode::kInvalidArgument, "empty resize target");
  const std::size_t planes = grid.rank() == 3 ? grid.dim(0) : 1;
  const std::size_t h = grid.dim(grid.rank() - 2), w = grid.dim(grid.rank() - 1);
  Require(h > 0 && w > 0, ErrorCode::kInvalidArgument, "cannot resize an empty grid");
  if (h == out_h && w == out_w) return grid;
  const auto ty = Taps(h, out_h), tx = Taps(w, out_w);
  Tensor out(grid.rank() == 3 ? Shape{planes, out_h, out_w} : Shape{out_h, out_w});
  for (std::size_t p = 0; p < planes; ++p) {
    ResizePlane(grid.data() + p * h * w, w, out.data() + p * out_h * out_w, ty, tx);
  }
  return out;
}

Tensor ChannelSum(const Tensor& chw) {
  Require(chw.rank() == 3, ErrorCode::kShapeMismatch,
          "channel sum expects (C, H, W), got " + ShapeString(chw.shape()));
  const std::size_t plane = chw.dim(1) * chw.dim(2);
  Tensor out({chw.dim(1), chw.dim(2)});
  for (std::size_t c = 0; c < chw.dim(0); ++c) {
    for (std::size_t i = 0; i < plane; ++i) out[i] += chw[c * plane + i];
  }
  return out;
}

}  // namespace ccbp
