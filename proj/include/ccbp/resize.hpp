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

#include "ccbp/tensor.hpp"

namespace ccbp {

/// Bilinear resampling of an (H, W) grid with half-pixel centres
/// (align_corners = false) and edge clamping. Also accepts (C, H, W), resizing
/// each plane.
Tensor BilinearResize(const Tensor& grid, std::size_t out_h, std::size_t out_w);

/// Sums a (C, H, W) tensor over its leading axis.
Tensor ChannelSum(const Tensor& chw);

}  // namespace ccbp
