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

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ccbp/tensor.hpp"

namespace ccbp {

/// 8-bit interleaved RGB raster.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h, std::uint8_t fill = 0)
      : width(w), height(h), rgb(w * h * 3, fill) {}

  std::uint8_t* px(std::size_t x, std::size_t y) { return &rgb[(y * width + x) * 3]; }
  const std::uint8_t* px(std::size_t x, std::size_t y) const {
    return &rgb[(y * width + x) * 3];
  }
};

/// Encodes `image` as PNG. `text` entries become tEXt chunks in key order,
/// so output bytes depend only on the arguments.
void WritePng(const std::string& path, const RgbImage& image,
              const std::map<std::string, std::string>& text = {});

/// Decodes any PNG colour type to RGB. Throws kIo when the file is missing
/// and kParse when it is not a readable PNG.
RgbImage ReadPng(const std::string& path);

/// tEXt chunks of a PNG file.
std::map<std::string, std::string> ReadPngText(const std::string& path);

/// (3, H, W) tensor in [0, 1] <-> 8-bit raster (rounded, clamped).
Tensor ToTensor(const RgbImage& image);
RgbImage ToRgb(const Tensor& chw);

}  // namespace ccbp
