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

#include "ccbp/toydata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "ccbp/error.hpp"
#include "ccbp/image_io.hpp"
#include "ccbp/rng.hpp"

namespace ccbp {
namespace {

constexpr std::size_t kShapes = 5;

const std::array<std::array<double, 3>, 5> kColours = {{
    {0.95, 0.15, 0.10},  // red
    {0.15, 0.85, 0.20},  // green
    {0.15, 0.25, 0.95},  // blue
    {0.95, 0.90, 0.10},  // yellow
    {0.10, 0.90, 0.90},  // cyan
}};
const std::array<const char*, 5> kColourNames = {"red", "green", "blue", "yellow", "cyan"};
const std::array<const char*, 5> kShapeNames = {"disc", "ring", "hbar", "vbar", "cross"};

std::size_t ShapeOf(std::size_t cls) { return cls % kShapes; }
std::size_t ColourOf(std::size_t cls) {
  return cls < kShapes ? (cls + 1) % 5 : (cls - kShapes + 3) % 5;
}

// Soft coverage in [0, 1] of pixel (x, y) by a shape centred at (cx, cy).
double Coverage(std::size_t shape, double x, double y, double cx, double cy, double r) {
  const double dx = x - cx, dy = y - cy;
  const double d = std::hypot(dx, dy);
  auto inside = [](double margin) { return std::clamp(0.5 + margin, 0.0, 1.0); };
  switch (shape) {
    case 0: return inside(r - d);
    case 1: return inside(1.3 - std::abs(d - r));
    case 2: return std::min(inside(1.6 - std::abs(dy)), inside(r + 1.0 - std::abs(dx)));
    case 3: return std::min(inside(1.6 - std::abs(dx)), inside(r + 1.0 - std::abs(dy)));
    default:
      return std::min(inside(1.3 - std::abs(std::abs(dx) - std::abs(dy))),
                      inside(r - std::max(std::abs(dx), std::abs(dy))));
  }
}

void Paint(Tensor& img, std::size_t cls, double strength, Rng& rng, double lo, double hi) {
  const std::size_t n = img.dim(1);
  const double cx = rng.Uniform(lo, hi), cy = rng.Uniform(lo, hi);
  const double r = rng.Uniform(3.5, 5.0);
  const auto& colour = kColours[ColourOf(cls)];
  const double gain = rng.Uniform(0.85, 1.0);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double m = strength * Coverage(ShapeOf(cls), x + 0.5, y + 0.5, cx, cy, r);
      if (m <= 0.0) continue;
      for (std::size_t c = 0; c < 3; ++c) {
        double& v = img.at(c, y, x);
        v = (1.0 - m) * v + m * gain * colour[c];
      }
    }
  }
}

}  // namespace

const std::array<std::string, kToyClasses>& ToyClassNames() {
  static const std::array<std::string, kToyClasses> names = [] {
    std::array<std::string, kToyClasses> out;
    for (std::size_t c = 0; c < kToyClasses; ++c) {
      out[c] = std::string(kColourNames[ColourOf(c)]) + " " + kShapeNames[ShapeOf(c)];
    }
    return out;
  }();
  return names;
}

Dataset GenerateToyDataset(std::size_t count, std::uint64_t seed,
                           const std::string& id_prefix, const ToyDataConfig& config) {
  Require(config.size >= 12, ErrorCode::kInvalidArgument, "toy images need size >= 12");
  Rng rng(seed);
  const double s = static_cast<double>(config.size);
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t label = rng.Index(kToyClasses);
    Tensor img({3, config.size, config.size});
    const double bg = rng.Uniform(0.3, 0.55);
    const double tint = rng.Uniform(-0.05, 0.05);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < config.size * config.size; ++p) {
        img[c * config.size * config.size + p] = bg + (c == 2 ? tint : 0.0);
      }
    }
    const bool distractor = rng.Uniform() < config.distractor_prob;
    if (distractor) {
      std::size_t other = rng.Index(kToyClasses - 1);
      if (other >= label) ++other;
      const double w = rng.Uniform(config.distractor_min, config.distractor_max);
      Paint(img, other, w, rng, 0.2 * s, 0.8 * s);
    }
    Paint(img, label, 1.0, rng, 0.25 * s, 0.75 * s);
    for (double& v : img.storage()) {
      v = std::clamp(v + config.noise * rng.Normal(), 0.0, 1.0);
      v = std::round(v * 255.0) / 255.0;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%05zu", i);
    images.push_back(std::move(img));
    labels.push_back(label);
    ids.push_back(id_prefix + buf);
  }
  return Dataset(std::move(images), std::move(labels), std::move(ids));
}

std::string WriteDataset(const Dataset& dataset, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const std::string rel = "images/" + dataset.id(i) + ".png";
    WritePng((fs::path(dir) / rel).string(), ToRgb(dataset.image(i)));
    entries.push_back({dataset.id(i), rel, dataset.label(i)});
  }
  const std::string manifest = (fs::path(dir) / "manifest.tsv").string();
  WriteManifest(manifest, entries);
  return manifest;
}

}  // namespace ccbp
