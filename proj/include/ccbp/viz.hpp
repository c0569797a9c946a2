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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccbp/dataset.hpp"
#include "ccbp/image_io.hpp"
#include "ccbp/model.hpp"
#include "ccbp/perturb.hpp"
#include "ccbp/threshold.hpp"

namespace ccbp {

struct RenderSpec {
  double overlay_alpha = 0.5;
  /// Subtract the map's median before the centered norm (display only; for
  /// single-signed FullGrad contrasts).
  bool median_center = false;
  /// Nearest-neighbour magnification of the final raster.
  std::size_t scale = 1;

  void Validate() const;
};

/// Diverging blue-white-red colormap on [-1, 1]: -1 blue, 0 white, +1 red.
std::array<double, 3> DivergingColor(double v);

/// v / max|v| after optional median centering; all-zero maps stay zero.
Tensor CenteredNorm(const Tensor& map, bool median_center = false, bool* all_zero = nullptr);

/// Colour-only heatmap of a map bilinearly resized to (height, width).
RgbImage RenderHeatmap(const Tensor& map, std::size_t height, std::size_t width,
                       const RenderSpec& spec = {}, bool* all_zero = nullptr);

/// alpha * colour + (1 - alpha) * image, at the image's resolution.
RgbImage RenderOverlay(const Tensor& image, const Tensor& map, const RenderSpec& spec = {},
                       bool* all_zero = nullptr);

struct GridCell {
  Tensor image;  // (3, H, W)
  Tensor map;    // any (h, w); resized to the image
  std::string label;
};

struct GridFigure {
  RgbImage raster;
  std::vector<std::string> labels;  // row-major
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t frame = 0;
  std::size_t warnings = 0;  // all-zero maps
};

/// Cells laid out row-major with a `frame`-pixel white border around each.
GridFigure RenderGrid(const std::vector<GridCell>& cells, std::size_t cols,
                      const RenderSpec& spec = {}, std::size_t frame = 2);

/// Writes the grid PNG (labels and string-valued metadata in tEXt chunks)
/// plus `<path>.json`.
void SaveGrid(const GridFigure& grid, const std::string& path,
              const nlohmann::json& metadata = nlohmann::json::object());

struct SelectedSample {
  std::size_t index = 0;
  std::string id;
  std::size_t label = 0;
  std::array<std::size_t, 3> classes{};  // top-3 by probability
  std::array<double, 3> probs{};
};

struct SampleSelection {
  std::string status = "ok";  // or "empty_result"
  std::size_t qualifying = 0;
  std::vector<SelectedSample> samples;
  nlohmann::json ToJson() const;
};

/// Draws up to `count` qualifying images uniformly at random (seeded).
SampleSelection SelectSamples(const Classifier& model, const Dataset& data,
                              const Threshold& threshold, std::size_t count,
                              std::uint64_t seed);

struct TracePlot {
  std::string panel;  // "accuracy", "y_t" or "p_t"
  RgbImage raster;
  std::map<std::string, std::string> text;
};

/// Legend colour for a selector.
std::array<std::uint8_t, 3> SelectorColor(Combinator c);

/// One raster per metric with one polyline per selector.
std::vector<TracePlot> PlotTraces(const PerturbationTrace& trace, std::size_t width = 360,
                                  std::size_t height = 240);

enum class NormKind { kL2, kL1 };

struct RegressionReport {
  std::vector<std::pair<double, double>> points;  // (logit, gradient norm)
  std::array<double, 3> coefficients{};           // c0 + c1 y + c2 y^2
  double r_squared = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;

  double Evaluate(double y) const;
  double SlopeAt(double y) const;
  /// |c2| (y_max - y_min)^2 / mean norm: curvature relative to the signal.
  double RelativeCurvature() const;
  nlohmann::json ToJson() const;
};

/// Scatter of the regression points (grey) with the fitted curve (red).
RgbImage PlotRegression(const RegressionReport& report, std::size_t width = 360,
                        std::size_t height = 240);

/// Least-squares degree-2 fit of norm on logit.
RegressionReport FitQuadratic(std::vector<std::pair<double, double>> points);

/// ||d y_s / dx|| against y_s over sampled (image, class) pairs. Classes per
/// image are drawn at random (seeded); all classes when the count reaches C.
RegressionReport NormLogitRegression(const Classifier& model, const Dataset& data,
                                     std::size_t num_images, std::size_t classes_per_image,
                                     std::uint64_t seed, NormKind norm = NormKind::kL2);

}  // namespace ccbp
