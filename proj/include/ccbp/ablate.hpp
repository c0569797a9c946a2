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

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccbp/dataset.hpp"
#include "ccbp/explainers.hpp"
#include "ccbp/model.hpp"
#include "ccbp/threshold.hpp"

namespace ccbp {

enum class Baseline { kGaussianBlur, kZeros, kChannelMean };
enum class FeatureSign { kPositive, kNegative };
/// Which seed produced an ablation map: the logit (original) or the softmax
/// probability (proportional to the weighted contrast).
enum class AblationSeed { kOriginal, kWeighted };

std::string ToString(Baseline b);
Baseline ParseBaseline(const std::string& s);
std::string ToString(FeatureSign s);
FeatureSign ParseFeatureSign(const std::string& s);
std::string ToString(AblationSeed s);
AblationSeed ParseAblationSeed(const std::string& s);

/// Two-class renormalized softmax exp(a) / (exp(a) + exp(b)).
double RelativeProbability(double y_a, double y_b);

struct FeatureMask {
  Tensor keep;  // (H, W), 1 = kept, 0 = replaced
  double kept_fraction = 0.0;
  std::size_t kept = 0;
  FeatureSign sign = FeatureSign::kPositive;
  bool equalized = false;
  bool empty_warning = false;
  std::string provenance;
};

/// Cells whose value has the requested sign. With a partner map and
/// equal_area, the result is truncated to min(own count, partner count)
/// cells by descending |value|, ties broken in row-major order.
FeatureMask BuildMask(const Tensor& map, FeatureSign sign,
                      const Tensor* partner = nullptr, bool equal_area = true);

struct BlurSpec {
  double sigma = 10.0;
  std::size_t kernel = 51;
  /// Sigma and kernel scaled from a reference size (224 px) to `size`.
  static BlurSpec Scaled(std::size_t size, double ref_sigma = 10.0,
                         std::size_t ref_kernel = 51, std::size_t ref_size = 224);
};

/// Separable Gaussian blur with reflected borders over each channel.
Tensor GaussianBlur(const Tensor& chw, const BlurSpec& spec);

/// Replaces every pixel where keep == 0 across all channels. `channel_mean`
/// overrides the per-image mean when given.
Tensor ApplyBaseline(const Tensor& image, const FeatureMask& mask, Baseline baseline,
                     const BlurSpec& blur,
                     const std::vector<double>* channel_mean = nullptr);

struct AblationMethod {
  Method method = Method::kGradCam;
  std::optional<std::string> layer;
};

struct AblationConfig {
  std::vector<AblationMethod> methods{{Method::kGradCam, std::nullopt},
                                      {Method::kLinearApprox, std::nullopt},
                                      {Method::kXGradCam, std::nullopt}};
  std::vector<Baseline> baselines{Baseline::kGaussianBlur, Baseline::kZeros,
                                  Baseline::kChannelMean};
  std::vector<FeatureSign> signs{FeatureSign::kPositive, FeatureSign::kNegative};
  Threshold threshold;
  bool equal_area = true;
  /// Zero means scale the 224-px defaults to the image size.
  double blur_sigma = 0.0;
  std::size_t blur_kernel = 0;
  bool dataset_channel_mean = false;

  void Validate() const;
  BlurSpec Blur(std::size_t image_size) const;
  nlohmann::json ToJson() const;
};

/// A method with no layer gets the deepest spatial block of the model.
AblationMethod ResolveLayer(const Classifier& model, AblationMethod m);

struct AblationCell {
  std::string method;  // method name, with "@layer" when a layer is used
  AblationSeed seed = AblationSeed::kOriginal;
  Baseline baseline = Baseline::kZeros;
  FeatureSign sign = FeatureSign::kPositive;
  std::size_t rank = 1;  // 1 = most probable clean class, 2 = runner-up
  double mean = 0.0;
  std::size_t count = 0;
  std::size_t empty_masks = 0;
};

struct AblationRecord {
  std::string model_id;
  std::string dataset_id;
  std::string status = "ok";  // "ok" or "empty_result"
  std::size_t evaluated = 0;  // images considered
  std::size_t sample_count = 0;  // images passing the threshold
  double clean_t1 = 0.0;
  double clean_t2 = 0.0;
  BlurSpec blur;
  nlohmann::json config;
  std::vector<AblationCell> cells;
  std::vector<std::string> failures;

  bool empty() const { return status != "ok"; }
  const AblationCell& Get(const std::string& method, AblationSeed seed, Baseline baseline,
                          FeatureSign sign, std::size_t rank) const;
  nlohmann::json ToJson() const;
  /// Rows: method x rank; columns: baseline x sign x seed, plus clean.
  std::string ToTableCsv() const;
};

struct AblateRunOptions {
  std::size_t jobs = 1;
  std::string dataset_id = "dataset";
};

AblationRecord RunAblation(const Classifier& model, const Dataset& data,
                           const AblationConfig& config,
                           const AblateRunOptions& options = {});

}  // namespace ccbp
