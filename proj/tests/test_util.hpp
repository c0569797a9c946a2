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

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include "ccbp/gradients.hpp"
#include "ccbp/model.hpp"
#include "ccbp/rng.hpp"
#include "ccbp/tensor.hpp"

namespace ccbp::testing {

inline Tensor RandomImage(const Shape& chw, Rng& rng, double lo = 0.05,
                          double hi = 0.95) {
  Tensor t(chw);
  for (double& v : t.storage()) v = rng.Uniform(lo, hi);
  return t;
}

inline Tensor RandomTensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor t(shape);
  for (double& v : t.storage()) v = rng.Normal() * scale;
  return t;
}

/// Small CNN used across unit tests: random weights, non-trivial batch-norm
/// statistics so the inference path is exercised.
inline std::unique_ptr<Classifier> SmallCnn(std::uint64_t seed,
                                            std::size_t classes = 5) {
  ToyCnnConfig cfg;
  cfg.input_shape = {3, 8, 8};
  cfg.channels = {4, 6};
  cfg.pool_after = {true, false};
  cfg.num_classes = classes;
  auto model = MakeToyCnn("small-cnn", cfg, seed);
  Rng rng(seed + 1);
  for (nn::Param* p : model->MutableParams()) {
    if (p->name == "running_var") {
      for (double& v : p->value.storage()) v = rng.Uniform(0.5, 2.0);
    } else if (p->name == "running_mean" || p->name == "beta" ||
               p->name == "bias") {
      for (double& v : p->value.storage()) v = 0.2 * rng.Normal();
    } else if (p->name == "gamma") {
      for (double& v : p->value.storage()) v = rng.Uniform(0.5, 1.5);
    }
  }
  return model;
}

inline std::unique_ptr<Classifier> SmallTransformer(std::uint64_t seed,
                                                    std::size_t classes = 4) {
  PatchTransformerConfig cfg;
  cfg.input_shape = {3, 8, 8};
  cfg.patch = 4;
  cfg.embed = 8;
  cfg.heads = 2;
  cfg.mlp = 12;
  cfg.depth = 2;
  cfg.num_classes = classes;
  auto model = MakePatchTransformer("small-vit", cfg, seed);
  Rng rng(seed + 7);
  for (nn::Param* p : model->MutableParams()) {
    if (p->name.find("bias") != std::string::npos ||
        p->name.find("beta") != std::string::npos) {
      for (double& v : p->value.storage()) v = 0.1 * rng.Normal();
    }
  }
  return model;
}

/// Value of the seed scalar computed from a plain forward pass. Independent
/// of every backward-pass code path.
inline double SeedValue(const Tensor& logits_row, Seed seed) {
  if (seed.mode == SeedMode::kLogit) return logits_row[seed.target];
  return Softmax(logits_row.values())[seed.target];
}

inline double CentralDifference(const std::function<double(double)>& f,
                                double h) {
  return (f(h) - f(-h)) / (2.0 * h);
}

/// |a - b| <= rel * max(|a|, |b|) + abs_floor
inline bool RelClose(double a, double b, double rel, double abs_floor = 1e-9) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + abs_floor;
}

/// Fresh scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(std::filesystem::temp_directory_path() /
              ("ccbp-" + tag + "-" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace ccbp::testing
