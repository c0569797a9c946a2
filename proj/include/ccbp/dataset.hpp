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
#include <string>
#include <vector>

#include "ccbp/tensor.hpp"

namespace ccbp {

/// Pixels stay in [0, 1]; model statistics are applied inside classifiers.
struct ImageBatch {
  Tensor pixels;  // (N, C, H, W)
  std::vector<std::size_t> labels;
  std::vector<std::string> ids;

  std::size_t size() const { return labels.size(); }

  /// Checks range, label and id invariants; throws kInvalidArgument.
  void Validate(std::size_t num_classes) const;
};

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the manifest directory
  std::size_t label = 0;
};

/// Parses `id<TAB>relative_path<TAB>label` lines. Blank lines and lines
/// starting with '#' are ignored.
std::vector<ManifestEntry> ReadManifest(const std::string& manifest_path);
void WriteManifest(const std::string& manifest_path,
                   const std::vector<ManifestEntry>& entries);

struct DatasetOptions {
  bool shuffle = false;
  std::uint64_t seed = 0;
  std::size_t limit = 0;  // 0 = everything
};

/// In-memory image collection loaded from a manifest.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Tensor> images, std::vector<std::size_t> labels,
          std::vector<std::string> ids);

  static Dataset Load(const std::string& manifest_path,
                      const DatasetOptions& options = {});

  std::size_t size() const { return images_.size(); }
  bool empty() const { return images_.empty(); }
  const Tensor& image(std::size_t i) const { return images_.at(i); }
  std::size_t label(std::size_t i) const { return labels_.at(i); }
  const std::string& id(std::size_t i) const { return ids_.at(i); }
  const std::vector<std::size_t>& labels() const { return labels_; }
  const std::vector<std::string>& ids() const { return ids_; }

  /// Corrupt images skipped during Load, with one warning each.
  std::size_t skipped() const { return warnings_.size(); }
  const std::vector<std::string>& warnings() const { return warnings_; }

  std::size_t NumBatches(std::size_t batch_size) const;
  ImageBatch Batch(std::size_t index, std::size_t batch_size) const;
  ImageBatch Gather(const std::vector<std::size_t>& indices) const;

  Dataset Subset(std::size_t count) const;

 private:
  std::vector<Tensor> images_;
  std::vector<std::size_t> labels_;
  std::vector<std::string> ids_;
  std::vector<std::string> warnings_;
};

}  // namespace ccbp
