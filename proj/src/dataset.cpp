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

#include "ccbp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "ccbp/error.hpp"
#include "ccbp/image_io.hpp"
#include "ccbp/rng.hpp"

namespace ccbp {

namespace fs = std::filesystem;

void ImageBatch::Validate(std::size_t num_classes) const {
  Require(pixels.rank() == 4 && pixels.dim(0) == labels.size() &&
              ids.size() == labels.size(),
          ErrorCode::kInvalidArgument, "image batch fields disagree on N");
  for (double v : pixels.values()) {
    Require(v >= 0.0 && v <= 1.0, ErrorCode::kInvalidArgument,
            "pixel value outside [0, 1]");
  }
  for (std::size_t l : labels) {
    Require(l < num_classes, ErrorCode::kInvalidArgument,
            "label " + std::to_string(l) + " outside [0, " + std::to_string(num_classes) + ")");
  }
  std::set<std::string> seen(ids.begin(), ids.end());
  Require(seen.size() == ids.size(), ErrorCode::kInvalidArgument, "duplicate image ids");
}

std::vector<ManifestEntry> ReadManifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  Require(static_cast<bool>(in), ErrorCode::kIo, "cannot open manifest " + manifest_path);
  std::vector<ManifestEntry> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    const auto where = manifest_path + ":" + std::to_string(lineno);
    Require(t2 != std::string::npos && line.find('\t', t2 + 1) == std::string::npos,
            ErrorCode::kParse, where + ": expected id<TAB>path<TAB>label");
    ManifestEntry e;
    e.id = line.substr(0, t1);
    e.path = line.substr(t1 + 1, t2 - t1 - 1);
    const std::string label = line.substr(t2 + 1);
    const auto [ptr, ec] = std::from_chars(label.data(), label.data() + label.size(), e.label);
    Require(ec == std::errc() && ptr == label.data() + label.size() && !e.id.empty() &&
                !e.path.empty(),
            ErrorCode::kParse, where + ": malformed record");
    Require(ids.insert(e.id).second, ErrorCode::kParse, where + ": duplicate id '" + e.id + "'");
    out.push_back(std::move(e));
  }
  return out;
}

void WriteManifest(const std::string& manifest_path,
                   const std::vector<ManifestEntry>& entries) {
  const auto parent = fs::path(manifest_path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(manifest_path, std::ios::binary);
  Require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + manifest_path);
  for (const auto& e : entries) out << e.id << '\t' << e.path << '\t' << e.label << '\n';
}

Dataset::Dataset(std::vector<Tensor> images, std::vector<std::size_t> labels,
                 std::vector<std::string> ids)
    : images_(std::move(images)), labels_(std::move(labels)), ids_(std::move(ids)) {
  Require(images_.size() == labels_.size() && labels_.size() == ids_.size(),
          ErrorCode::kInvalidArgument, "dataset fields disagree on size");
}

Dataset Dataset::Load(const std::string& manifest_path, const DatasetOptions& options) {
  auto entries = ReadManifest(manifest_path);
  if (options.shuffle) {
    Rng rng(options.seed);
    rng.Shuffle(entries);
  }
  if (options.limit > 0 && entries.size() > options.limit) entries.resize(options.limit);
  const fs::path root = fs::path(manifest_path).parent_path();
  Dataset ds;
  for (const auto& e : entries) {
    const fs::path p = root / e.path;
    if (!fs::exists(p)) {
      Fail(ErrorCode::kIo, "image '" + e.id + "' missing: " + p.string());
    }
    Tensor img;
    try {
      img = ToTensor(ReadPng(p.string()));
    } catch (const Error& err) {
      if (err.code() != ErrorCode::kParse) throw;
      ds.warnings_.push_back("skipped corrupt image '" + e.id + "': " + err.what());
      continue;
    }
    if (!ds.images_.empty()) {
      Require(img.shape() == ds.images_.front().shape(), ErrorCode::kShapeMismatch,
              "image '" + e.id + "' has shape " + ShapeString(img.shape()) +
                  ", expected " + ShapeString(ds.images_.front().shape()));
    }
    ds.images_.push_back(std::move(img));
    ds.labels_.push_back(e.label);
    ds.ids_.push_back(e.id);
  }
  return ds;
}

std::size_t Dataset::NumBatches(std::size_t batch_size) const {
  Require(batch_size > 0, ErrorCode::kInvalidArgument, "batch size must be positive");
  return (size() + batch_size - 1) / batch_size;
}

ImageBatch Dataset::Batch(std::size_t index, std::size_t batch_size) const {
  Require(index < NumBatches(batch_size), ErrorCode::kInvalidArgument, "batch index out of range");
  const std::size_t begin = index * batch_size;
  const std::size_t end = std::min(size(), begin + batch_size);
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return Gather(idx);
}

ImageBatch Dataset::Gather(const std::vector<std::size_t>& indices) const {
  ImageBatch b;
  std::vector<Tensor> parts;
  for (std::size_t i : indices) {
    parts.push_back(images_.at(i));
    b.labels.push_back(labels_.at(i));
    b.ids.push_back(ids_.at(i));
  }
  if (!parts.empty()) b.pixels = Stack(parts);
  return b;
}

Dataset Dataset::Subset(std::size_t count) const {
  count = std::min(count, size());
  Dataset d(std::vector<Tensor>(images_.begin(), images_.begin() + count),
            std::vector<std::size_t>(labels_.begin(), labels_.begin() + count),
            std::vector<std::string>(ids_.begin(), ids_.begin() + count));
  d.warnings_ = warnings_;
  return d;
}

}  // namespace ccbp
