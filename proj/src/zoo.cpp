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

#include "ccbp/zoo.hpp"

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "ccbp/error.hpp"
#include "ccbp/toydata.hpp"
#include "ccbp/train.hpp"

namespace ccbp {

namespace fs = std::filesystem;

namespace {

struct SplitSpec {
  const char* name;
  std::size_t count;
  std::uint64_t seed;
};

constexpr SplitSpec kSplits[] = {{"train", 4000, 1}, {"test", 1000, 2}};

struct ToyRecipe {
  const char* name;
  bool transformer;
  std::size_t epochs;
  double learning_rate;
};

constexpr ToyRecipe kRecipes[] = {{"toy-cnn", false, 5, 3e-3}, {"toy-vit", true, 25, 2e-3}};

void Say(const LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

std::string TempName(const fs::path& parent, const std::string& tag) {
  return (parent / (".tmp-" + std::to_string(::getpid()) + "-" + tag)).string();
}

// Renames tmp onto dst unless another process got there first.
void Publish(const fs::path& tmp, const fs::path& dst) {
  std::error_code ec;
  if (fs::exists(dst)) {
    fs::remove_all(tmp, ec);
    return;
  }
  fs::rename(tmp, dst, ec);
  if (ec) {
    fs::remove_all(tmp, ec);
    Require(fs::exists(dst), ErrorCode::kIo, "cannot publish " + dst.string());
  }
}

}  // namespace

std::string ArtifactRoot(const std::optional<std::string>& override) {
  if (override && !override->empty()) return *override;
  if (const char* env = std::getenv("CCBP_ARTIFACT_ROOT"); env != nullptr && *env != '\0') {
    return env;
  }
  return "artifacts";
}

const std::vector<std::string>& ToyModelNames() {
  static const std::vector<std::string> names{"toy-cnn", "toy-vit"};
  return names;
}

void EnsureToyData(const std::string& root, const LogFn& log) {
  const fs::path data = fs::path(root) / "data";
  fs::create_directories(data);
  for (const auto& s : kSplits) {
    const fs::path dst = data / s.name;
    if (fs::exists(dst / "manifest.tsv")) continue;
    Say(log, std::string("generating toy ") + s.name + " split (" + std::to_string(s.count) +
                 " images)");
    const fs::path tmp = TempName(data, s.name);
    fs::remove_all(tmp);
    WriteDataset(GenerateToyDataset(s.count, s.seed, std::string(s.name) + "-"), tmp.string());
    Publish(tmp, dst);
  }
}

Dataset LoadToySplit(const std::string& root, const std::string& split, const LogFn& log) {
  bool known = false;
  for (const auto& s : kSplits) known = known || split == s.name;
  Require(known, ErrorCode::kInvalidArgument,
          "unknown toy split '" + split + "' (expected train or test)");
  EnsureToyData(root, log);
  return Dataset::Load((fs::path(root) / "data" / split / "manifest.tsv").string());
}

std::unique_ptr<Classifier> EnsureToyModel(const std::string& root, const std::string& name,
                                           const LogFn& log) {
  const ToyRecipe* recipe = nullptr;
  for (const auto& r : kRecipes) {
    if (name == r.name) recipe = &r;
  }
  Require(recipe != nullptr, ErrorCode::kInvalidArgument,
          "unknown toy model '" + name + "' (expected toy-cnn or toy-vit)");
  const fs::path dir = fs::path(root) / "models";
  if (fs::exists(dir / (name + ".json"))) return LoadModel(dir.string(), name);

  const Dataset train = LoadToySplit(root, "train", log);
  std::unique_ptr<Classifier> model =
      recipe->transformer ? MakePatchTransformer(name, {}, 7) : MakeToyCnn(name, {}, 7);
  FitOptions opt;
  opt.epochs = recipe->epochs;
  opt.learning_rate = recipe->learning_rate;
  opt.seed = 3;
  const auto t0 = std::chrono::steady_clock::now();
  opt.on_epoch = [&](std::size_t e, double loss, double acc) {
    const double s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s epoch %zu/%zu loss %.4f train acc %.4f (%.0fs)",
                  name.c_str(), e + 1, recipe->epochs, loss, acc, s);
    Say(log, buf);
  };
  Say(log, "training " + name);
  Fit(*model, train, opt);

  fs::create_directories(dir);
  const fs::path tmp = TempName(dir, name);
  fs::remove_all(tmp);
  SaveModel(*model, tmp.string());
  std::error_code ec;
  if (!fs::exists(dir / (name + ".json"))) {
    fs::rename(tmp / (name + ".weights"), dir / (name + ".weights"), ec);
    if (!ec) fs::rename(tmp / (name + ".json"), dir / (name + ".json"), ec);
  }
  fs::remove_all(tmp, ec);
  return LoadModel(dir.string(), name);
}

std::unique_ptr<Classifier> ResolveModel(const std::string& root, const std::string& ref,
                                         const LogFn& log) {
  for (const auto& n : ToyModelNames()) {
    if (ref == n) return EnsureToyModel(root, ref, log);
  }
  const fs::path p(ref);
  if (p.has_parent_path()) return LoadModel(p.parent_path().string(), p.filename().string());
  return LoadModel((fs::path(root) / "models").string(), ref);
}

}  // namespace ccbp
