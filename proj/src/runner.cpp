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

#include "ccbp/runner.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ccbp/ablate.hpp"
#include "ccbp/contrast.hpp"
#include "ccbp/error.hpp"
#include "ccbp/explainers.hpp"
#include "ccbp/gradients.hpp"
#include "ccbp/perturb.hpp"
#include "ccbp/rng.hpp"
#include "ccbp/toydata.hpp"
#include "ccbp/train.hpp"
#include "ccbp/viz.hpp"

namespace ccbp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitCheckFailed = 10;

}  // namespace

json DefaultConfig() {
  return {
      {"model", "toy-cnn"},
      {"dataset",
       {{"split", "test"}, {"manifest", nullptr}, {"limit", 0}, {"shuffle", false}, {"seed", 0}}},
      {"seed", 0},
      {"jobs", 1},
      {"output_dir", nullptr},
      {"explain",
       {{"method", "gradcam"},
        {"seed_mode", "logit"},
        {"relu_mode", "none"},
        {"layer", nullptr},
        {"target", "label"},
        {"rollout_residual", "identity"},
        {"count", 4},
        {"render_scale", 4}}},
      {"contrast", {{"combinator", "weighted"}, {"mean_scaled", true}}},
      {"perturb",
       {{"preset", nullptr},
        {"epsilon", 3e-3},
        {"n_total", 20},
        {"selectors", {"original", "mean", "max", "weighted"}},
        {"target_rule", "true_label"},
        {"frozen_explanation", false},
        {"mean_scaled", true}}},
      {"ablate",
       {{"methods", nullptr},
        {"baselines", {"gaussian_blur", "zeros", "channel_mean"}},
        {"feature_signs", {"positive", "negative"}},
        {"threshold", "p2>0.1"},
        {"equal_area", true},
        {"blur_sigma", 0.0},
        {"blur_kernel", 0},
        {"dataset_channel_mean", false}}},
      {"visualize",
       {{"layout", "fig4"},
        {"threshold", "p2>0.1"},
        {"count", 3},
        {"methods", nullptr},
        {"alpha", 0.5},
        {"scale", 4},
        {"median_center", false},
        {"frame", 2}}},
      {"regress", {{"num_images", 200}, {"classes_per_image", 10}, {"norm", "l2"}}},
      {"verify", {{"methods", nullptr}, {"num_images", 50}, {"tolerance", 1e-5}}},
  };
}

namespace {

void MergeAt(json& base, const json& patch, const std::string& where, const std::string& prefix) {
  Require(patch.is_object(), ErrorCode::kParse,
          where + ": expected an object" + (prefix.empty() ? "" : " at '" + prefix + "'"));
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    Require(base.contains(it.key()), ErrorCode::kParse, where + ": unknown key '" + path + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      MergeAt(slot, it.value(), where, path);
    } else if (slot.is_null()) {
      slot = it.value();
    } else {
      const bool number_ok = slot.is_number() && it.value().is_number();
      Require(number_ok || slot.type() == it.value().type(), ErrorCode::kParse,
              where + ": key '" + path + "' expects " + std::string(slot.type_name()) +
                  ", got " + it.value().type_name());
      slot = it.value();
    }
  }
}

}  // namespace

void MergeStrict(json& base, const json& patch, const std::string& where) {
  MergeAt(base, patch, where, "");
}

void ApplyOverride(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  Require(eq != std::string::npos && eq > 0, ErrorCode::kParse,
          "--set expects key.path=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json patch = value;
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) {
    Require(!part.empty(), ErrorCode::kParse, "empty component in --set key '" + key + "'");
    parts.push_back(part);
  }
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  MergeStrict(config, patch, "--set");
}

json LoadConfig(const std::optional<std::string>& path, const std::vector<std::string>& overrides) {
  json config = DefaultConfig();
  if (path) {
    std::ifstream in(*path);
    Require(static_cast<bool>(in), ErrorCode::kIo, "cannot open config " + *path);
    json file;
    try {
      in >> file;
    } catch (const json::exception& e) {
      Fail(ErrorCode::kParse, *path + ": " + e.what());
    }
    MergeStrict(config, file, "config");
  }
  for (const auto& o : overrides) ApplyOverride(config, o);
  return config;
}

std::string Sha256Hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  Require(EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) == 1,
          ErrorCode::kInternal, "sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string ConfigHash(const json& config) { return Sha256Hex(config.dump()); }

std::string RunId(const std::string& command, const json& config) {
  json keyed = config;
  keyed.erase("jobs");
  keyed.erase("output_dir");
  return command + "-" + Sha256Hex(command + "\n" + keyed.dump()).substr(0, 12);
}

const std::vector<std::string>& Commands() {
  static const std::vector<std::string> c{"explain", "contrast", "perturb",   "ablate",
                                          "visualize", "regress", "verify", "reproduce",
                                          "bootstrap"};
  return c;
}

const std::vector<std::string>& ReproduceTargets() {
  static const std::vector<std::string> t{"fig3", "fig4", "fig5", "table1", "table3",
                                          "regression"};
  return t;
}

namespace {

// ------------------------------------------------------------------ parsing

template <typename T>
T Get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    Fail(ErrorCode::kParse, std::string("config key '") + key + "': " + e.what());
  }
}

AblationMethod ParseMethodSpec(const std::string& s) {
  const auto at = s.find('@');
  AblationMethod m;
  m.method = ParseMethod(s.substr(0, at));
  if (at != std::string::npos) m.layer = s.substr(at + 1);
  return m;
}

std::vector<AblationMethod> MethodList(const json& j, const Classifier& model,
                                       const std::vector<std::string>& cnn_default,
                                       const std::vector<std::string>& vit_default) {
  std::vector<std::string> names;
  if (j.is_null()) {
    names = model.info().kind == ModelKind::kPatchTransformer ? vit_default : cnn_default;
  } else {
    Require(j.is_array() && !j.empty(), ErrorCode::kParse, "methods must be a non-empty list");
    names = j.get<std::vector<std::string>>();
  }
  std::vector<AblationMethod> out;
  for (const auto& n : names) out.push_back(ResolveLayer(model, ParseMethodSpec(n)));
  return out;
}

std::string MethodName(const AblationMethod& m) {
  return ToString(m.method) + (m.layer ? "@" + *m.layer : "");
}

PerturbConfig BuildPerturbConfig(const json& j) {
  PerturbConfig c;
  if (!j.at("preset").is_null()) {
    c = PerturbConfig::Preset(Get<std::string>(j, "preset"));
  } else {
    c.epsilon = Get<double>(j, "epsilon");
  }
  const auto n = Get<long long>(j, "n_total");
  Require(n >= 0, ErrorCode::kInvalidArgument, "perturb.n_total must be >= 0");
  c.n_total = static_cast<std::size_t>(n);
  c.selectors.clear();
  for (const auto& s : Get<std::vector<std::string>>(j, "selectors")) {
    c.selectors.push_back(ParseCombinator(s));
  }
  c.target_rule = ParseTargetRule(Get<std::string>(j, "target_rule"));
  c.frozen_explanation = Get<bool>(j, "frozen_explanation");
  c.mean_scaled = Get<bool>(j, "mean_scaled");
  c.Validate();
  return c;
}

AblationConfig BuildAblationConfig(const json& j) {
  AblationConfig c;
  c.baselines.clear();
  for (const auto& s : Get<std::vector<std::string>>(j, "baselines")) {
    c.baselines.push_back(ParseBaseline(s));
  }
  c.signs.clear();
  for (const auto& s : Get<std::vector<std::string>>(j, "feature_signs")) {
    c.signs.push_back(ParseFeatureSign(s));
  }
  c.threshold = Threshold::Parse(Get<std::string>(j, "threshold"));
  c.equal_area = Get<bool>(j, "equal_area");
  c.blur_sigma = Get<double>(j, "blur_sigma");
  const auto k = Get<long long>(j, "blur_kernel");
  Require(k >= 0, ErrorCode::kInvalidArgument, "ablate.blur_kernel must be >= 0");
  c.blur_kernel = static_cast<std::size_t>(k);
  c.dataset_channel_mean = Get<bool>(j, "dataset_channel_mean");
  if (!j.at("methods").is_null()) {
    c.methods.clear();
    for (const auto& s : Get<std::vector<std::string>>(j, "methods")) {
      c.methods.push_back(ParseMethodSpec(s));
    }
  }
  c.Validate();
  return c;
}

std::size_t GetCount(const json& j, const char* key, std::size_t min = 0) {
  const auto v = Get<long long>(j, key);
  Require(v >= static_cast<long long>(min), ErrorCode::kInvalidArgument,
          std::string("config key '") + key + "' must be >= " + std::to_string(min));
  return static_cast<std::size_t>(v);
}

// Checks every section that a command reads, before anything is written.
void ValidateSections(const std::string& command, const std::string& target, const json& cfg) {
  (void)GetCount(cfg.at("dataset"), "limit");
  (void)Get<bool>(cfg.at("dataset"), "shuffle");
  (void)GetCount(cfg, "jobs", 1);
  Require(cfg.at("model").is_string(), ErrorCode::kParse, "model must be a string");
  Require(cfg.at("output_dir").is_null() || cfg.at("output_dir").is_string(), ErrorCode::kParse,
          "output_dir must be a string");
  const json& ex = cfg.at("explain");
  if (command == "explain" || command == "contrast") {
    ParseMethod(Get<std::string>(ex, "method"));
    ParseSeedMode(Get<std::string>(ex, "seed_mode"));
    ParseReluMode(Get<std::string>(ex, "relu_mode"));
    ParseRolloutResidual(Get<std::string>(ex, "rollout_residual"));
    Require(ex.at("layer").is_null() || ex.at("layer").is_string(), ErrorCode::kParse,
            "explain.layer must be a string");
    const json& t = ex.at("target");
    Require((t.is_string() && (t == "label" || t == "predicted")) || t.is_number_unsigned() ||
                (t.is_number_integer() && t.get<long long>() >= 0),
            ErrorCode::kParse, "explain.target must be \"label\", \"predicted\" or a class index");
    GetCount(ex, "count", 1);
    GetCount(ex, "render_scale", 1);
  }
  if (command == "contrast") {
    ParseCombinator(Get<std::string>(cfg.at("contrast"), "combinator"));
    Get<bool>(cfg.at("contrast"), "mean_scaled");
  }
  if (command == "perturb" || target == "fig3") BuildPerturbConfig(cfg.at("perturb"));
  if (command == "ablate" || target == "table1" || target == "table3") {
    BuildAblationConfig(cfg.at("ablate"));
  }
  if (command == "visualize" || target == "fig4" || target == "fig5") {
    const json& v = cfg.at("visualize");
    const auto layout = Get<std::string>(v, "layout");
    Require(layout == "fig4" || layout == "fig5", ErrorCode::kParse,
            "visualize.layout must be fig4 or fig5");
    Threshold::Parse(Get<std::string>(v, "threshold"));
    GetCount(v, "count", 1);
    GetCount(v, "scale", 1);
    GetCount(v, "frame");
    RenderSpec spec;
    spec.overlay_alpha = Get<double>(v, "alpha");
    spec.Validate();
    Get<bool>(v, "median_center");
  }
  if (command == "regress" || target == "regression") {
    const json& r = cfg.at("regress");
    GetCount(r, "num_images", 1);
    GetCount(r, "classes_per_image", 1);
    const auto norm = Get<std::string>(r, "norm");
    Require(norm == "l2" || norm == "l1", ErrorCode::kParse, "regress.norm must be l2 or l1");
  }
  if (command == "verify") {
    GetCount(cfg.at("verify"), "num_images", 1);
    Require(Get<double>(cfg.at("verify"), "tolerance") > 0.0, ErrorCode::kParse,
            "verify.tolerance must be positive");
  }
}

// ------------------------------------------------------------------ context

struct Stage {
  std::string name;
  std::string status = "ok";
  std::size_t samples = 0;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
  std::string error;
  int code = 0;

  json ToJson() const {
    return {{"name", name},         {"status", status},  {"samples", samples},
            {"skipped", skipped},   {"warnings", warnings}, {"error", error},
            {"code", code}};
  }
};

class Context {
 public:
  Context(std::string root, std::string out_dir, std::string run_id, json config,
          std::size_t jobs, LogFn log)
      : root(std::move(root)),
        out(std::move(out_dir)),
        run_id(std::move(run_id)),
        config(std::move(config)),
        jobs(jobs),
        log(std::move(log)) {}

  void Say(const std::string& m) const {
    if (log) log(m);
  }

  std::string Path(const std::string& rel) const { return (fs::path(out) / rel).string(); }

  void Prepare(const std::string& rel) const {
    fs::create_directories(fs::path(Path(rel)).parent_path());
  }

  void WriteJson(const std::string& rel, json j) {
    j["run_id"] = run_id;
    WriteText(rel, j.dump(2) + "\n");
  }

  void WriteCsv(const std::string& rel, const std::string& body) {
    WriteText(rel, "# run_id: " + run_id + "\n" + body);
  }

  void WriteText(const std::string& rel, const std::string& body) {
    Prepare(rel);
    std::ofstream f(Path(rel), std::ios::binary);
    Require(static_cast<bool>(f), ErrorCode::kIo, "cannot write " + Path(rel));
    f << body;
    outputs.push_back(rel);
  }

  void WriteImage(const std::string& rel, const RgbImage& img,
                  std::map<std::string, std::string> text = {}) {
    Prepare(rel);
    text["run_id"] = run_id;
    WritePng(Path(rel), img, text);
    outputs.push_back(rel);
  }

  void WriteGrid(const std::string& rel, const GridFigure& g, json meta) {
    Prepare(rel);
    meta["run_id"] = run_id;
    SaveGrid(g, Path(rel), meta);
    outputs.push_back(rel);
    outputs.push_back(rel + ".json");
  }

  std::string root;
  std::string out;
  std::string run_id;
  json config;
  std::size_t jobs;
  LogFn log;
  std::vector<Stage> stages;
  std::vector<std::string> outputs;
  json checks = json::array();
  json summary = json::object();
};

std::string ClassName(const Classifier& model, std::size_t c) {
  if (model.num_classes() == kToyClasses) return ToyClassNames()[c];
  return "class " + std::to_string(c);
}

Dataset LoadData(const Context& ctx, const json& cfg) {
  const json& d = cfg.at("dataset");
  DatasetOptions opt;
  opt.shuffle = Get<bool>(d, "shuffle");
  opt.seed = Get<std::uint64_t>(d, "seed");
  opt.limit = GetCount(d, "limit");
  std::string manifest;
  if (!d.at("manifest").is_null()) {
    manifest = Get<std::string>(d, "manifest");
  } else {
    const auto split = Get<std::string>(d, "split");
    Require(split == "train" || split == "test", ErrorCode::kParse,
            "dataset.split must be train or test");
    EnsureToyData(ctx.root, ctx.log);
    manifest = (fs::path(ctx.root) / "data" / split / "manifest.tsv").string();
  }
  return Dataset::Load(manifest, opt);
}

std::string DatasetId(const json& cfg) {
  const json& d = cfg.at("dataset");
  return d.at("manifest").is_null() ? "toy-" + d.at("split").get<std::string>()
                                    : fs::path(d.at("manifest").get<std::string>()).parent_path().filename().string();
}

void Check(Context& ctx, const std::string& name, bool passed, json detail = json::object()) {
  ctx.checks.push_back({{"check", name}, {"passed", passed}, {"detail", std::move(detail)}});
  ctx.Say(std::string(passed ? "PASS " : "FAIL ") + name);
}

// ------------------------------------------------------------------ commands

std::size_t ExplainTarget(const json& t, const Classifier& model, const Tensor& x,
                          std::size_t label) {
  if (t.is_string() && t == "label") return label;
  if (t.is_string() && t == "predicted") {
    const auto y = model.Logits(AsBatch(x)).storage();
    return static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  }
  return t.get<std::size_t>();
}

void CmdExplain(Context& ctx, bool contrast) {
  const json& cfg = ctx.config;
  const json& ex = cfg.at("explain");
  auto model = ResolveModel(ctx.root, Get<std::string>(cfg, "model"), ctx.log);
  const Dataset data = LoadData(ctx, cfg);
  Stage st;
  st.name = contrast ? "contrast" : "explain";
  const std::size_t count = std::min(GetCount(ex, "count", 1), data.size());
  RenderSpec spec;
  spec.scale = GetCount(ex, "render_scale", 1);
  ContrastSpec cspec;
  if (contrast) {
    cspec.combinator = ParseCombinator(Get<std::string>(cfg.at("contrast"), "combinator"));
    cspec.mean_scaled = Get<bool>(cfg.at("contrast"), "mean_scaled");
  }
  json items = json::array();
  for (std::size_t i = 0; i < count; ++i) {
    const Tensor& x = data.image(i);
    ExplainRequest req;
    req.method = ParseMethod(Get<std::string>(ex, "method"));
    req.seed_mode = ParseSeedMode(Get<std::string>(ex, "seed_mode"));
    req.relu_mode = ParseReluMode(Get<std::string>(ex, "relu_mode"));
    req.rollout_residual = ParseRolloutResidual(Get<std::string>(ex, "rollout_residual"));
    if (!ex.at("layer").is_null()) req.layer_name = Get<std::string>(ex, "layer");
    if (NeedsLayer(req.method)) {
      req.layer_name = ResolveLayer(*model, AblationMethod{req.method, req.layer_name}).layer;
    }
    req.target_class = ExplainTarget(ex.at("target"), *model, x, data.label(i));
    ExplanationMap map;
    if (contrast) {
      Require(req.seed_mode == SeedMode::kLogit && IsSeedLinear(req), ErrorCode::kInvalidArgument,
              "contrast needs a seed-linear request (logit seed, no final relu)");
      cspec.target_class = req.target_class;
      map = Combine(ExplainAllClasses(*model, x, req), cspec);
    } else {
      map = Explain(*model, x, req);
    }
    map.notes.push_back("run_id=" + ctx.run_id);
    const std::string stem = "maps/" + data.id(i);
    ctx.Prepare(stem);
    SaveMap(map, ctx.Path(stem));
    ctx.outputs.push_back(stem + ".bin");
    ctx.outputs.push_back(stem + ".json");
    bool zero = false;
    const RgbImage overlay = RenderOverlay(x, map.values, spec, &zero);
    if (zero) st.warnings.push_back(data.id(i) + ": all-zero map rendered neutral");
    ctx.WriteImage(stem + ".png", overlay,
                   {{"method", ToString(map.method)},
                    {"target", std::to_string(map.target_class)},
                    {"class", ClassName(*model, map.target_class)}});
    items.push_back({{"id", data.id(i)},
                     {"label", data.label(i)},
                     {"target", map.target_class},
                     {"rows", map.values.dim(0)},
                     {"cols", map.values.dim(1)},
                     {"min", map.values.Min()},
                     {"max", map.values.Max()},
                     {"notes", map.notes},
                     {"map", stem}});
  }
  st.samples = count;
  ctx.stages.push_back(st);
  ctx.WriteJson("results.json", {{"command", st.name}, {"model_id", model->info().model_id}, {"items", items}});
  ctx.summary["samples"] = count;
}

PerturbationTrace PerturbStage(Context& ctx, const Classifier& model, const Dataset& data,
                               const PerturbConfig& pc, const std::string& prefix,
                               const std::string& dataset_id) {
  Stage st;
  st.name = "perturb:" + model.info().model_id;
  ctx.Say("perturbing " + std::to_string(data.size()) + " images with " +
          model.info().model_id);
  PerturbationTrace t = RunPerturbation(model, data, pc, {ctx.jobs, dataset_id});
  st.samples = t.sample_count;
  st.skipped = t.failures.size();
  st.warnings = t.failures;
  ctx.stages.push_back(st);
  ctx.WriteJson(prefix + "trace.json", t.ToJson());
  ctx.WriteCsv(prefix + "trace.csv", t.ToCsv());
  if (!t.series.empty() && t.sample_count > 0) {
    for (const auto& p : PlotTraces(t)) ctx.WriteImage(prefix + "trace_" + p.panel + ".png", p.raster, p.text);
  }
  return t;
}

void CmdPerturb(Context& ctx) {
  const json& cfg = ctx.config;
  const PerturbConfig pc = BuildPerturbConfig(cfg.at("perturb"));
  auto model = ResolveModel(ctx.root, Get<std::string>(cfg, "model"), ctx.log);
  const Dataset data = LoadData(ctx, cfg);
  const auto t = PerturbStage(ctx, *model, data, pc, "", DatasetId(cfg));
  ctx.summary["sample_count"] = t.sample_count;
  json fin = json::object();
  for (const auto& s : t.series) {
    fin[ToString(s.selector)] = {{"accuracy", s.accuracy.back()},
                                 {"mean_y_t", s.mean_y_t.back()},
                                 {"mean_p_t", s.mean_p_t.back()}};
  }
  ctx.summary["final"] = fin;
}

AblationRecord AblateStage(Context& ctx, const Classifier& model, const Dataset& data,
                           AblationConfig ac, const json& methods, const std::string& prefix,
                           const std::string& dataset_id) {
  if (methods.is_null()) {
    ac.methods = MethodList(methods, model, {"gradcam", "linear_approx", "xgradcam"},
                            {"vit_gradcam"});
  }
  Stage st;
  st.name = "ablate:" + model.info().model_id + ":" + ac.threshold.ToString();
  ctx.Say("ablating " + std::to_string(data.size()) + " images (" + ac.threshold.ToString() + ")");
  AblationRecord r = RunAblation(model, data, ac, {ctx.jobs, dataset_id});
  st.samples = r.sample_count;
  st.skipped = r.failures.size();
  st.warnings = r.failures;
  std::size_t empty_masks = 0;
  for (const auto& c : r.cells) empty_masks += c.empty_masks;
  if (empty_masks > 0) st.warnings.push_back(std::to_string(empty_masks) + " empty masks");
  if (r.empty()) {
    st.status = "empty_result";
    st.code = static_cast<int>(ErrorCode::kEmptyResult);
    st.error = "no sample satisfies " + ac.threshold.ToString();
  }
  ctx.stages.push_back(st);
  ctx.WriteJson(prefix + "ablation.json", r.ToJson());
  if (!r.empty()) ctx.WriteCsv(prefix + "table.csv", r.ToTableCsv());
  return r;
}

void CmdAblate(Context& ctx) {
  const json& cfg = ctx.config;
  const AblationConfig ac = BuildAblationConfig(cfg.at("ablate"));
  auto model = ResolveModel(ctx.root, Get<std::string>(cfg, "model"), ctx.log);
  const Dataset data = LoadData(ctx, cfg);
  const auto r = AblateStage(ctx, *model, data, ac, cfg.at("ablate").at("methods"), "", DatasetId(cfg));
  ctx.summary["status"] = r.status;
  ctx.summary["sample_count"] = r.sample_count;
}

std::string Pct(double p) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", p);
  return buf;
}

void VisualizeStage(Context& ctx, const Classifier& model, const Dataset& data, const json& v,
                    const std::string& prefix) {
  const std::string layout = Get<std::string>(v, "layout");
  const Threshold th = Threshold::Parse(Get<std::string>(v, "threshold"));
  Stage st;
  st.name = "visualize:" + model.info().model_id + ":" + layout;
  const auto sel = SelectSamples(model, data, th, GetCount(v, "count", 1),
                                 Get<std::uint64_t>(ctx.config, "seed"));
  ctx.WriteJson(prefix + "selection.json", sel.ToJson());
  if (sel.status != "ok") {
    st.status = "empty_result";
    st.code = static_cast<int>(ErrorCode::kEmptyResult);
    st.error = "no sample satisfies " + th.ToString();
    ctx.stages.push_back(st);
    return;
  }
  RenderSpec spec;
  spec.overlay_alpha = Get<double>(v, "alpha");
  spec.scale = GetCount(v, "scale", 1);
  spec.median_center = Get<bool>(v, "median_center");
  const auto methods =
      MethodList(v.at("methods"), model, {"gradcam"}, {"vit_gradcam", "attn_rollout"});

  std::vector<GridCell> cells;
  std::size_t cols = 0;
  if (layout == "fig4") {
    cols = 2 * sel.samples.size();
    for (const auto& m : methods) {
      for (SeedMode seed : {SeedMode::kLogit, SeedMode::kSoftmax}) {
        for (const auto& s : sel.samples) {
          for (std::size_t r = 0; r < 2; ++r) {
            const Tensor& x = data.image(s.index);
            ExplainRequest req{m.method, seed, ReluMode::kNone, s.classes[r], m.layer};
            const auto map = Explain(model, x, req);
            cells.push_back({x, map.values,
                             MethodName(m) + " " + (seed == SeedMode::kLogit ? "ori" : "wtd") +
                                 " | " + s.id + " t" + std::to_string(r + 1) + " " +
                                 ClassName(model, s.classes[r]) + " p=" + Pct(s.probs[r])});
          }
        }
      }
    }
  } else {
    cols = 3 * sel.samples.size();
    const AblationMethod& m = methods.front();
    ExplainRequest base{m.method, SeedMode::kLogit, ReluMode::kNone, 0, m.layer};
    Require(IsSeedLinear(base), ErrorCode::kInvalidArgument,
            "fig5 layout needs a seed-linear method, got " + MethodName(m));
    std::vector<ClassMaps> sets;
    for (const auto& s : sel.samples) sets.push_back(ExplainAllClasses(model, data.image(s.index), base));
    for (auto comb : {Combinator::kOriginal, Combinator::kMean, Combinator::kMax,
                      Combinator::kWeighted}) {
      for (std::size_t i = 0; i < sel.samples.size(); ++i) {
        const auto& s = sel.samples[i];
        for (std::size_t r = 0; r < 3; ++r) {
          const auto map = Combine(sets[i], {comb, s.classes[r]});
          cells.push_back({data.image(s.index), map.values,
                           MethodName(m) + " " + ToString(comb) + " | " + s.id + " t" +
                               std::to_string(r + 1) + " " + ClassName(model, s.classes[r]) +
                               " p=" + Pct(s.probs[r])});
        }
      }
    }
  }
  const GridFigure g = RenderGrid(cells, cols, spec, GetCount(v, "frame"));
  if (g.warnings > 0) st.warnings.push_back(std::to_string(g.warnings) + " all-zero maps rendered neutral");
  st.samples = sel.samples.size();
  ctx.stages.push_back(st);
  json methods_json = json::array();
  for (const auto& m : methods) methods_json.push_back(MethodName(m));
  ctx.WriteGrid(prefix + "grid.png", g,
                {{"layout", layout},
                 {"threshold", th.ToString()},
                 {"seed", ctx.config.at("seed")},
                 {"model_id", model.info().model_id},
                 {"methods", methods_json},
                 {"config_hash", ConfigHash(ctx.config)}});
}

void CmdVisualize(Context& ctx) {
  auto model = ResolveModel(ctx.root, Get<std::string>(ctx.config, "model"), ctx.log);
  const Dataset data = LoadData(ctx, ctx.config);
  VisualizeStage(ctx, *model, data, ctx.config.at("visualize"), "");
}

RegressionReport RegressStage(Context& ctx, const Classifier& model, const Dataset& data,
                              const std::string& prefix) {
  const json& r = ctx.config.at("regress");
  Stage st;
  st.name = "regress:" + model.info().model_id;
  const auto rep = NormLogitRegression(
      model, data, GetCount(r, "num_images", 1), GetCount(r, "classes_per_image", 1),
      Get<std::uint64_t>(ctx.config, "seed"),
      Get<std::string>(r, "norm") == "l1" ? NormKind::kL1 : NormKind::kL2);
  st.samples = rep.points.size();
  ctx.stages.push_back(st);
  ctx.WriteJson(prefix + "regression.json", rep.ToJson());
  std::ostringstream csv;
  csv << "logit,norm\n";
  char buf[64];
  for (const auto& [y, n] : rep.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", y, n);
    csv << buf;
  }
  ctx.WriteCsv(prefix + "points.csv", csv.str());
  ctx.WriteImage(prefix + "regression.png", PlotRegression(rep),
                 {{"model_id", model.info().model_id}});
  return rep;
}

void CmdRegress(Context& ctx) {
  auto model = ResolveModel(ctx.root, Get<std::string>(ctx.config, "model"), ctx.log);
  const Dataset data = LoadData(ctx, ctx.config);
  const auto rep = RegressStage(ctx, *model, data, "");
  ctx.summary["slope_at_max"] = rep.SlopeAt(rep.y_max);
  ctx.summary["coefficients"] = rep.coefficients;
}

void CmdVerify(Context& ctx) {
  const json& v = ctx.config.at("verify");
  auto model = ResolveModel(ctx.root, Get<std::string>(ctx.config, "model"), ctx.log);
  const Dataset data = LoadData(ctx, ctx.config);
  Require(!data.empty(), ErrorCode::kInvalidArgument, "verify needs a non-empty dataset");
  const double tol = Get<double>(v, "tolerance");
  const auto methods = MethodList(v.at("methods"), *model,
                                  {"gradient", "gradcam", "linear_approx", "xgradcam", "fullgrad"},
                                  {"gradient", "vit_gradcam"});
  Rng rng(Get<std::uint64_t>(ctx.config, "seed"));
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t n = std::min(GetCount(v, "num_images", 1), data.size());
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.Index(idx.size() - i)]);

  Stage st;
  st.name = "verify:" + model->info().model_id;
  json reports = json::array();
  bool all = true;
  for (const auto& m : methods) {
    double worst = 0.0, worst_scale = 0.0;
    std::size_t degenerate = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor& x = data.image(idx[i]);
      ExplainRequest req{m.method, SeedMode::kLogit, ReluMode::kNone, data.label(idx[i]), m.layer};
      const auto r = VerifySoftmaxEquivalence(*model, x, req);
      if (r.degenerate) {
        ++degenerate;
        continue;
      }
      worst = std::max(worst, r.max_rel_error);
      worst_scale = std::max(worst_scale, std::abs(r.scale_factor / r.expected_scale - 1.0));
    }
    const bool ok = worst <= tol;
    all = all && ok;
    if (degenerate > 0) {
      st.warnings.push_back(MethodName(m) + ": " + std::to_string(degenerate) +
                            " images with vanishing softmax gradient skipped");
    }
    reports.push_back({{"method", MethodName(m)},
                       {"max_rel_error", worst},
                       {"max_scale_deviation", worst_scale},
                       {"degenerate", degenerate},
                       {"images", n},
                       {"passed", ok}});
    Check(ctx, "softmax equivalence " + MethodName(m), ok, {{"max_rel_error", worst}, {"tolerance", tol}});
  }
  st.samples = n;
  ctx.stages.push_back(st);
  ctx.WriteJson("verify.json", {{"model_id", model->info().model_id}, {"tolerance", tol}, {"reports", reports}, {"passed", all}});
  ctx.summary["passed"] = all;
}

void CmdBootstrap(Context& ctx) {
  EnsureToyData(ctx.root, ctx.log);
  const Dataset test = LoadToySplit(ctx.root, "test", ctx.log);
  json models = json::object();
  for (const auto& name : ToyModelNames()) {
    auto m = EnsureToyModel(ctx.root, name, ctx.log);
    const double acc = Accuracy(*m, test);
    models[name] = {{"test_accuracy", acc}};
    Stage st;
    st.name = "bootstrap:" + name;
    st.samples = test.size();
    ctx.stages.push_back(st);
    ctx.Say(name + " test accuracy " + Pct(acc));
  }
  ctx.WriteJson("bootstrap.json", {{"artifact_root", ctx.root}, {"models", models}});
  ctx.summary["models"] = models;
}

// ------------------------------------------------------------------ reproduce

void BundleReadme(Context& ctx, const std::string& title, const std::vector<std::string>& checked,
                  const std::vector<std::string>& documented) {
  std::ostringstream os;
  os << "# " << title << "\n\nrun_id: " << ctx.run_id << "\n\n## Pattern-checked at desk scale\n\n";
  for (const auto& c : checked) os << "- " << c << "\n";
  os << "\nResults of each check are in `checks.json`.\n\n## Documented only\n\n";
  for (const auto& d : documented) os << "- " << d << "\n";
  ctx.WriteText("README.md", os.str());
}

void ReproduceFig3(Context& ctx) {
  PerturbConfig pc = BuildPerturbConfig(ctx.config.at("perturb"));
  json cfg = ctx.config;
  if (cfg.at("dataset").at("limit") == 0) cfg["dataset"]["limit"] = 500;
  const Dataset data = LoadData(ctx, cfg);
  for (const auto& name : ToyModelNames()) {
    auto model = EnsureToyModel(ctx.root, name, ctx.log);
    const auto t = PerturbStage(ctx, *model, data, pc, name + "/", DatasetId(cfg));
    if (pc.n_total == 0 || t.sample_count == 0) continue;
    auto last = [&](Combinator c, int which) {
      const auto& s = t.Get(c);
      return which == 0 ? s.accuracy.back() : which == 1 ? s.mean_y_t.back() : s.mean_p_t.back();
    };
    const auto& w = t.Get(Combinator::kWeighted);
    const double gain_w = w.mean_p_t.back() - w.mean_p_t.front();
    const double gain_m = t.Get(Combinator::kMax).mean_p_t.back() - w.mean_p_t.front();
    Check(ctx, name + ": p_t(weighted) > p_t(original)",
          last(Combinator::kWeighted, 2) > last(Combinator::kOriginal, 2),
          {{"weighted", last(Combinator::kWeighted, 2)}, {"original", last(Combinator::kOriginal, 2)}});
    Check(ctx, name + ": accuracy(weighted) >= accuracy(clean)",
          last(Combinator::kWeighted, 0) >= w.accuracy.front(),
          {{"weighted", last(Combinator::kWeighted, 0)}, {"clean", w.accuracy.front()}});
    Check(ctx, name + ": y_t(original) > y_t(weighted)",
          last(Combinator::kOriginal, 1) > last(Combinator::kWeighted, 1),
          {{"original", last(Combinator::kOriginal, 1)}, {"weighted", last(Combinator::kWeighted, 1)}});
    Check(ctx, name + ": max p_t gain within 20% of weighted",
          gain_w > 0.0 && std::abs(gain_m - gain_w) <= 0.2 * gain_w,
          {{"gain_weighted", gain_w}, {"gain_max", gain_m}});
  }
  BundleReadme(ctx, "fig3: iterative sign perturbation",
               {"final-iteration ordering of p_t, y_t and accuracy across the four selectors"},
               {"absolute curve values for large pretrained classifiers; the toy models only "
                "reproduce the ordering"});
}

void ReproduceGrid(Context& ctx, const std::string& layout) {
  json v = ctx.config.at("visualize");
  v["layout"] = layout;
  if (layout == "fig5" && v.at("threshold") == "p2>0.1") v["threshold"] = "p3>0.1";
  const Dataset data = LoadData(ctx, ctx.config);
  for (const auto& name : ToyModelNames()) {
    auto model = EnsureToyModel(ctx.root, name, ctx.log);
    json mv = v;
    if (layout == "fig4" && mv.at("methods").is_null() && model->info().kind == ModelKind::kCnn) {
      mv["methods"] = {"gradcam", "linear_approx", "xgradcam", "fullgrad"};
    }
    if (layout == "fig5" && mv.at("methods").is_null() &&
        model->info().kind == ModelKind::kPatchTransformer) {
      mv["methods"] = {"vit_gradcam"};
    }
    VisualizeStage(ctx, *model, data, mv, name + "/");
  }
  BundleReadme(ctx, layout + ": explanation grids",
               {"none; the grids are qualitative"},
               {layout == "fig4"
                    ? "original (logit seed) and weighted (softmax seed) maps for the two most "
                      "probable classes of images with p2 > 0.1"
                    : "original, mean, max and weighted contrasts for the three most probable "
                      "classes of images with p3 > 0.1"});
}

void AblationChecks(Context& ctx, const AblationRecord& r) {
  std::vector<std::string> methods;
  for (const auto& c : r.cells) {
    if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
  }
  const auto& ac = ctx.config.at("ablate");
  for (const auto& m : methods) {
    for (const auto& b : ac.at("baselines")) {
      const Baseline base = ParseBaseline(b.get<std::string>());
      for (std::size_t rank : {1u, 2u}) {
        const double po = r.Get(m, AblationSeed::kOriginal, base, FeatureSign::kPositive, rank).mean;
        const double pw = r.Get(m, AblationSeed::kWeighted, base, FeatureSign::kPositive, rank).mean;
        const double no = r.Get(m, AblationSeed::kOriginal, base, FeatureSign::kNegative, rank).mean;
        const double nw = r.Get(m, AblationSeed::kWeighted, base, FeatureSign::kNegative, rank).mean;
        const std::string tag = m + " " + ToString(base) + " t" + std::to_string(rank);
        Check(ctx, tag + ": positive wtd > ori", pw > po, {{"wtd", pw}, {"ori", po}});
        Check(ctx, tag + ": negative wtd < ori", nw < no, {{"wtd", nw}, {"ori", no}});
      }
    }
  }
}

void ReproduceTable(Context& ctx, bool inverse) {
  AblationConfig ac = BuildAblationConfig(ctx.config.at("ablate"));
  auto model = EnsureToyModel(ctx.root, Get<std::string>(ctx.config, "model"), ctx.log);
  const Dataset data = LoadData(ctx, ctx.config);
  const json& methods = ctx.config.at("ablate").at("methods");
  ac.threshold = Threshold::Parse("p2>0.1");
  const auto high = AblateStage(ctx, *model, data, ac, methods, "p2_above_0.1/", DatasetId(ctx.config));
  if (!inverse) {
    if (!high.empty()) AblationChecks(ctx, high);
    BundleReadme(ctx, "table1: blur and mask ablation (p2 > 0.1)",
                 {"keeping positive features: weighted > original for t1 and t2",
                  "keeping negative features: weighted < original for t1 and t2"},
                 {"full-scale reference values, e.g. clean 0.712 / 0.288 and GradCAM blur "
                  "0.789 (wtd) vs 0.695 (ori); not comparable at toy scale"});
    return;
  }
  ac.threshold = Threshold::Parse("p2<0.1");
  const auto low = AblateStage(ctx, *model, data, ac, methods, "p2_below_0.1/", DatasetId(ctx.config));
  if (!high.empty() && !low.empty()) {
    for (const auto& c : low.cells) {
      if (c.seed != AblationSeed::kOriginal || c.sign != FeatureSign::kPositive || c.rank != 1) continue;
      const double gap_low = std::abs(
          c.mean - low.Get(c.method, AblationSeed::kWeighted, c.baseline, c.sign, 1).mean);
      const double gap_high =
          std::abs(high.Get(c.method, AblationSeed::kOriginal, c.baseline, c.sign, 1).mean -
                   high.Get(c.method, AblationSeed::kWeighted, c.baseline, c.sign, 1).mean);
      Check(ctx, c.method + " " + ToString(c.baseline) + ": positive-feature gap shrinks for p2 < 0.1",
            gap_low < gap_high, {{"gap_p2_below", gap_low}, {"gap_p2_above", gap_high}});
    }
  }
  BundleReadme(ctx, "table3: dominating-class ablation (p2 < 0.1)",
               {"|p(ori) - p(wtd)| for kept positive features of t1 is smaller than under p2 > 0.1"},
               {"full-scale reference values 0.981 (ori) / 0.979 (wtd)"});
}

void ReproduceRegression(Context& ctx) {
  auto model = EnsureToyModel(ctx.root, Get<std::string>(ctx.config, "model"), ctx.log);
  const Dataset data = LoadData(ctx, ctx.config);
  const auto rep = RegressStage(ctx, *model, data, "");
  Check(ctx, "positive slope at the largest observed logit", rep.SlopeAt(rep.y_max) > 0.0,
        {{"slope", rep.SlopeAt(rep.y_max)}, {"y_max", rep.y_max}});
  BundleReadme(ctx, "regression: explanation norm against logit",
               {"fitted degree-2 curve rises at the largest observed logit"},
               {"full-scale scatter over many classes and images"});
}

void CmdReproduce(Context& ctx, const std::string& target) {
  if (target == "fig3") ReproduceFig3(ctx);
  if (target == "fig4" || target == "fig5") ReproduceGrid(ctx, target);
  if (target == "table1") ReproduceTable(ctx, false);
  if (target == "table3") ReproduceTable(ctx, true);
  if (target == "regression") ReproduceRegression(ctx);
  ctx.WriteJson("checks.json", {{"target", target}, {"checks", ctx.checks}});
}

}  // namespace

RunResult Run(const RunRequest& request) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& cmds = Commands();
  Require(std::find(cmds.begin(), cmds.end(), request.command) != cmds.end(),
          ErrorCode::kInvalidArgument, "unknown command '" + request.command + "'");
  if (request.command == "reproduce") {
    const auto& t = ReproduceTargets();
    Require(std::find(t.begin(), t.end(), request.target) != t.end(),
            ErrorCode::kInvalidArgument,
            "unknown reproduce target '" + request.target +
                "' (expected fig3, fig4, fig5, table1, table3 or regression)");
  }
  json config = LoadConfig(request.config_path, request.overrides);
  if (request.jobs > 0) config["jobs"] = request.jobs;
  ValidateSections(request.command, request.target, config);

  const std::string command =
      request.command == "reproduce" ? "reproduce-" + request.target : request.command;
  RunResult result;
  result.run_id = RunId(command, config);
  const std::string root = ArtifactRoot(request.artifact_root);
  result.output_dir = config.at("output_dir").is_null()
                          ? (fs::path(root) / "runs" / result.run_id).string()
                          : config.at("output_dir").get<std::string>();

  Context ctx(root, result.output_dir, result.run_id, config, GetCount(config, "jobs", 1),
              request.log);
  fs::create_directories(ctx.out);
  int exit_code = 0;
  try {
    if (request.command == "explain") CmdExplain(ctx, false);
    if (request.command == "contrast") CmdExplain(ctx, true);
    if (request.command == "perturb") CmdPerturb(ctx);
    if (request.command == "ablate") CmdAblate(ctx);
    if (request.command == "visualize") CmdVisualize(ctx);
    if (request.command == "regress") CmdRegress(ctx);
    if (request.command == "verify") CmdVerify(ctx);
    if (request.command == "bootstrap") CmdBootstrap(ctx);
    if (request.command == "reproduce") CmdReproduce(ctx, request.target);
  } catch (const Error& e) {
    Stage st;
    st.name = command;
    st.status = "failed";
    st.error = e.what();
    st.code = static_cast<int>(e.code());
    ctx.stages.push_back(st);
  } catch (const std::exception& e) {
    Stage st;
    st.name = command;
    st.status = "failed";
    st.error = e.what();
    st.code = static_cast<int>(ErrorCode::kInternal);
    ctx.stages.push_back(st);
  }
  for (const auto& s : ctx.stages) {
    if (s.code != 0 && exit_code == 0) exit_code = s.code;
  }
  bool checks_ok = true;
  for (const auto& c : ctx.checks) checks_ok = checks_ok && c.at("passed").get<bool>();
  if (exit_code == 0 && !checks_ok) exit_code = kExitCheckFailed;

  json stages = json::array();
  for (const auto& s : ctx.stages) stages.push_back(s.ToJson());
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json manifest = {{"run_id", result.run_id},
                   {"command", request.command},
                   {"target", request.target},
                   {"config_hash", ConfigHash(config)},
                   {"config", config},
                   {"versions",
                    {{"ccbp", kVersion},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
                   {"seed", config.at("seed")},
                   {"artifact_root", root},
                   {"wall_clock_seconds", wall},
                   {"stages", stages},
                   {"checks", ctx.checks},
                   {"outputs", ctx.outputs},
                   {"exit_code", exit_code}};
  {
    std::ofstream f(ctx.Path("manifest.json"));
    Require(static_cast<bool>(f), ErrorCode::kIo, "cannot write " + ctx.Path("manifest.json"));
    f << manifest.dump(2) << '\n';
  }
  result.exit_code = exit_code;
  result.summary = ctx.summary;
  result.summary["run_id"] = result.run_id;
  result.summary["output_dir"] = result.output_dir;
  result.summary["exit_code"] = exit_code;
  result.summary["stages"] = stages;
  if (!ctx.checks.empty()) result.summary["checks"] = ctx.checks;
  return result;
}

}  // namespace ccbp
