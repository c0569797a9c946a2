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

#include "ccbp/ablate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "ccbp/error.hpp"
#include "ccbp/gradients.hpp"
#include "ccbp/parallel.hpp"
#include "ccbp/resize.hpp"

namespace ccbp {

std::string ToString(Baseline b) {
  switch (b) {
    case Baseline::kGaussianBlur: return "gaussian_blur";
    case Baseline::kZeros: return "zeros";
    case Baseline::kChannelMean: return "channel_mean";
  }
  return "?";
}

Baseline ParseBaseline(const std::string& s) {
  if (s == "gaussian_blur") return Baseline::kGaussianBlur;
  if (s == "zeros") return Baseline::kZeros;
  if (s == "channel_mean") return Baseline::kChannelMean;
  Fail(ErrorCode::kInvalidArgument, "unknown baseline '" + s +
                                        "' (expected gaussian_blur, zeros or channel_mean)");
}

std::string ToString(FeatureSign s) {
  return s == FeatureSign::kPositive ? "positive" : "negative";
}

FeatureSign ParseFeatureSign(const std::string& s) {
  if (s == "positive") return FeatureSign::kPositive;
  if (s == "negative") return FeatureSign::kNegative;
  Fail(ErrorCode::kInvalidArgument, "unknown feature sign '" + s + "'");
}

std::string ToString(AblationSeed s) {
  return s == AblationSeed::kOriginal ? "original" : "weighted";
}

AblationSeed ParseAblationSeed(const std::string& s) {
  if (s == "original") return AblationSeed::kOriginal;
  if (s == "weighted") return AblationSeed::kWeighted;
  Fail(ErrorCode::kInvalidArgument, "unknown ablation seed '" + s + "'");
}

double RelativeProbability(double y_a, double y_b) {
  const double m = std::max(y_a, y_b);
  const double ea = std::exp(y_a - m), eb = std::exp(y_b - m);
  return ea / (ea + eb);
}

FeatureMask BuildMask(const Tensor& map, FeatureSign sign, const Tensor* partner,
                      bool equal_area) {
  Require(map.rank() == 2, ErrorCode::kShapeMismatch,
          "mask maps must be (H, W), got " + ShapeString(map.shape()));
  const double dir = sign == FeatureSign::kPositive ? 1.0 : -1.0;
  auto count_signed = [&](const Tensor& m) {
    return static_cast<std::size_t>(
        std::count_if(m.storage().begin(), m.storage().end(),
                      [&](double v) { return dir * v > 0.0; }));
  };
  std::vector<std::size_t> cells;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (dir * map[i] > 0.0) cells.push_back(i);
  }
  std::size_t k = cells.size();
  FeatureMask out;
  out.sign = sign;
  if (partner != nullptr && equal_area) {
    Require(partner->shape() == map.shape(), ErrorCode::kShapeMismatch,
            "partner map " + ShapeString(partner->shape()) + " differs from " +
                ShapeString(map.shape()));
    k = std::min(k, count_signed(*partner));
    out.equalized = true;
  }
  std::stable_sort(cells.begin(), cells.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(map[a]) > std::abs(map[b]);
  });
  cells.resize(k);
  out.keep = Tensor(map.shape());
  for (std::size_t i : cells) out.keep[i] = 1.0;
  out.kept = k;
  out.kept_fraction = map.size() ? static_cast<double>(k) / static_cast<double>(map.size()) : 0.0;
  out.empty_warning = k == 0;
  out.provenance = ToString(sign) + (out.equalized ? ",equal_area" : "");
  return out;
}

BlurSpec BlurSpec::Scaled(std::size_t size, double ref_sigma, std::size_t ref_kernel,
                          std::size_t ref_size) {
  const double f = static_cast<double>(size) / static_cast<double>(ref_size);
  BlurSpec b;
  b.sigma = ref_sigma * f;
  auto k = static_cast<std::size_t>(std::lround(static_cast<double>(ref_kernel) * f));
  if (k % 2 == 0) k = k > 0 ? k - 1 : 1;
  b.kernel = std::max<std::size_t>(k, 3);
  return b;
}

namespace {

std::size_t Reflect(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  if (i >= n) i = period - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

Tensor GaussianBlur(const Tensor& chw, const BlurSpec& spec) {
  Require(chw.rank() == 3, ErrorCode::kShapeMismatch,
          "blur expects (C, H, W), got " + ShapeString(chw.shape()));
  Require(spec.kernel % 2 == 1 && spec.sigma > 0.0, ErrorCode::kInvalidArgument,
          "blur kernel must be odd and sigma positive");
  const long r = static_cast<long>(spec.kernel / 2);
  std::vector<double> w(spec.kernel);
  for (long d = -r; d <= r; ++d) {
    w[d + r] = std::exp(-0.5 * static_cast<double>(d * d) / (spec.sigma * spec.sigma));
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= total;

  const std::size_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
  Tensor tmp(chw.shape()), out(chw.shape());
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        double s = 0.0;
        for (long d = -r; d <= r; ++d) {
          s += w[d + r] * chw.at(c, y, Reflect(static_cast<long>(x) + d, static_cast<long>(W)));
        }
        tmp.at(c, y, x) = s;
      }
    }
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        double s = 0.0;
        for (long d = -r; d <= r; ++d) {
          s += w[d + r] * tmp.at(c, Reflect(static_cast<long>(y) + d, static_cast<long>(H)), x);
        }
        out.at(c, y, x) = s;
      }
    }
  }
  return out;
}

namespace {

std::vector<double> ChannelMeans(const Tensor& chw) {
  const std::size_t C = chw.dim(0), plane = chw.dim(1) * chw.dim(2);
  std::vector<double> m(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < plane; ++i) m[c] += chw[c * plane + i];
    m[c] /= static_cast<double>(plane);
  }
  return m;
}

Tensor Replace(const Tensor& image, const FeatureMask& mask, Baseline baseline,
               const Tensor* blurred, const std::vector<double>& means) {
  const std::size_t C = image.dim(0), plane = image.dim(1) * image.dim(2);
  Tensor out = image;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      if (mask.keep[i] != 0.0) continue;
      const std::size_t j = c * plane + i;
      switch (baseline) {
        case Baseline::kGaussianBlur: out[j] = (*blurred)[j]; break;
        case Baseline::kZeros: out[j] = 0.0; break;
        case Baseline::kChannelMean: out[j] = means[c]; break;
      }
    }
  }
  return out;
}

}  // namespace

Tensor ApplyBaseline(const Tensor& image, const FeatureMask& mask, Baseline baseline,
                     const BlurSpec& blur, const std::vector<double>* channel_mean) {
  Require(image.rank() == 3, ErrorCode::kShapeMismatch,
          "image must be (C, H, W), got " + ShapeString(image.shape()));
  Require(mask.keep.shape() == Shape{image.dim(1), image.dim(2)}, ErrorCode::kShapeMismatch,
          "mask " + ShapeString(mask.keep.shape()) + " does not match image " +
              ShapeString(image.shape()));
  Tensor blurred;
  if (baseline == Baseline::kGaussianBlur) blurred = GaussianBlur(image, blur);
  std::vector<double> means;
  if (baseline == Baseline::kChannelMean) {
    means = channel_mean ? *channel_mean : ChannelMeans(image);
    Require(means.size() == image.dim(0), ErrorCode::kShapeMismatch,
            "channel mean has wrong length");
  }
  return Replace(image, mask, baseline, &blurred, means);
}

void AblationConfig::Validate() const {
  Require(!methods.empty() && !baselines.empty() && !signs.empty(),
          ErrorCode::kInvalidArgument, "ablation axes must be non-empty");
  Require(blur_kernel == 0 || blur_kernel % 2 == 1, ErrorCode::kInvalidArgument,
          "blur_kernel must be odd");
  Require(threshold.rank == 2, ErrorCode::kInvalidArgument,
          "ablation thresholds test p2, got " + threshold.ToString());
  Require(blur_sigma >= 0.0, ErrorCode::kInvalidArgument, "blur_sigma must be >= 0");
  for (const auto& m : methods) {
    Require(IsSeedLinear({m.method, SeedMode::kLogit, ReluMode::kNone, 0, m.layer}) &&
                m.method != Method::kAttnRollout,
            ErrorCode::kInvalidArgument,
            "ablation method '" + ToString(m.method) + "' is not seed-linear");
  }
}

BlurSpec AblationConfig::Blur(std::size_t image_size) const {
  BlurSpec b = BlurSpec::Scaled(image_size);
  if (blur_sigma > 0.0) b.sigma = blur_sigma;
  if (blur_kernel > 0) b.kernel = blur_kernel;
  return b;
}

nlohmann::json AblationConfig::ToJson() const {
  nlohmann::json m = nlohmann::json::array(), b = nlohmann::json::array(),
                 s = nlohmann::json::array();
  for (const auto& x : methods) {
    m.push_back({{"method", ToString(x.method)},
                 {"layer", x.layer ? nlohmann::json(*x.layer) : nlohmann::json()}});
  }
  for (auto x : baselines) b.push_back(ToString(x));
  for (auto x : signs) s.push_back(ToString(x));
  return {{"methods", m},
          {"baselines", b},
          {"feature_signs", s},
          {"threshold", threshold.ToString()},
          {"equal_area", equal_area},
          {"blur_sigma", blur_sigma},
          {"blur_kernel", blur_kernel},
          {"dataset_channel_mean", dataset_channel_mean}};
}

AblationMethod ResolveLayer(const Classifier& model, AblationMethod m) {
  if (!NeedsLayer(m.method) || m.layer) return m;
  const auto& names = model.info().layer_names;
  for (auto it = names.rbegin(); it != names.rend(); ++it) {
    if (it->rfind("block", 0) == 0) {
      m.layer = *it;
      return m;
    }
  }
  Fail(ErrorCode::kUnknownLayer,
       "model '" + model.info().model_id + "' has no block layer for " + ToString(m.method));
}

namespace {

std::string MethodLabel(const AblationMethod& m) {
  return ToString(m.method) + (m.layer ? "@" + *m.layer : "");
}

std::pair<std::size_t, std::size_t> TopTwo(std::span<const double> y) {
  std::size_t a = 0;
  for (std::size_t i = 1; i < y.size(); ++i) {
    if (y[i] > y[a]) a = i;
  }
  std::size_t b = a == 0 ? 1 : 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (i != a && y[i] > y[b]) b = i;
  }
  return {a, b};
}

Tensor PixelMap(const ExplanationMap& m, std::size_t h, std::size_t w) {
  if (m.values.dim(0) == h && m.values.dim(1) == w) return m.values;
  return BilinearResize(m.values, h, w);
}

}  // namespace

const AblationCell& AblationRecord::Get(const std::string& method, AblationSeed seed,
                                        Baseline baseline, FeatureSign sign,
                                        std::size_t rank) const {
  for (const auto& c : cells) {
    if (c.method == method && c.seed == seed && c.baseline == baseline && c.sign == sign &&
        c.rank == rank) {
      return c;
    }
  }
  Fail(ErrorCode::kInvalidArgument, "no ablation cell for " + method);
}

nlohmann::json AblationRecord::ToJson() const {
  nlohmann::json cs = nlohmann::json::array();
  for (const auto& c : cells) {
    cs.push_back({{"method", c.method},
                  {"seed", ToString(c.seed)},
                  {"baseline", ToString(c.baseline)},
                  {"sign", ToString(c.sign)},
                  {"rank", c.rank},
                  {"mean_relative_probability", c.mean},
                  {"count", c.count},
                  {"empty_masks", c.empty_masks}});
  }
  return {{"model_id", model_id},
          {"dataset_id", dataset_id},
          {"status", status},
          {"evaluated", evaluated},
          {"sample_count", sample_count},
          {"clean", {{"t1", clean_t1}, {"t2", clean_t2}}},
          {"blur", {{"sigma", blur.sigma}, {"kernel", blur.kernel}}},
          {"config", config},
          {"failures", failures},
          {"cells", cs}};
}

std::string AblationRecord::ToTableCsv() const {
  std::vector<std::string> methods;
  std::vector<std::tuple<Baseline, FeatureSign, AblationSeed>> cols;
  for (const auto& c : cells) {
    if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) {
      methods.push_back(c.method);
    }
    const auto key = std::make_tuple(c.baseline, c.sign, c.seed);
    if (std::find(cols.begin(), cols.end(), key) == cols.end()) cols.push_back(key);
  }
  std::ostringstream os;
  os << "method,rank,clean";
  for (const auto& [b, s, d] : cols) {
    os << ',' << ToString(b) << '/' << ToString(s) << '/' << ToString(d);
  }
  os << '\n';
  char buf[64];
  for (const auto& m : methods) {
    for (std::size_t rank : {1u, 2u}) {
      std::snprintf(buf, sizeof buf, "%.17g", rank == 1 ? clean_t1 : clean_t2);
      os << m << ",t" << rank << ',' << buf;
      for (const auto& [b, s, d] : cols) {
        std::snprintf(buf, sizeof buf, "%.17g", Get(m, d, b, s, rank).mean);
        os << ',' << buf;
      }
      os << '\n';
    }
  }
  return os.str();
}

AblationRecord RunAblation(const Classifier& model, const Dataset& data,
                           const AblationConfig& config, const AblateRunOptions& options) {
  config.Validate();
  Require(model.num_classes() >= 2, ErrorCode::kInvalidArgument,
          "ablation needs at least two classes");
  std::vector<AblationMethod> methods;
  for (const auto& m : config.methods) methods.push_back(ResolveLayer(model, m));

  const Shape& in = model.info().input_shape;
  const std::size_t H = in[1], W = in[2];
  const BlurSpec blur = config.Blur(std::max(H, W));

  std::vector<double> dataset_mean;
  if (config.dataset_channel_mean && !data.empty()) {
    dataset_mean.assign(in[0], 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto m = ChannelMeans(data.image(i));
      for (std::size_t c = 0; c < m.size(); ++c) dataset_mean[c] += m[c];
    }
    for (double& v : dataset_mean) v /= static_cast<double>(data.size());
  }

  AblationRecord rec;
  rec.model_id = model.info().model_id;
  rec.dataset_id = options.dataset_id;
  rec.blur = blur;
  rec.config = config.ToJson();
  for (const auto& m : methods) {
    for (auto seed : {AblationSeed::kOriginal, AblationSeed::kWeighted}) {
      for (auto b : config.baselines) {
        for (auto s : config.signs) {
          for (std::size_t rank : {1u, 2u}) {
            AblationCell c;
            c.method = MethodLabel(m);
            c.seed = seed;
            c.baseline = b;
            c.sign = s;
            c.rank = rank;
            rec.cells.push_back(c);
          }
        }
      }
    }
  }
  const std::size_t nb = config.baselines.size(), ns = config.signs.size();
  auto cell_index = [&](std::size_t m, std::size_t seed, std::size_t b, std::size_t s,
                        std::size_t rank) {
    return ((((m * 2 + seed) * nb + b) * ns + s) * 2) + rank;
  };

  struct ImageResult {
    bool passed = false;
    double clean1 = 0.0, clean2 = 0.0;
    std::vector<double> values;
    std::vector<unsigned char> empty;
    std::string error;
  };
  std::vector<ImageResult> results(data.size());

  ParallelFor(data.size(), options.jobs, [&](std::size_t i) {
    ImageResult& r = results[i];
    try {
      const Tensor& x = data.image(i);
      const auto y = model.Logits(AsBatch(x)).storage();
      const auto p = Softmax(y);
      const auto [t1, t2] = TopTwo(y);
      if (!config.threshold.Accept(p[t2])) return;
      r.passed = true;
      r.clean1 = RelativeProbability(y[t1], y[t2]);
      r.clean2 = RelativeProbability(y[t2], y[t1]);
      r.values.assign(rec.cells.size(), 0.0);
      r.empty.assign(rec.cells.size(), 0);

      Tensor blurred;
      if (std::find(config.baselines.begin(), config.baselines.end(),
                    Baseline::kGaussianBlur) != config.baselines.end()) {
        blurred = GaussianBlur(x, blur);
      }
      const std::vector<double> means =
          dataset_mean.empty() ? ChannelMeans(x) : dataset_mean;

      for (std::size_t rank = 0; rank < 2; ++rank) {
        const std::size_t t = rank == 0 ? t1 : t2;
        const std::size_t other = rank == 0 ? t2 : t1;
        for (std::size_t m = 0; m < methods.size(); ++m) {
          ExplainRequest req{methods[m].method, SeedMode::kLogit, ReluMode::kNone, t,
                             methods[m].layer};
          const Tensor ori = PixelMap(Explain(model, x, req), H, W);
          req.seed_mode = SeedMode::kSoftmax;
          const Tensor wtd = PixelMap(Explain(model, x, req), H, W);
          for (std::size_t s = 0; s < ns; ++s) {
            const FeatureSign sign = config.signs[s];
            const FeatureMask masks[2] = {BuildMask(ori, sign, &wtd, config.equal_area),
                                          BuildMask(wtd, sign, &ori, config.equal_area)};
            for (std::size_t seed = 0; seed < 2; ++seed) {
              for (std::size_t b = 0; b < nb; ++b) {
                const Tensor xm = Replace(x, masks[seed], config.baselines[b], &blurred, means);
                const auto ym = model.Logits(AsBatch(xm)).storage();
                const std::size_t k = cell_index(m, seed, b, s, rank);
                r.values[k] = RelativeProbability(ym[t], ym[other]);
                r.empty[k] = masks[seed].empty_warning ? 1 : 0;
              }
            }
          }
        }
      }
    } catch (const std::exception& e) {
      r = ImageResult{};
      r.error = e.what();
    }
  });

  rec.evaluated = data.size();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (!r.error.empty()) {
      rec.failures.push_back(data.id(i) + ": " + r.error);
      continue;
    }
    if (!r.passed) continue;
    ++rec.sample_count;
    rec.clean_t1 += r.clean1;
    rec.clean_t2 += r.clean2;
    for (std::size_t k = 0; k < rec.cells.size(); ++k) {
      rec.cells[k].mean += r.values[k];
      rec.cells[k].count += 1;
      rec.cells[k].empty_masks += r.empty[k];
    }
  }
  if (rec.sample_count == 0) {
    rec.status = "empty_result";
    return rec;
  }
  const double inv = 1.0 / static_cast<double>(rec.sample_count);
  rec.clean_t1 *= inv;
  rec.clean_t2 *= inv;
  for (auto& c : rec.cells) c.mean *= inv;
  return rec;
}

}  // namespace ccbp
