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

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "ccbp/error.hpp"
#include "ccbp/model.hpp"
#include "ccbp/rng.hpp"

namespace ccbp {

nlohmann::json PatchTransformerConfig::ToJson() const {
  return {{"family", "patch_transformer"},
          {"input_shape", input_shape},
          {"patch", patch},
          {"embed", embed},
          {"heads", heads},
          {"mlp", mlp},
          {"depth", depth},
          {"num_classes", num_classes},
          {"mean", mean},
          {"std", stddev}};
}

PatchTransformerConfig PatchTransformerConfig::FromJson(const nlohmann::json& j) {
  PatchTransformerConfig c;
  c.input_shape = j.at("input_shape").get<Shape>();
  c.patch = j.at("patch");
  c.embed = j.at("embed");
  c.heads = j.at("heads");
  c.mlp = j.at("mlp");
  c.depth = j.at("depth");
  c.num_classes = j.at("num_classes");
  c.mean = j.at("mean").get<std::vector<double>>();
  c.stddev = j.at("std").get<std::vector<double>>();
  return c;
}

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using MapMat = Eigen::Map<Mat>;
using ConstMapMat = Eigen::Map<const Mat>;
using ConstMapVec = Eigen::Map<const Vec>;

constexpr double kLnEps = 1e-6;

ConstMapMat AsMat(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMapMat(t.data(), static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}

ConstMapVec AsVec(const Tensor& t) {
  return ConstMapVec(t.data(), static_cast<Eigen::Index>(t.size()));
}

void AccumulateInto(Tensor& dst, const Mat& m) {
  MapMat(dst.data(), m.rows(), m.cols()) += m;
}

void AccumulateInto(Tensor& dst, const Vec& v) {
  Eigen::Map<Vec>(dst.data(), v.size()) += v;
}

struct LayerNormCache {
  Mat xhat;
  Vec rstd;
};

Mat LayerNormForward(const Mat& x, const Tensor& gamma, const Tensor& beta,
                     LayerNormCache& cache) {
  const Eigen::Index t = x.rows(), d = x.cols();
  cache.xhat.resize(t, d);
  cache.rstd.resize(t);
  Mat y(t, d);
  for (Eigen::Index i = 0; i < t; ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    const double r = 1.0 / std::sqrt(var + kLnEps);
    cache.rstd(i) = r;
    cache.xhat.row(i) = (x.row(i).array() - mean) * r;
    y.row(i) = cache.xhat.row(i).array() * AsVec(gamma).transpose().array() +
               AsVec(beta).transpose().array();
  }
  return y;
}

Mat LayerNormBackward(const Mat& dy, const Tensor& gamma,
                      const LayerNormCache& cache, Tensor* dgamma,
                      Tensor* dbeta) {
  const Eigen::Index t = dy.rows(), d = dy.cols();
  Mat dx(t, d);
  for (Eigen::Index i = 0; i < t; ++i) {
    Eigen::RowVectorXd dxhat =
        dy.row(i).array() * AsVec(gamma).transpose().array();
    const double m1 = dxhat.mean();
    const double m2 = (dxhat.array() * cache.xhat.row(i).array()).mean();
    dx.row(i) = cache.rstd(i) *
                (dxhat.array() - m1 - cache.xhat.row(i).array() * m2);
  }
  if (dgamma) {
    AccumulateInto(*dgamma,
                   Vec((dy.array() * cache.xhat.array()).colwise().sum().transpose()));
    AccumulateInto(*dbeta, Vec(dy.colwise().sum().transpose()));
  }
  return dx;
}

double Gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double GeluGrad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

// Parameter slots, in MutableParams() order.
enum GlobalSlot : std::size_t {
  kPatchW = 0, kPatchB, kCls, kPos, kGlobalCount
};
enum BlockSlot : std::size_t {
  kLn1G = 0, kLn1B, kQkvW, kQkvB, kOutW, kOutB, kLn2G, kLn2B,
  kMlp1W, kMlp1B, kMlp2W, kMlp2B, kBlockCount
};
enum TailSlot : std::size_t { kLnfG = 0, kLnfB, kHeadW, kHeadB, kTailCount };

struct BlockCache {
  Mat input;          // (T, D)
  LayerNormCache ln1;
  Mat u1;             // ln1 output
  Mat qkv;            // (T, 3D)
  std::vector<Mat> softmax;  // per head (T, T), before any nudge
  std::vector<Mat> attn;     // per head, as used
  Mat concat;         // (T, D)
  Mat mid;            // residual after attention
  LayerNormCache ln2;
  Mat u2;
  Mat hidden_pre;     // (T, M)
  Mat hidden;         // gelu(hidden_pre)
  Mat output;         // (T, D)
};

struct ImageCache {
  Mat patches;   // (P, C*ps*ps)
  std::vector<BlockCache> blocks;
  LayerNormCache lnf;
  Mat final_tokens;
};

class TransformerTrace final : public ForwardTrace {
 public:
  const Tensor& Activation(const std::string& name) const override {
    auto it = named.find(name);
    Require(it != named.end(), ErrorCode::kUnknownLayer,
            "no activation named '" + name + "'");
    return it->second;
  }

  std::vector<Tensor> Attentions() const override { return attentions; }

  std::vector<ImageCache> images;
  std::map<std::string, Tensor> named;  // "blockK" -> (N, T, D); "logits"
  std::vector<Tensor> attentions;       // per block (N, H, T, T)

  void set_logits(Tensor t) { logits_ = std::move(t); }
};

class PatchTransformer final : public Classifier {
 public:
  PatchTransformer(const std::string& model_id, PatchTransformerConfig config)
      : Classifier(ModelInfo{model_id, config.num_classes, config.input_shape,
                             {}, ModelKind::kPatchTransformer}),
        cfg_(std::move(config)) {
    const Shape& in = cfg_.input_shape;
    Require(in.size() == 3 && in[1] % cfg_.patch == 0 && in[2] % cfg_.patch == 0,
            ErrorCode::kInvalidArgument,
            "patch transformer: image size must be a multiple of the patch size");
    Require(cfg_.embed % cfg_.heads == 0, ErrorCode::kInvalidArgument,
            "patch transformer: embed must divide into heads");
    rows_ = in[1] / cfg_.patch;
    cols_ = in[2] / cfg_.patch;
    tokens_ = rows_ * cols_ + 1;
    patch_dim_ = in[0] * cfg_.patch * cfg_.patch;
    const std::size_t d = cfg_.embed, m = cfg_.mlp;

    params_.push_back({"patch.weight", Tensor({d, patch_dim_})});
    params_.push_back({"patch.bias", Tensor({d})});
    params_.push_back({"cls", Tensor({d})});
    params_.push_back({"pos", Tensor({tokens_, d})});
    for (std::size_t b = 0; b < cfg_.depth; ++b) {
      const std::string p = "block" + std::to_string(b) + ".";
      params_.push_back({p + "ln1.gamma", Tensor({d}, 1.0)});
      params_.push_back({p + "ln1.beta", Tensor({d})});
      params_.push_back({p + "qkv.weight", Tensor({3 * d, d})});
      params_.push_back({p + "qkv.bias", Tensor({3 * d})});
      params_.push_back({p + "out.weight", Tensor({d, d})});
      params_.push_back({p + "out.bias", Tensor({d})});
      params_.push_back({p + "ln2.gamma", Tensor({d}, 1.0)});
      params_.push_back({p + "ln2.beta", Tensor({d})});
      params_.push_back({p + "mlp1.weight", Tensor({m, d})});
      params_.push_back({p + "mlp1.bias", Tensor({m})});
      params_.push_back({p + "mlp2.weight", Tensor({d, m})});
      params_.push_back({p + "mlp2.bias", Tensor({d})});
    }
    params_.push_back({"lnf.gamma", Tensor({d}, 1.0)});
    params_.push_back({"lnf.beta", Tensor({d})});
    params_.push_back({"head.weight", Tensor({cfg_.num_classes, d})});
    params_.push_back({"head.bias", Tensor({cfg_.num_classes})});

    for (std::size_t b = 0; b < cfg_.depth; ++b) {
      info_.layer_names.push_back("block" + std::to_string(b));
    }
    info_.layer_names.push_back("logits");
  }

  void Init(std::uint64_t seed) {
    Rng rng(seed);
    auto fill = [&rng](Tensor& t, double scale) {
      for (double& v : t.storage()) v = rng.Normal() * scale;
    };
    const double d = static_cast<double>(cfg_.embed);
    fill(params_[kPatchW].value, 1.0 / std::sqrt(static_cast<double>(patch_dim_)));
    fill(params_[kCls].value, 0.02);
    fill(params_[kPos].value, 0.02);
    for (std::size_t b = 0; b < cfg_.depth; ++b) {
      fill(Block(b, kQkvW), 1.0 / std::sqrt(d));
      fill(Block(b, kOutW), 0.5 / std::sqrt(d));
      fill(Block(b, kMlp1W), 1.0 / std::sqrt(d));
      fill(Block(b, kMlp2W), 0.5 / std::sqrt(static_cast<double>(cfg_.mlp)));
    }
    fill(Tail(kHeadW), 1.0 / std::sqrt(d));
  }

  std::unique_ptr<ForwardTrace> Trace(const Tensor& batch,
                                      const TraceOptions& options) const override {
    CheckBatch(batch);
    const std::size_t n = batch.dim(0), d = cfg_.embed, heads = cfg_.heads;
    auto trace = std::make_unique<TransformerTrace>();
    trace->images.resize(n);
    Tensor logits({n, cfg_.num_classes});
    std::vector<Tensor> block_out(cfg_.depth, Tensor({n, tokens_, d}));
    trace->attentions.assign(cfg_.depth, Tensor({n, heads, tokens_, tokens_}));

    if (options.activation_nudge) {
      const auto& names = info_.layer_names;
      Require(std::find(names.begin(), names.end(),
                        options.activation_nudge->layer) != names.end(),
              ErrorCode::kUnknownLayer,
              "unknown layer '" + options.activation_nudge->layer + "'");
    }

    for (std::size_t i = 0; i < n; ++i) {
      ImageCache& ic = trace->images[i];
      ic.patches = Patchify(batch.Slice(i));
      Mat z(tokens_, d);
      z.row(0) = AsVec(params_[kCls].value).transpose();
      z.bottomRows(tokens_ - 1) =
          ic.patches * AsMat(params_[kPatchW].value, d, patch_dim_).transpose();
      z.bottomRows(tokens_ - 1).rowwise() += AsVec(params_[kPatchB].value).transpose();
      z += AsMat(params_[kPos].value, tokens_, d);

      ic.blocks.resize(cfg_.depth);
      for (std::size_t b = 0; b < cfg_.depth; ++b) {
        z = BlockForward(b, z, ic.blocks[b], options, i);
        const std::string name = "block" + std::to_string(b);
        if (options.activation_nudge && options.activation_nudge->layer == name) {
          const std::size_t per = tokens_ * d;
          const std::size_t idx = options.activation_nudge->index;
          Require(idx < n * per, ErrorCode::kInvalidArgument,
                  "activation nudge out of range");
          if (idx / per == i) {
            z(static_cast<Eigen::Index>((idx % per) / d),
              static_cast<Eigen::Index>(idx % d)) += options.activation_nudge->delta;
          }
        }
        ic.blocks[b].output = z;
        MapMat(block_out[b].data() + i * tokens_ * d, tokens_, d) = z;
        for (std::size_t h = 0; h < heads; ++h) {
          MapMat(trace->attentions[b].data() + (i * heads + h) * tokens_ * tokens_,
                 tokens_, tokens_) = ic.blocks[b].attn[h];
        }
      }
      ic.final_tokens =
          LayerNormForward(z, Tail(kLnfG), Tail(kLnfB), ic.lnf);
      Vec out = AsMat(Tail(kHeadW), cfg_.num_classes, d) *
                    ic.final_tokens.row(0).transpose() +
                AsVec(Tail(kHeadB));
      if (options.activation_nudge && options.activation_nudge->layer == "logits") {
        const std::size_t idx = options.activation_nudge->index;
        if (idx / cfg_.num_classes == i) {
          out(static_cast<Eigen::Index>(idx % cfg_.num_classes)) +=
              options.activation_nudge->delta;
        }
      }
      for (std::size_t c = 0; c < cfg_.num_classes; ++c) {
        logits.at(i, c) = out(static_cast<Eigen::Index>(c));
      }
    }
    for (std::size_t b = 0; b < cfg_.depth; ++b) {
      trace->named["block" + std::to_string(b)] = std::move(block_out[b]);
    }
    trace->named["logits"] = logits;
    trace->set_logits(std::move(logits));
    return trace;
  }

  BackwardResult Backward(const ForwardTrace& base, const Tensor& cotangent,
                          const BackwardRequest& request) const override {
    const auto& trace = dynamic_cast<const TransformerTrace&>(base);
    Require(cotangent.shape() == trace.logits().shape(), ErrorCode::kShapeMismatch,
            "logit cotangent " + ShapeString(cotangent.shape()) +
                " does not match logits " + ShapeString(trace.logits().shape()));
    Require(!request.bias_terms, ErrorCode::kUnsupported,
            "patch transformer does not record bias-carrying spatial stages");
    for (const auto& name : request.layers) {
      Require(std::find(info_.layer_names.begin(), info_.layer_names.end(), name) !=
                  info_.layer_names.end(),
              ErrorCode::kUnknownLayer, "unknown layer '" + name + "'");
    }
    if (request.param_grads) {
      Require(request.param_grads->size() == params_.size(), ErrorCode::kInternal,
              "param gradient slot count mismatch");
    }

    const std::size_t n = trace.images.size(), d = cfg_.embed, heads = cfg_.heads;
    auto wants = [&](const std::string& name) {
      return std::find(request.layers.begin(), request.layers.end(), name) !=
             request.layers.end();
    };
    BackwardResult result;
    if (request.input) result.input = Tensor({n, info_.input_shape[0],
                                              info_.input_shape[1],
                                              info_.input_shape[2]});
    for (const auto& name : request.layers) {
      result.layers[name] = Tensor(trace.Activation(name).shape());
    }
    if (request.attentions) {
      result.attentions.assign(cfg_.depth, Tensor({n, heads, tokens_, tokens_}));
    }
    std::vector<Tensor>* pg = request.param_grads;

    for (std::size_t i = 0; i < n; ++i) {
      const ImageCache& ic = trace.images[i];
      Vec dlogits(cfg_.num_classes);
      for (std::size_t c = 0; c < cfg_.num_classes; ++c) {
        dlogits(static_cast<Eigen::Index>(c)) = cotangent.at(i, c);
      }
      if (wants("logits")) {
        for (std::size_t c = 0; c < cfg_.num_classes; ++c) {
          result.layers["logits"].at(i, c) = cotangent.at(i, c);
        }
      }
      const auto head_w = AsMat(Tail(kHeadW), cfg_.num_classes, d);
      Mat dfinal = Mat::Zero(tokens_, d);
      dfinal.row(0) = (head_w.transpose() * dlogits).transpose();
      if (pg) {
        AccumulateInto(TailGrad(*pg, kHeadW),
                       Mat(dlogits * ic.final_tokens.row(0)));
        AccumulateInto(TailGrad(*pg, kHeadB), dlogits);
      }
      Mat dz = LayerNormBackward(dfinal, Tail(kLnfG), ic.lnf,
                                 pg ? &TailGrad(*pg, kLnfG) : nullptr,
                                 pg ? &TailGrad(*pg, kLnfB) : nullptr);
      for (std::size_t b = cfg_.depth; b-- > 0;) {
        const std::string name = "block" + std::to_string(b);
        if (wants(name)) {
          MapMat(result.layers[name].data() + i * tokens_ * d, tokens_, d) = dz;
        }
        std::vector<Mat> dattn;
        dz = BlockBackward(b, dz, ic.blocks[b], pg, dattn);
        if (request.attentions) {
          for (std::size_t h = 0; h < heads; ++h) {
            MapMat(result.attentions[b].data() + (i * heads + h) * tokens_ * tokens_,
                   tokens_, tokens_) = dattn[h];
          }
        }
      }
      // Embedding.
      if (pg) {
        AccumulateInto((*pg)[kPos], dz);
        AccumulateInto((*pg)[kCls], Vec(dz.row(0).transpose()));
      }
      const Mat de = dz.bottomRows(tokens_ - 1);
      if (pg) {
        AccumulateInto((*pg)[kPatchW], Mat(de.transpose() * ic.patches));
        AccumulateInto((*pg)[kPatchB], Vec(de.colwise().sum().transpose()));
      }
      if (request.input) {
        const Mat dpatches = de * AsMat(params_[kPatchW].value, d, patch_dim_);
        Tensor dimg = Unpatchify(dpatches);
        const std::size_t hw = info_.input_shape[1] * info_.input_shape[2];
        for (std::size_t c = 0; c < info_.input_shape[0]; ++c) {
          for (std::size_t k = 0; k < hw; ++k) dimg[c * hw + k] /= cfg_.stddev[c];
        }
        result.input.SetSlice(i, dimg);
      }
    }
    return result;
  }

  bool records_biases() const override { return false; }

  std::vector<nn::Param*> MutableParams() override {
    std::vector<nn::Param*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

  std::vector<const nn::Param*> Params() const override {
    std::vector<const nn::Param*> out;
    for (const auto& p : params_) out.push_back(&p);
    return out;
  }

  nlohmann::json Architecture() const override { return cfg_.ToJson(); }

  std::optional<std::pair<std::size_t, std::size_t>> token_grid() const override {
    return std::make_pair(rows_, cols_);
  }

 private:
  Tensor& Block(std::size_t b, BlockSlot s) {
    return params_[kGlobalCount + b * kBlockCount + s].value;
  }
  const Tensor& Block(std::size_t b, BlockSlot s) const {
    return params_[kGlobalCount + b * kBlockCount + s].value;
  }
  Tensor& BlockGrad(std::vector<Tensor>& g, std::size_t b, BlockSlot s) const {
    return g[kGlobalCount + b * kBlockCount + s];
  }
  Tensor& Tail(TailSlot s) {
    return params_[kGlobalCount + cfg_.depth * kBlockCount + s].value;
  }
  const Tensor& Tail(TailSlot s) const {
    return params_[kGlobalCount + cfg_.depth * kBlockCount + s].value;
  }
  Tensor& TailGrad(std::vector<Tensor>& g, TailSlot s) const {
    return g[kGlobalCount + cfg_.depth * kBlockCount + s];
  }

  // Normalized image (C, H, W) -> (P, C*ps*ps), patches in row-major order.
  Mat Patchify(const Tensor& image) const {
    const std::size_t ch = info_.input_shape[0], w = info_.input_shape[2];
    const std::size_t hw = info_.input_shape[1] * w, ps = cfg_.patch;
    Mat out(rows_ * cols_, patch_dim_);
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t c = 0; c < cols_; ++c) {
        for (std::size_t k = 0; k < ch; ++k) {
          for (std::size_t dy = 0; dy < ps; ++dy) {
            for (std::size_t dx = 0; dx < ps; ++dx) {
              const double v = image[k * hw + (r * ps + dy) * w + c * ps + dx];
              out(static_cast<Eigen::Index>(r * cols_ + c),
                  static_cast<Eigen::Index>((k * ps + dy) * ps + dx)) =
                  (v - cfg_.mean[k]) / cfg_.stddev[k];
            }
          }
        }
      }
    }
    return out;
  }

  Tensor Unpatchify(const Mat& m) const {
    const std::size_t ch = info_.input_shape[0], w = info_.input_shape[2];
    const std::size_t hw = info_.input_shape[1] * w, ps = cfg_.patch;
    Tensor out({ch, info_.input_shape[1], w});
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t c = 0; c < cols_; ++c) {
        for (std::size_t k = 0; k < ch; ++k) {
          for (std::size_t dy = 0; dy < ps; ++dy) {
            for (std::size_t dx = 0; dx < ps; ++dx) {
              out[k * hw + (r * ps + dy) * w + c * ps + dx] =
                  m(static_cast<Eigen::Index>(r * cols_ + c),
                    static_cast<Eigen::Index>((k * ps + dy) * ps + dx));
            }
          }
        }
      }
    }
    return out;
  }

  Mat BlockForward(std::size_t b, const Mat& z, BlockCache& bc,
                   const TraceOptions& options, std::size_t image) const {
    const std::size_t d = cfg_.embed, heads = cfg_.heads, dh = d / heads;
    const auto t = static_cast<Eigen::Index>(tokens_);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    bc.input = z;
    bc.u1 = LayerNormForward(z, Block(b, kLn1G), Block(b, kLn1B), bc.ln1);
    bc.qkv = bc.u1 * AsMat(Block(b, kQkvW), 3 * d, d).transpose();
    bc.qkv.rowwise() += AsVec(Block(b, kQkvB)).transpose();
    bc.softmax.resize(heads);
    bc.attn.resize(heads);
    bc.concat.resize(t, static_cast<Eigen::Index>(d));
    for (std::size_t h = 0; h < heads; ++h) {
      const auto off = static_cast<Eigen::Index>(h * dh);
      const auto w = static_cast<Eigen::Index>(dh);
      const auto dd = static_cast<Eigen::Index>(d);
      const Mat q = bc.qkv.middleCols(off, w);
      const Mat k = bc.qkv.middleCols(dd + off, w);
      const Mat v = bc.qkv.middleCols(2 * dd + off, w);
      Mat s = (q * k.transpose()) * scale;
      for (Eigen::Index r = 0; r < t; ++r) {
        const double mx = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - mx).exp();
        s.row(r) /= s.row(r).sum();
      }
      bc.softmax[h] = s;
      if (options.attention_nudge && options.attention_nudge->block == b &&
          options.attention_nudge->head == h && image == 0) {
        const auto& nudge = *options.attention_nudge;
        Require(nudge.row < tokens_ && nudge.col < tokens_,
                ErrorCode::kInvalidArgument, "attention nudge out of range");
        s(static_cast<Eigen::Index>(nudge.row),
          static_cast<Eigen::Index>(nudge.col)) += nudge.delta;
      }
      bc.attn[h] = s;
      bc.concat.middleCols(off, w) = s * v;
    }
    bc.mid = z + bc.concat * AsMat(Block(b, kOutW), d, d).transpose();
    bc.mid.rowwise() += AsVec(Block(b, kOutB)).transpose();
    bc.u2 = LayerNormForward(bc.mid, Block(b, kLn2G), Block(b, kLn2B), bc.ln2);
    bc.hidden_pre = bc.u2 * AsMat(Block(b, kMlp1W), cfg_.mlp, d).transpose();
    bc.hidden_pre.rowwise() += AsVec(Block(b, kMlp1B)).transpose();
    bc.hidden = bc.hidden_pre.unaryExpr(&Gelu);
    Mat out = bc.mid + bc.hidden * AsMat(Block(b, kMlp2W), d, cfg_.mlp).transpose();
    out.rowwise() += AsVec(Block(b, kMlp2B)).transpose();
    return out;
  }

  Mat BlockBackward(std::size_t b, const Mat& dout, const BlockCache& bc,
                    std::vector<Tensor>* pg, std::vector<Mat>& dattn) const {
    const std::size_t d = cfg_.embed, heads = cfg_.heads, dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto dd = static_cast<Eigen::Index>(d);

    // MLP branch.
    Mat dmid = dout;
    const Mat dhidden = dout * AsMat(Block(b, kMlp2W), d, cfg_.mlp);
    const Mat dpre = dhidden.array() * bc.hidden_pre.unaryExpr(&GeluGrad).array();
    const Mat du2 = dpre * AsMat(Block(b, kMlp1W), cfg_.mlp, d);
    if (pg) {
      AccumulateInto(BlockGrad(*pg, b, kMlp2W), Mat(dout.transpose() * bc.hidden));
      AccumulateInto(BlockGrad(*pg, b, kMlp2B), Vec(dout.colwise().sum().transpose()));
      AccumulateInto(BlockGrad(*pg, b, kMlp1W), Mat(dpre.transpose() * bc.u2));
      AccumulateInto(BlockGrad(*pg, b, kMlp1B), Vec(dpre.colwise().sum().transpose()));
    }
    dmid += LayerNormBackward(du2, Block(b, kLn2G), bc.ln2,
                              pg ? &BlockGrad(*pg, b, kLn2G) : nullptr,
                              pg ? &BlockGrad(*pg, b, kLn2B) : nullptr);

    // Attention branch.
    Mat dz = dmid;
    const Mat dconcat = dmid * AsMat(Block(b, kOutW), d, d);
    if (pg) {
      AccumulateInto(BlockGrad(*pg, b, kOutW), Mat(dmid.transpose() * bc.concat));
      AccumulateInto(BlockGrad(*pg, b, kOutB), Vec(dmid.colwise().sum().transpose()));
    }
    Mat dqkv(bc.qkv.rows(), bc.qkv.cols());
    dattn.resize(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const auto off = static_cast<Eigen::Index>(h * dh);
      const auto w = static_cast<Eigen::Index>(dh);
      const Mat q = bc.qkv.middleCols(off, w);
      const Mat k = bc.qkv.middleCols(dd + off, w);
      const Mat v = bc.qkv.middleCols(2 * dd + off, w);
      const Mat dhead = dconcat.middleCols(off, w);
      dattn[h] = dhead * v.transpose();
      const Mat dv = bc.attn[h].transpose() * dhead;
      const Mat& a = bc.softmax[h];
      Mat ds = a.array() *
               (dattn[h].colwise() - (dattn[h].array() * a.array()).rowwise().sum().matrix()).array();
      ds *= scale;
      dqkv.middleCols(off, w) = ds * k;
      dqkv.middleCols(dd + off, w) = ds.transpose() * q;
      dqkv.middleCols(2 * dd + off, w) = dv;
    }
    const Mat du1 = dqkv * AsMat(Block(b, kQkvW), 3 * d, d);
    if (pg) {
      AccumulateInto(BlockGrad(*pg, b, kQkvW), Mat(dqkv.transpose() * bc.u1));
      AccumulateInto(BlockGrad(*pg, b, kQkvB), Vec(dqkv.colwise().sum().transpose()));
    }
    dz += LayerNormBackward(du1, Block(b, kLn1G), bc.ln1,
                            pg ? &BlockGrad(*pg, b, kLn1G) : nullptr,
                            pg ? &BlockGrad(*pg, b, kLn1B) : nullptr);
    return dz;
  }

  PatchTransformerConfig cfg_;
  std::size_t rows_ = 0, cols_ = 0, tokens_ = 0, patch_dim_ = 0;
  std::vector<nn::Param> params_;
};

}  // namespace

std::unique_ptr<Classifier> MakePatchTransformer(const std::string& model_id,
                                                 const PatchTransformerConfig& config,
                                                 std::uint64_t seed) {
  auto model = std::make_unique<PatchTransformer>(model_id, config);
  model->Init(seed);
  return model;
}

}  // namespace ccbp
