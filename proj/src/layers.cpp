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

#include "ccbp/layers.hpp"

#include <algorithm>
#include <cmath>

#include "ccbp/error.hpp"

namespace ccbp::nn {
namespace {

void RequireRank(const Tensor& x, std::size_t rank, const std::string& who) {
  Require(x.rank() == rank, ErrorCode::kShapeMismatch,
          who + ": expected rank " + std::to_string(rank) + " input, got " +
              ShapeString(x.shape()));
}

void HeFill(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : t.storage()) v = rng.Normal() * scale;
}

}  // namespace

// ---------------------------------------------------------------- Normalize

Normalize::Normalize(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), stddev_(std::move(stddev)) {
  Require(mean_.size() == stddev_.size(), ErrorCode::kInvalidArgument,
          "normalize: mean/std channel count mismatch");
  for (double s : stddev_) {
    Require(s > 0.0, ErrorCode::kInvalidArgument, "normalize: std must be > 0");
  }
}

Tensor Normalize::Forward(const Tensor& x, Cache&, bool) const {
  RequireRank(x, 4, "normalize");
  Require(x.dim(1) == mean_.size(), ErrorCode::kShapeMismatch,
          "normalize: channel mismatch");
  Tensor y = x;
  const std::size_t hw = x.dim(2) * x.dim(3);
  for (std::size_t n = 0; n < x.dim(0); ++n) {
    for (std::size_t c = 0; c < x.dim(1); ++c) {
      double* p = y.data() + (n * x.dim(1) + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) p[i] = (p[i] - mean_[c]) / stddev_[c];
    }
  }
  return y;
}

Tensor Normalize::Backward(const Tensor& dy, const Cache&,
                           std::span<Tensor>) const {
  Tensor dx = dy;
  const std::size_t hw = dy.dim(2) * dy.dim(3);
  for (std::size_t n = 0; n < dy.dim(0); ++n) {
    for (std::size_t c = 0; c < dy.dim(1); ++c) {
      double* p = dx.data() + (n * dy.dim(1) + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) p[i] /= stddev_[c];
    }
  }
  return dx;
}

std::optional<std::vector<double>> Normalize::EffectiveBias() const {
  std::vector<double> b(mean_.size());
  for (std::size_t c = 0; c < b.size(); ++c) b[c] = -mean_[c] / stddev_[c];
  return b;
}

nlohmann::json Normalize::Config() const {
  return {{"type", type()}, {"mean", mean_}, {"std", stddev_}};
}

// ------------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels,
               std::size_t kernel, bool bias)
    : in_(in_channels), out_(out_channels), k_(kernel), has_bias_(bias) {
  Require(kernel % 2 == 1, ErrorCode::kInvalidArgument,
          "conv2d: kernel must be odd");
  params_.push_back({"weight", Tensor({out_, in_, k_, k_})});
  if (has_bias_) params_.push_back({"bias", Tensor({out_})});
}

void Conv2d::InitHe(Rng& rng) {
  HeFill(params_[0].value, in_ * k_ * k_, rng);
  if (has_bias_) params_[1].value.Fill(0.0);
}

Shape Conv2d::OutputShape(const Shape& input) const {
  return {input.at(0), out_, input.at(2), input.at(3)};
}

Tensor Conv2d::Forward(const Tensor& x, Cache& cache, bool) const {
  RequireRank(x, 4, "conv2d");
  Require(x.dim(1) == in_, ErrorCode::kShapeMismatch,
          "conv2d: expected " + std::to_string(in_) + " input channels, got " +
              ShapeString(x.shape()));
  const std::size_t batch = x.dim(0), h = x.dim(2), w = x.dim(3);
  const long pad = static_cast<long>(k_ / 2);
  Tensor y({batch, out_, h, w});
  const Tensor& weight = params_[0].value;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t oc = 0; oc < out_; ++oc) {
      double* out = y.data() + (n * out_ + oc) * h * w;
      if (has_bias_) std::fill(out, out + h * w, params_[1].value[oc]);
      for (std::size_t ic = 0; ic < in_; ++ic) {
        const double* in = x.data() + (n * in_ + ic) * h * w;
        for (std::size_t ky = 0; ky < k_; ++ky) {
          const long dy = static_cast<long>(ky) - pad;
          const long y0 = std::max(0L, -dy);
          const long y1 = std::min(static_cast<long>(h), static_cast<long>(h) - dy);
          for (std::size_t kx = 0; kx < k_; ++kx) {
            const long dx = static_cast<long>(kx) - pad;
            const long x0 = std::max(0L, -dx);
            const long x1 = std::min(static_cast<long>(w), static_cast<long>(w) - dx);
            const double wv = weight[((oc * in_ + ic) * k_ + ky) * k_ + kx];
            for (long yy = y0; yy < y1; ++yy) {
              double* orow = out + yy * static_cast<long>(w);
              const double* irow = in + (yy + dy) * static_cast<long>(w) + dx;
              for (long xx = x0; xx < x1; ++xx) orow[xx] += wv * irow[xx];
            }
          }
        }
      }
    }
  }
  cache.input = x;
  return y;
}

Tensor Conv2d::Backward(const Tensor& grad, const Cache& cache,
                        std::span<Tensor> param_grads) const {
  const Tensor& x = cache.input;
  const std::size_t batch = x.dim(0), h = x.dim(2), w = x.dim(3);
  const long pad = static_cast<long>(k_ / 2);
  const Tensor& weight = params_[0].value;
  const bool want_params = !param_grads.empty();
  Tensor dx(x.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t oc = 0; oc < out_; ++oc) {
      const double* g = grad.data() + (n * out_ + oc) * h * w;
      if (want_params && has_bias_) {
        double s = 0.0;
        for (std::size_t i = 0; i < h * w; ++i) s += g[i];
        param_grads[1][oc] += s;
      }
      for (std::size_t ic = 0; ic < in_; ++ic) {
        const double* in = x.data() + (n * in_ + ic) * h * w;
        double* din = dx.data() + (n * in_ + ic) * h * w;
        for (std::size_t ky = 0; ky < k_; ++ky) {
          const long dy = static_cast<long>(ky) - pad;
          const long y0 = std::max(0L, -dy);
          const long y1 = std::min(static_cast<long>(h), static_cast<long>(h) - dy);
          for (std::size_t kx = 0; kx < k_; ++kx) {
            const long dxo = static_cast<long>(kx) - pad;
            const long x0 = std::max(0L, -dxo);
            const long x1 = std::min(static_cast<long>(w), static_cast<long>(w) - dxo);
            const std::size_t widx = ((oc * in_ + ic) * k_ + ky) * k_ + kx;
            const double wv = weight[widx];
            double wg = 0.0;
            for (long yy = y0; yy < y1; ++yy) {
              const double* grow = g + yy * static_cast<long>(w);
              const long off = (yy + dy) * static_cast<long>(w) + dxo;
              double* drow = din + off;
              const double* irow = in + off;
              for (long xx = x0; xx < x1; ++xx) {
                drow[xx] += wv * grow[xx];
                wg += grow[xx] * irow[xx];
              }
            }
            if (want_params) param_grads[0][widx] += wg;
          }
        }
      }
    }
  }
  return dx;
}

std::optional<std::vector<double>> Conv2d::EffectiveBias() const {
  if (!has_bias_) return std::nullopt;
  return params_[1].value.storage();
}

nlohmann::json Conv2d::Config() const {
  return {{"type", type()}, {"in", in_}, {"out", out_}, {"kernel", k_},
          {"bias", has_bias_}};
}

// -------------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(std::size_t channels, double eps, double momentum)
    : channels_(channels), eps_(eps), momentum_(momentum) {
  params_.push_back({"gamma", Tensor({channels}, 1.0)});
  params_.push_back({"beta", Tensor({channels}, 0.0)});
  params_.push_back({"running_mean", Tensor({channels}, 0.0), false});
  params_.push_back({"running_var", Tensor({channels}, 1.0), false});
}

// Training mode normalizes with batch statistics; cache.aux holds the
// normalized activations and cache.aux2 the per-channel (mean, inv_std).
Tensor BatchNorm2d::Forward(const Tensor& x, Cache& cache, bool training) const {
  RequireRank(x, 4, "batchnorm2d");
  Require(x.dim(1) == channels_, ErrorCode::kShapeMismatch,
          "batchnorm2d: channel mismatch");
  const std::size_t batch = x.dim(0), hw = x.dim(2) * x.dim(3);
  const Tensor& gamma = params_[0].value;
  const Tensor& beta = params_[1].value;
  Tensor stats({2, channels_});
  for (std::size_t c = 0; c < channels_; ++c) {
    double mean, var;
    if (training) {
      double s = 0.0, ss = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const double* p = x.data() + (n * channels_ + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      const double count = static_cast<double>(batch * hw);
      mean = s / count;
      for (std::size_t n = 0; n < batch; ++n) {
        const double* p = x.data() + (n * channels_ + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - mean) * (p[i] - mean);
      }
      var = ss / count;
    } else {
      mean = params_[2].value[c];
      var = params_[3].value[c];
    }
    stats.at(0, c) = mean;
    stats.at(1, c) = 1.0 / std::sqrt(var + eps_);
  }
  Tensor xhat(x.shape());
  Tensor y(x.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels_; ++c) {
      const std::size_t off = (n * channels_ + c) * hw;
      const double mean = stats.at(0, c), inv = stats.at(1, c);
      for (std::size_t i = 0; i < hw; ++i) {
        const double v = (x[off + i] - mean) * inv;
        xhat[off + i] = v;
        y[off + i] = gamma[c] * v + beta[c];
      }
    }
  }
  cache.aux = std::move(xhat);
  cache.aux2 = std::move(stats);
  cache.indices = {training ? std::size_t{1} : std::size_t{0}, batch * hw};
  return y;
}

Tensor BatchNorm2d::Backward(const Tensor& dy, const Cache& cache,
                             std::span<Tensor> param_grads) const {
  const Tensor& xhat = cache.aux;
  const Tensor& stats = cache.aux2;
  const bool training = cache.indices.at(0) == 1;
  const std::size_t batch = dy.dim(0), hw = dy.dim(2) * dy.dim(3);
  const double count = static_cast<double>(cache.indices.at(1));
  const Tensor& gamma = params_[0].value;
  Tensor dx(dy.shape());
  for (std::size_t c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t off = (n * channels_ + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        sum_dy += dy[off + i];
        sum_dy_xhat += dy[off + i] * xhat[off + i];
      }
    }
    if (!param_grads.empty()) {
      param_grads[0][c] += sum_dy_xhat;
      param_grads[1][c] += sum_dy;
    }
    const double scale = gamma[c] * stats.at(1, c);
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t off = (n * channels_ + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        if (training) {
          dx[off + i] = scale * (dy[off + i] - sum_dy / count -
                                 xhat[off + i] * sum_dy_xhat / count);
        } else {
          dx[off + i] = scale * dy[off + i];
        }
      }
    }
  }
  return dx;
}

std::optional<std::vector<double>> BatchNorm2d::EffectiveBias() const {
  std::vector<double> b(channels_);
  for (std::size_t c = 0; c < channels_; ++c) {
    const double inv = 1.0 / std::sqrt(params_[3].value[c] + eps_);
    b[c] = params_[1].value[c] - params_[0].value[c] * params_[2].value[c] * inv;
  }
  return b;
}

void BatchNorm2d::UpdateStatistics(const Cache& cache) {
  const Tensor& stats = cache.aux2;
  const double count = static_cast<double>(cache.indices.at(1));
  for (std::size_t c = 0; c < channels_; ++c) {
    const double inv = stats.at(1, c);
    const double biased_var = 1.0 / (inv * inv) - eps_;
    const double var = count > 1 ? biased_var * count / (count - 1) : biased_var;
    double& rm = params_[2].value[c];
    double& rv = params_[3].value[c];
    rm = (1.0 - momentum_) * rm + momentum_ * stats.at(0, c);
    rv = (1.0 - momentum_) * rv + momentum_ * var;
  }
}

nlohmann::json BatchNorm2d::Config() const {
  return {{"type", type()}, {"channels", channels_}, {"eps", eps_},
          {"momentum", momentum_}};
}

// --------------------------------------------------------------------- ReLU

Tensor ReLU::Forward(const Tensor& x, Cache& cache, bool) const {
  Tensor y = x;
  for (double& v : y.storage()) v = v > 0.0 ? v : 0.0;
  cache.input = x;
  return y;
}

Tensor ReLU::Backward(const Tensor& dy, const Cache& cache,
                      std::span<Tensor>) const {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(cache.input[i] > 0.0)) dx[i] = 0.0;
  }
  return dx;
}

// ---------------------------------------------------------------- MaxPool2d

Shape MaxPool2d::OutputShape(const Shape& input) const {
  return {input.at(0), input.at(1), input.at(2) / 2, input.at(3) / 2};
}

Tensor MaxPool2d::Forward(const Tensor& x, Cache& cache, bool) const {
  RequireRank(x, 4, "maxpool2d");
  const std::size_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor y({batch, ch, oh, ow});
  cache.indices.assign(y.size(), 0);
  for (std::size_t nc = 0; nc < batch * ch; ++nc) {
    const double* in = x.data() + nc * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (2 * oy + dy) * w + 2 * ox + dx;
            if (in[idx] > in[best]) best = idx;
          }
        }
        const std::size_t o = nc * oh * ow + oy * ow + ox;
        y[o] = in[best];
        cache.indices[o] = nc * h * w + best;
      }
    }
  }
  cache.input = Tensor(x.shape());  // only the shape is needed
  return y;
}

Tensor MaxPool2d::Backward(const Tensor& dy, const Cache& cache,
                           std::span<Tensor>) const {
  Tensor dx(cache.input.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[cache.indices[i]] += dy[i];
  return dx;
}

// ------------------------------------------------------------ GlobalAvgPool

Shape GlobalAvgPool::OutputShape(const Shape& input) const {
  return {input.at(0), input.at(1)};
}

Tensor GlobalAvgPool::Forward(const Tensor& x, Cache& cache, bool) const {
  RequireRank(x, 4, "global_avg_pool");
  const std::size_t batch = x.dim(0), ch = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y({batch, ch});
  for (std::size_t nc = 0; nc < batch * ch; ++nc) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += x[nc * hw + i];
    y[nc] = s / static_cast<double>(hw);
  }
  cache.input = Tensor(x.shape());
  return y;
}

Tensor GlobalAvgPool::Backward(const Tensor& dy, const Cache& cache,
                               std::span<Tensor>) const {
  const Shape& shape = cache.input.shape();
  const std::size_t hw = shape[2] * shape[3];
  Tensor dx(shape);
  for (std::size_t nc = 0; nc < dy.size(); ++nc) {
    const double g = dy[nc] / static_cast<double>(hw);
    for (std::size_t i = 0; i < hw; ++i) dx[nc * hw + i] = g;
  }
  return dx;
}

// ------------------------------------------------------------------ Flatten

Shape Flatten::OutputShape(const Shape& input) const {
  return {input.at(0), ShapeSize(input) / input.at(0)};
}

Tensor Flatten::Forward(const Tensor& x, Cache& cache, bool) const {
  cache.input = Tensor(x.shape());
  return x.Reshaped(OutputShape(x.shape()));
}

Tensor Flatten::Backward(const Tensor& dy, const Cache& cache,
                         std::span<Tensor>) const {
  return dy.Reshaped(cache.input.shape());
}

// ------------------------------------------------------------------- Linear

Linear::Linear(std::size_t in_features, std::size_t out_features, bool bias)
    : in_(in_features), out_(out_features), has_bias_(bias) {
  params_.push_back({"weight", Tensor({out_, in_})});
  if (has_bias_) params_.push_back({"bias", Tensor({out_})});
}

void Linear::InitHe(Rng& rng) {
  HeFill(params_[0].value, in_, rng);
  if (has_bias_) params_[1].value.Fill(0.0);
}

Shape Linear::OutputShape(const Shape& input) const {
  return {input.at(0), out_};
}

Tensor Linear::Forward(const Tensor& x, Cache& cache, bool) const {
  RequireRank(x, 2, "linear");
  Require(x.dim(1) == in_, ErrorCode::kShapeMismatch,
          "linear: expected " + std::to_string(in_) + " features, got " +
              ShapeString(x.shape()));
  const std::size_t batch = x.dim(0);
  const Tensor& weight = params_[0].value;
  Tensor y({batch, out_});
  for (std::size_t n = 0; n < batch; ++n) {
    const double* xi = x.data() + n * in_;
    for (std::size_t o = 0; o < out_; ++o) {
      const double* wrow = weight.data() + o * in_;
      double s = has_bias_ ? params_[1].value[o] : 0.0;
      for (std::size_t i = 0; i < in_; ++i) s += wrow[i] * xi[i];
      y.at(n, o) = s;
    }
  }
  cache.input = x;
  return y;
}

Tensor Linear::Backward(const Tensor& dy, const Cache& cache,
                        std::span<Tensor> param_grads) const {
  const Tensor& x = cache.input;
  const std::size_t batch = x.dim(0);
  const Tensor& weight = params_[0].value;
  Tensor dx({batch, in_});
  for (std::size_t n = 0; n < batch; ++n) {
    double* dxi = dx.data() + n * in_;
    const double* xi = x.data() + n * in_;
    for (std::size_t o = 0; o < out_; ++o) {
      const double g = dy.at(n, o);
      if (g == 0.0) continue;
      const double* wrow = weight.data() + o * in_;
      for (std::size_t i = 0; i < in_; ++i) dxi[i] += g * wrow[i];
      if (!param_grads.empty()) {
        double* gw = param_grads[0].data() + o * in_;
        for (std::size_t i = 0; i < in_; ++i) gw[i] += g * xi[i];
        if (has_bias_) param_grads[1][o] += g;
      }
    }
  }
  return dx;
}

nlohmann::json Linear::Config() const {
  return {{"type", type()}, {"in", in_}, {"out", out_}, {"bias", has_bias_}};
}

// ----------------------------------------------------------------- Quantize

Tensor Quantize::Forward(const Tensor& x, Cache&, bool) const {
  Tensor y = x;
  for (double& v : y.storage()) v = std::round(v / step_) * step_;
  return y;
}

Tensor Quantize::Backward(const Tensor&, const Cache&, std::span<Tensor>) const {
  Fail(ErrorCode::kNotDifferentiable,
       "quantize layer has no gradient; the model is not differentiable");
}

nlohmann::json Quantize::Config() const {
  return {{"type", type()}, {"step", step_}};
}

// ---------------------------------------------------------------- factory

std::unique_ptr<Layer> LayerFromConfig(const nlohmann::json& c) {
  const std::string type = c.at("type").get<std::string>();
  if (type == "normalize") {
    return std::make_unique<Normalize>(c.at("mean").get<std::vector<double>>(),
                                       c.at("std").get<std::vector<double>>());
  }
  if (type == "conv2d") {
    return std::make_unique<Conv2d>(c.at("in"), c.at("out"), c.at("kernel"),
                                    c.value("bias", true));
  }
  if (type == "batchnorm2d") {
    return std::make_unique<BatchNorm2d>(c.at("channels"), c.value("eps", 1e-5),
                                         c.value("momentum", 0.1));
  }
  if (type == "relu") return std::make_unique<ReLU>();
  if (type == "maxpool2d") return std::make_unique<MaxPool2d>();
  if (type == "global_avg_pool") return std::make_unique<GlobalAvgPool>();
  if (type == "flatten") return std::make_unique<Flatten>();
  if (type == "linear") {
    return std::make_unique<Linear>(c.at("in"), c.at("out"),
                                    c.value("bias", true));
  }
  if (type == "quantize") return std::make_unique<Quantize>(c.at("step"));
  Fail(ErrorCode::kParse, "unknown layer type '" + type + "'");
}

}  // namespace ccbp::nn
