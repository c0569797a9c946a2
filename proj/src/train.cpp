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

#include "ccbp/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ccbp/error.hpp"
#include "ccbp/gradients.hpp"
#include "ccbp/rng.hpp"

namespace ccbp {

FitReport Fit(Classifier& model, const Dataset& data, const FitOptions& options) {
  Require(!data.empty(), ErrorCode::kInvalidArgument, "cannot fit on an empty dataset");
  Require(options.batch_size > 0, ErrorCode::kInvalidArgument, "batch size must be positive");
  auto params = model.MutableParams();
  std::vector<Tensor> m, v, grads;
  for (auto* p : params) {
    m.emplace_back(p->value.shape());
    v.emplace_back(p->value.shape());
    grads.emplace_back(p->value.shape());
  }
  Rng rng(options.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t steps_per_epoch = (data.size() + options.batch_size - 1) / options.batch_size;
  const double total_steps = static_cast<double>(steps_per_epoch * options.epochs);
  std::size_t step = 0;
  FitReport report;
  TraceOptions train;
  train.training = true;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    rng.Shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const std::size_t begin = b * options.batch_size;
      const std::size_t end = std::min(data.size(), begin + options.batch_size);
      const ImageBatch batch = data.Gather({order.begin() + begin, order.begin() + end});
      const std::size_t n = batch.size();
      auto trace = model.Trace(batch.pixels, train);
      const Tensor& logits = trace->logits();
      const std::size_t c = logits.dim(1);
      Tensor cot({n, c});
      for (std::size_t i = 0; i < n; ++i) {
        const auto p = Softmax(std::span<const double>(logits.data() + i * c, c));
        const std::size_t label = batch.labels[i];
        loss_sum += -std::log(std::max(p[label], 1e-300));
        if (std::max_element(p.begin(), p.end()) - p.begin() == static_cast<long>(label)) ++correct;
        for (std::size_t s = 0; s < c; ++s) {
          cot.at(i, s) = (p[s] - (s == label ? 1.0 : 0.0)) / static_cast<double>(n);
        }
      }
      for (Tensor& g : grads) g.Fill(0.0);
      BackwardRequest req;
      req.input = false;
      req.param_grads = &grads;
      model.Backward(*trace, cot, req);
      model.UpdateStatistics(*trace);

      ++step;
      double lr = options.learning_rate;
      if (options.cosine_schedule) {
        lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * (step - 1) / total_steps));
      }
      const double bc1 = 1.0 - std::pow(options.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(options.beta2, static_cast<double>(step));
      for (std::size_t k = 0; k < params.size(); ++k) {
        if (!params[k]->trainable) continue;
        double* w = params[k]->value.data();
        const double* g = grads[k].data();
        double* mk = m[k].data();
        double* vk = v[k].data();
        for (std::size_t i = 0; i < grads[k].size(); ++i) {
          mk[i] = options.beta1 * mk[i] + (1.0 - options.beta1) * g[i];
          vk[i] = options.beta2 * vk[i] + (1.0 - options.beta2) * g[i] * g[i];
          const double update = (mk[i] / bc1) / (std::sqrt(vk[i] / bc2) + options.adam_eps);
          w[i] -= lr * (update + options.weight_decay * w[i]);
        }
      }
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(data.size()));
    report.epoch_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(data.size()));
    if (options.on_epoch) {
      options.on_epoch(epoch, report.epoch_loss.back(), report.epoch_accuracy.back());
    }
  }
  return report;
}

double Accuracy(const Classifier& model, const Dataset& data, std::size_t batch_size) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < data.NumBatches(batch_size); ++b) {
    const ImageBatch batch = data.Batch(b, batch_size);
    const Tensor logits = model.Logits(batch.pixels);
    const std::size_t c = logits.dim(1);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double* row = logits.data() + i * c;
      if (static_cast<std::size_t>(std::max_element(row, row + c) - row) == batch.labels[i]) {
        ++correct;
      }
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace ccbp
