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

#include "ccbp/gradients.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "ccbp/error.hpp"
#include "test_util.hpp"

namespace ccbp {
namespace {

using testing::CentralDifference;
using testing::RandomImage;
using testing::RelClose;
using testing::SeedValue;

constexpr double kStep = 1e-4;
constexpr double kRelTol = 1e-3;

TEST(SoftmaxTest, SumsToOne) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> y(7);
    for (double& v : y) v = 10.0 * rng.Normal();
    const auto p = Softmax(y);
    double s = 0.0;
    for (double v : p) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(SoftmaxTest, LargeInputsDoNotOverflow) {
  const std::vector<double> y{1e6, 1e6, 1e6, 1e6};
  for (double v : Softmax(y)) EXPECT_DOUBLE_EQ(v, 0.25);
}

// dp_i/dy_j against central differences of the forward softmax.
TEST(SoftmaxJacobianTest, MatchesFiniteDifferences) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> y(6);
    for (double& v : y) v = 3.0 * rng.Normal();
    const Tensor jac = SoftmaxJacobian(y);
    for (std::size_t i = 0; i < y.size(); ++i) {
      for (std::size_t j = 0; j < y.size(); ++j) {
        const double fd = CentralDifference(
            [&](double h) {
              auto yy = y;
              yy[j] += h;
              return Softmax(yy)[i];
            },
            1e-5);
        EXPECT_NEAR(jac.at(i, j), fd, 1e-8);
      }
    }
  }
}

TEST(SoftmaxJacobianTest, VanishesForDominatingClass) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> y(10);
    for (double& v : y) v = rng.Normal();
    const std::size_t top = rng.Index(10);
    double runner_up = -1e300;
    for (std::size_t s = 0; s < y.size(); ++s) {
      if (s != top) runner_up = std::max(runner_up, y[s]);
    }
    y[top] = runner_up + 20.0 + 5.0 * rng.Uniform();
    const Tensor jac = SoftmaxJacobian(y);
    EXPECT_LE(jac.MaxAbs(), 1e-8);
  }
}

TEST(SeedCotangentTest, LogitSeedIsOneHot) {
  const std::vector<double> y{0.3, -1.0, 2.0};
  const auto c = SeedCotangent(y, {SeedMode::kLogit, 1});
  EXPECT_EQ(c, (std::vector<double>{0.0, 1.0, 0.0}));
}

TEST(SeedCotangentTest, RejectsTargetOutOfRange) {
  const std::vector<double> y{0.3, -1.0};
  EXPECT_THROW(SeedCotangent(y, {SeedMode::kLogit, 2}), Error);
}

TEST(ForwardTest, IdentityWeightsSelectPixels) {
  auto model = MakeLinearClassifier("identity", {1, 1, 2}, 2, false, 0);
  auto& w = model->MutableParams()[0]->value;
  w.Fill(0.0);
  w.at(0, 0) = 1.0;
  w.at(1, 1) = 1.0;
  const Tensor x({1, 1, 1, 2}, std::vector<double>{0.25, 0.75});
  const Tensor y = Forward(*model, x);
  EXPECT_DOUBLE_EQ(y.at(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(y.at(0, 1), 0.75);
}

TEST(ForwardTest, ZeroInputBiasFreeModelGivesZeroLogits) {
  auto model = MakeLinearClassifier("nobias", {3, 4, 4}, 3, false, 9);
  const Tensor y = Forward(*model, Tensor({2, 3, 4, 4}));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(ForwardTest, ShapeMismatchReportsDimensions) {
  auto model = testing::SmallCnn(1);
  try {
    Forward(*model, Tensor({1, 3, 9, 8}));
    FAIL() << "expected a shape error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
    EXPECT_NE(std::string(e.what()).find("(1, 3, 9, 8)"), std::string::npos);
  }
}

TEST(ForwardTest, DeterministicBitwise) {
  auto model = testing::SmallCnn(2);
  Rng rng(4);
  const Tensor x = AsBatch(RandomImage({3, 8, 8}, rng));
  const Tensor a = Forward(*model, x);
  const Tensor b = Forward(*model, x);
  EXPECT_EQ(a.storage(), b.storage());
  const Tensor ga = GradWrtInput(*model, x, {SeedMode::kSoftmax, 1});
  const Tensor gb = GradWrtInput(*model, x, {SeedMode::kSoftmax, 1});
  EXPECT_LE(MaxRelativeError(ga, gb), 1e-12);
}

// Golden logits recorded from the first verified run of this fixed-seed net.
TEST(ForwardTest, FixedSeedToyCnnMatchesGolden) {
  ToyCnnConfig cfg;
  cfg.input_shape = {3, 8, 8};
  cfg.channels = {4, 4, 4, 4};
  cfg.pool_after = {true, false, false, false};
  cfg.num_classes = 3;
  auto model = MakeToyCnn("golden", cfg, 1234);
  Tensor x({1, 3, 8, 8});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i % 17) / 16.0;
  const Tensor y = Forward(*model, x);
  const std::vector<double> golden = {-0.80050613508445478, -0.82648498012882299,
                                     -0.24900065825635009};
  ASSERT_EQ(y.size(), golden.size());
  for (std::size_t i = 0; i < golden.size(); ++i) EXPECT_NEAR(y[i], golden[i], 1e-12);
}

TEST(GradWrtInputTest, TwoClassSoftmaxClosedForm) {
  auto model = MakeLinearClassifier("lin2", {1, 2, 3}, 2, true, 21);
  Rng rng(8);
  const Tensor x = RandomImage({1, 2, 3}, rng);
  const Tensor logits = Forward(*model, AsBatch(x));
  const double p0 = Softmax(logits.values())[0];
  const Tensor& w = model->Params()[0]->value;
  const Tensor g = GradWrtInput(*model, x, {SeedMode::kSoftmax, 0});
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double expected = p0 * (1.0 - p0) * (w.at(0, i) - w.at(1, i));
    EXPECT_NEAR(g[i], expected, 1e-15);
  }
}

TEST(GradWrtInputTest, ZeroHeadGivesZeroGradient) {
  auto model = MakeLinearClassifier("zero-head", {1, 3, 3}, 3, true, 2);
  auto& w = model->MutableParams()[0]->value;
  for (std::size_t i = 0; i < 9; ++i) w.at(1, i) = 0.0;
  Rng rng(1);
  const Tensor g = GradWrtInput(*model, RandomImage({1, 3, 3}, rng),
                                {SeedMode::kLogit, 1});
  EXPECT_EQ(g.MaxAbs(), 0.0);
}

TEST(GradWrtInputTest, NonDifferentiableModelFailsExplicitly) {
  auto model = testing::SmallCnn(3);
  auto& seq = dynamic_cast<SequentialClassifier&>(*model);
  seq.mutable_stages().insert(
      seq.mutable_stages().begin() + 1,
      SequentialClassifier::Stage{std::make_unique<nn::Quantize>(0.1), ""});
  Rng rng(1);
  try {
    GradWrtInput(*model, RandomImage({3, 8, 8}, rng), {SeedMode::kLogit, 0});
    FAIL() << "expected kNotDifferentiable";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotDifferentiable);
  }
}

class InputFidelityTest
    : public ::testing::TestWithParam<std::tuple<ModelKind, SeedMode>> {};

TEST_P(InputFidelityTest, CentralDifferencesAgree) {
  const auto [kind, mode] = GetParam();
  auto model = kind == ModelKind::kCnn ? testing::SmallCnn(10)
                                       : testing::SmallTransformer(10);
  Rng rng(77);
  const Tensor x = RandomImage(model->info().input_shape, rng);
  const Seed seed{mode, 1};
  const Tensor g = GradWrtInput(*model, x, seed);
  for (int k = 0; k < 20; ++k) {
    const std::size_t idx = rng.Index(x.size());
    const double fd = CentralDifference(
        [&](double h) {
          Tensor xp = x;
          xp[idx] += h;
          return SeedValue(Forward(*model, AsBatch(xp)), seed);
        },
        kStep);
    EXPECT_TRUE(RelClose(g[idx], fd, kRelTol, 1e-10))
        << "pixel " << idx << ": analytic " << g[idx] << " vs fd " << fd;
  }
}

INSTANTIATE_TEST_SUITE_P(
    AllKindsAndSeeds, InputFidelityTest,
    ::testing::Combine(::testing::Values(ModelKind::kCnn,
                                         ModelKind::kPatchTransformer),
                       ::testing::Values(SeedMode::kLogit, SeedMode::kSoftmax)));

TEST(GradWrtLayerTest, LogitsLayerGradientIsOneHot) {
  auto model = testing::SmallCnn(4);
  Rng rng(2);
  const auto lg = GradWrtLayer(*model, RandomImage({3, 8, 8}, rng), "logits",
                               {SeedMode::kLogit, 3});
  ASSERT_EQ(lg.gradient.size(), 5u);
  for (std::size_t s = 0; s < 5; ++s) EXPECT_EQ(lg.gradient[s], s == 3 ? 1.0 : 0.0);
}

// conv1x1 -> global average pool -> linear: d y_t / d A[k, i, j] = W[t, k] / z.
TEST(GradWrtLayerTest, OneByOneConvNetHandChainRule) {
  std::vector<SequentialClassifier::Stage> stages;
  auto conv = std::make_unique<nn::Conv2d>(2, 3, 1);
  Rng rng(5);
  conv->InitHe(rng);
  stages.push_back({std::move(conv), "features"});
  stages.push_back({std::make_unique<nn::GlobalAvgPool>(), ""});
  auto head = std::make_unique<nn::Linear>(3, 2);
  head->InitHe(rng);
  const Tensor w = head->params()[0].value;
  stages.push_back({std::move(head), "logits"});
  SequentialClassifier model({"conv1x1", 2, {2, 4, 4}, {}, ModelKind::kCnn},
                             std::move(stages));
  const auto lg = GradWrtLayer(model, RandomImage({2, 4, 4}, rng), "features",
                               {SeedMode::kLogit, 1});
  ASSERT_EQ(lg.gradient.shape(), (Shape{3, 4, 4}));
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t ij = 0; ij < 16; ++ij) {
      EXPECT_DOUBLE_EQ(lg.gradient[k * 16 + ij], w.at(1, k) / 16.0);
    }
  }
}

TEST(GradWrtLayerTest, UnknownLayerListsValidNames) {
  auto model = testing::SmallCnn(4);
  Rng rng(2);
  try {
    GradWrtLayer(*model, RandomImage({3, 8, 8}, rng), "conv9",
                 {SeedMode::kLogit, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownLayer);
    EXPECT_NE(std::string(e.what()).find("block1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("logits"), std::string::npos);
  }
}

class LayerFidelityTest
    : public ::testing::TestWithParam<std::tuple<ModelKind, SeedMode>> {};

TEST_P(LayerFidelityTest, ActivationNudgesAgree) {
  const auto [kind, mode] = GetParam();
  auto model = kind == ModelKind::kCnn ? testing::SmallCnn(12)
                                       : testing::SmallTransformer(12);
  const std::string layer = kind == ModelKind::kCnn ? "block1" : "block0";
  Rng rng(19);
  const Tensor x = RandomImage(model->info().input_shape, rng);
  const Seed seed{mode, 2};
  const auto lg = GradWrtLayer(*model, x, layer, seed);
  ASSERT_EQ(lg.activation.shape(), lg.gradient.shape());
  for (int k = 0; k < 20; ++k) {
    const std::size_t idx = rng.Index(lg.gradient.size());
    // Zeros after a rectifier sit on a max-pool tie, where the forward map
    // has a kink and central differences are meaningless.
    if (kind == ModelKind::kCnn && lg.activation[idx] <= 1e-3) continue;
    const double fd = CentralDifference(
        [&](double h) {
          TraceOptions opt;
          opt.activation_nudge = ActivationNudge{layer, idx, h};
          return SeedValue(model->Trace(AsBatch(x), opt)->logits(), seed);
        },
        kStep);
    EXPECT_TRUE(RelClose(lg.gradient[idx], fd, kRelTol, 1e-10))
        << layer << "[" << idx << "]: " << lg.gradient[idx] << " vs " << fd;
  }
}

INSTANTIATE_TEST_SUITE_P(
    AllKindsAndSeeds, LayerFidelityTest,
    ::testing::Combine(::testing::Values(ModelKind::kCnn,
                                         ModelKind::kPatchTransformer),
                       ::testing::Values(SeedMode::kLogit, SeedMode::kSoftmax)));

TEST(CaptureAttentionsTest, RowStochasticAndOnePerBlock) {
  auto model = testing::SmallTransformer(3);
  Rng rng(6);
  const auto cap = CaptureAttentions(*model, RandomImage({3, 8, 8}, rng),
                                     {SeedMode::kLogit, 0});
  ASSERT_EQ(cap.stack.attentions.size(), 2u);
  ASSERT_EQ(cap.gradients.size(), 2u);
  EXPECT_EQ(cap.stack.tokens(), 5u);
  for (const Tensor& a : cap.stack.attentions) {
    const std::size_t heads = a.dim(0), t = a.dim(1);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t r = 0; r < t; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < t; ++c) {
          EXPECT_GE(a.at(h, r, c), 0.0);
          s += a.at(h, r, c);
        }
        EXPECT_NEAR(s, 1.0, 1e-5);
      }
    }
  }
}

TEST(CaptureAttentionsTest, BlockCountMatchesDepth) {
  PatchTransformerConfig cfg;
  cfg.depth = 12;
  cfg.embed = 8;
  cfg.heads = 2;
  cfg.mlp = 8;
  cfg.patch = 12;
  auto model = MakePatchTransformer("deep", cfg, 1);
  Rng rng(1);
  const auto cap = CaptureAttentions(*model, RandomImage(cfg.input_shape, rng),
                                     {SeedMode::kLogit, 0});
  EXPECT_EQ(cap.stack.attentions.size(), 12u);
}

TEST(CaptureAttentionsTest, RejectsCnnHandle) {
  auto model = testing::SmallCnn(1);
  Rng rng(1);
  try {
    CaptureAttentions(*model, RandomImage({3, 8, 8}, rng), {SeedMode::kLogit, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnsupported);
  }
}

TEST(CaptureAttentionsTest, GradientsMatchFiniteDifferences) {
  auto model = testing::SmallTransformer(14);
  Rng rng(23);
  const Tensor x = RandomImage({3, 8, 8}, rng);
  for (SeedMode mode : {SeedMode::kLogit, SeedMode::kSoftmax}) {
    const Seed seed{mode, 1};
    const auto cap = CaptureAttentions(*model, x, seed);
    for (int k = 0; k < 10; ++k) {
      AttentionNudge nudge;
      nudge.block = rng.Index(2);
      nudge.head = rng.Index(2);
      nudge.row = rng.Index(5);
      nudge.col = rng.Index(5);
      const double analytic =
          cap.gradients[nudge.block].at(nudge.head, nudge.row, nudge.col);
      const double fd = CentralDifference(
          [&](double h) {
            TraceOptions opt;
            opt.attention_nudge = nudge;
            opt.attention_nudge->delta = h;
            return SeedValue(model->Trace(AsBatch(x), opt)->logits(), seed);
          },
          kStep);
      EXPECT_TRUE(RelClose(analytic, fd, kRelTol, 1e-10))
          << "block " << nudge.block << " head " << nudge.head << " ("
          << nudge.row << "," << nudge.col << "): " << analytic << " vs " << fd;
    }
  }
}

// Parameter gradients drive the toy-model fitting; check them the same way.
TEST(ParamGradientTest, MatchesFiniteDifferences) {
  for (ModelKind kind : {ModelKind::kCnn, ModelKind::kPatchTransformer}) {
    auto model = kind == ModelKind::kCnn ? testing::SmallCnn(31)
                                         : testing::SmallTransformer(31);
    Rng rng(41);
    Tensor batch = Stack(std::vector<Tensor>{
        RandomImage(model->info().input_shape, rng),
        RandomImage(model->info().input_shape, rng)});
    const Seed seed{SeedMode::kLogit, 1};
    auto loss = [&]() {
      auto tr = model->Trace(batch, {});
      return tr->logits().at(0, 1) + tr->logits().at(1, 1);
    };
    auto trace = model->Trace(batch, {});
    auto params = model->MutableParams();
    std::vector<Tensor> grads;
    for (auto* p : params) grads.emplace_back(p->value.shape());
    BackwardRequest req;
    req.input = false;
    req.param_grads = &grads;
    model->Backward(*trace, BatchCotangent(trace->logits(), seed), req);
    for (int k = 0; k < 25; ++k) {
      const std::size_t pi = rng.Index(params.size());
      if (!params[pi]->trainable) continue;
      const std::size_t idx = rng.Index(params[pi]->value.size());
      const double fd = CentralDifference(
          [&](double h) {
            const double keep = params[pi]->value[idx];
            params[pi]->value[idx] = keep + h;
            const double v = loss();
            params[pi]->value[idx] = keep;
            return v;
          },
          kStep);
      EXPECT_TRUE(RelClose(grads[pi][idx], fd, kRelTol, 1e-9))
          << params[pi]->name << "[" << idx << "]: " << grads[pi][idx] << " vs "
          << fd;
    }
  }
}

// Training-mode batch norm back-propagates through the batch statistics.
TEST(ParamGradientTest, TrainingModeBatchNormInputGradient) {
  auto model = testing::SmallCnn(8);
  Rng rng(2);
  Tensor batch = Stack(std::vector<Tensor>{RandomImage({3, 8, 8}, rng),
                                           RandomImage({3, 8, 8}, rng),
                                           RandomImage({3, 8, 8}, rng)});
  TraceOptions train;
  train.training = true;
  auto trace = model->Trace(batch, train);
  Tensor cot(trace->logits().shape());
  for (double& v : cot.storage()) v = rng.Normal();
  const Tensor g = model->Backward(*trace, cot, {}).input;
  for (int k = 0; k < 10; ++k) {
    const std::size_t idx = rng.Index(batch.size());
    const double fd = CentralDifference(
        [&](double h) {
          Tensor b = batch;
          b[idx] += h;
          const Tensor y = model->Trace(b, train)->logits();
          double s = 0.0;
          for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * cot[i];
          return s;
        },
        kStep);
    EXPECT_TRUE(RelClose(g[idx], fd, kRelTol, 1e-9)) << g[idx] << " vs " << fd;
  }
}

}  // namespace
}  // namespace ccbp
