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

#include "ccbp/explainers.hpp"

#include <gtest/gtest.h>

#include <filesystem>

#include "ccbp/contrast.hpp"
#include "ccbp/error.hpp"
#include "ccbp/resize.hpp"
#include "test_util.hpp"

namespace ccbp {
namespace {

using testing::RandomImage;
using testing::RandomTensor;

ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kOk;
}

TEST(GradientExplainerTest, TwoClassSoftmaxClosedForm) {
  auto model = MakeLinearClassifier("lin2", {3, 4, 4}, 2, true, 5);
  Rng rng(2);
  const Tensor x = RandomImage({3, 4, 4}, rng);
  const auto soft = ExplainGradient(*model, x, 0, SeedMode::kSoftmax);
  const auto l0 = ExplainGradient(*model, x, 0, SeedMode::kLogit);
  const auto l1 = ExplainGradient(*model, x, 1, SeedMode::kLogit);
  const double p = Softmax(Forward(*model, AsBatch(x)).values())[0];
  const Tensor expected = p * (1.0 - p) * (l0.values - l1.values);
  EXPECT_LE(MaxRelativeError(soft.values, expected), 1e-12);
  EXPECT_EQ(soft.values.shape(), (Shape{4, 4}));
}

TEST(GradientExplainerTest, ConstantOutputModelGivesZeroMap) {
  auto model = MakeLinearClassifier("const", {3, 4, 4}, 3, true, 5);
  model->MutableParams()[0]->value.Fill(0.0);
  Rng rng(2);
  const auto m = ExplainGradient(*model, RandomImage({3, 4, 4}, rng), 1, SeedMode::kSoftmax);
  EXPECT_EQ(m.values.MaxAbs(), 0.0);
}

// Softmax-seed map against the explicit Jacobian-weighted sum of C
// separately back-propagated logit-seed maps.
struct LinearityCase {
  const char* name;
  bool transformer;
  Method method;
  const char* layer;
};

class SeedLinearityTest : public ::testing::TestWithParam<LinearityCase> {};

TEST_P(SeedLinearityTest, SoftmaxSeedEqualsJacobianWeightedLogitMaps) {
  const auto& c = GetParam();
  auto model = c.transformer ? testing::SmallTransformer(4) : testing::SmallCnn(4);
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = RandomImage(model->info().input_shape, rng);
    const std::size_t t = rng.Index(model->num_classes());
    ExplainRequest req{c.method, SeedMode::kLogit, ReluMode::kNone, t, std::nullopt};
    if (c.layer) req.layer_name = c.layer;
    std::vector<Tensor> per_class;
    std::vector<double> logits = Forward(*model, AsBatch(x)).storage();
    for (std::size_t s = 0; s < model->num_classes(); ++s) {
      ExplainRequest rs = req;
      rs.target_class = s;
      per_class.push_back(Explain(*model, x, rs).values);
    }
    const Tensor jac = SoftmaxJacobian(logits);
    Tensor oracle(per_class[0].shape());
    for (std::size_t s = 0; s < per_class.size(); ++s) oracle.Axpy(jac.at(t, s), per_class[s]);
    ExplainRequest soft = req;
    soft.seed_mode = SeedMode::kSoftmax;
    const Tensor direct = Explain(*model, x, soft).values;
    EXPECT_LE(MaxRelativeError(direct, oracle), 1e-6) << c.name;
  }
}

INSTANTIATE_TEST_SUITE_P(
    SeedLinearMethods, SeedLinearityTest,
    ::testing::Values(LinearityCase{"gradient", false, Method::kGradient, nullptr},
                      LinearityCase{"gradcam", false, Method::kGradCam, "block2"},
                      LinearityCase{"linear_approx", false, Method::kLinearApprox, "block1"},
                      LinearityCase{"xgradcam", false, Method::kXGradCam, "block2"},
                      LinearityCase{"fullgrad", false, Method::kFullGrad, nullptr},
                      LinearityCase{"vit_gradcam", true, Method::kVitGradCam, "block1"},
                      LinearityCase{"vit_gradient", true, Method::kGradient, nullptr}),
    [](const auto& info) { return std::string(info.param.name); });

TEST(GradCamTest, ZeroGradientGivesZeroMap) {
  Rng rng(1);
  const Tensor a = RandomTensor({4, 3, 3}, rng);
  EXPECT_EQ(GradCamMap(a, Tensor({4, 3, 3})).MaxAbs(), 0.0);
}

TEST(GradCamTest, SingleChannelUniformGradientScalesActivation) {
  Rng rng(1);
  const Tensor a = RandomTensor({1, 3, 5}, rng);
  const Tensor g({1, 3, 5}, 0.7);
  const Tensor m = GradCamMap(a, g);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_DOUBLE_EQ(m[i], 0.7 * a[i]);
}

TEST(GradCamTest, FinalReluIsElementwiseMaxOfNoneMode) {
  auto model = testing::SmallCnn(6);
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = RandomImage({3, 8, 8}, rng);
    const auto none = ExplainGradCam(*model, x, 2, "block2", SeedMode::kSoftmax);
    const auto relu =
        ExplainGradCam(*model, x, 2, "block2", SeedMode::kSoftmax, ReluMode::kFinalRelu);
    for (std::size_t i = 0; i < none.values.size(); ++i) {
      EXPECT_EQ(relu.values[i], std::max(0.0, none.values[i]));
    }
    EXPECT_GE(relu.values.Min(), 0.0);
  }
}

TEST(GradCamTest, NativeResolutionIsLayerResolution) {
  auto model = testing::SmallCnn(6);
  Rng rng(3);
  const Tensor x = RandomImage({3, 8, 8}, rng);
  EXPECT_EQ(ExplainGradCam(*model, x, 0, "block1", SeedMode::kLogit).values.shape(),
            (Shape{8, 8}));
  EXPECT_EQ(ExplainGradCam(*model, x, 0, "block2", SeedMode::kLogit).values.shape(),
            (Shape{4, 4}));
}

TEST(GradCamTest, NonSpatialLayerRejected) {
  auto cnn = testing::SmallCnn(6);
  auto vit = testing::SmallTransformer(6);
  Rng rng(3);
  const Tensor x = RandomImage({3, 8, 8}, rng);
  EXPECT_EQ(CodeOf([&] { ExplainGradCam(*cnn, x, 0, "logits", SeedMode::kLogit); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([&] { ExplainGradCam(*vit, x, 0, "block0", SeedMode::kLogit); }),
            ErrorCode::kInvalidArgument);
}

TEST(LinearApproxTest, OrthogonalSupportsGiveZeroMap) {
  Tensor a({2, 2, 2}), g({2, 2, 2});
  a[0] = 1.0;
  a[5] = 2.0;
  g[1] = 3.0;
  g[4] = -1.0;
  EXPECT_EQ(LinearApproxMap(a, g).MaxAbs(), 0.0);
}

TEST(LinearApproxTest, UnitActivationReturnsGradientField) {
  Rng rng(4);
  const Tensor g = RandomTensor({1, 4, 3}, rng);
  const Tensor m = LinearApproxMap(Tensor({1, 4, 3}, 1.0), g);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(m[i], g[i]);
}

TEST(XGradCamTest, ZeroChannelContributesNothing) {
  Rng rng(5);
  Tensor a = RandomTensor({3, 4, 4}, rng);
  const Tensor g = RandomTensor({3, 4, 4}, rng);
  for (std::size_t i = 16; i < 32; ++i) a[i] = 0.0;
  Tensor a2({2, 4, 4}), g2({2, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) {
    a2[i] = a[i];
    g2[i] = g[i];
    a2[16 + i] = a[32 + i];
    g2[16 + i] = g[32 + i];
  }
  const Tensor m = XGradCamMap(a, g);
  EXPECT_TRUE(m.AllFinite());
  EXPECT_EQ(m.storage(), XGradCamMap(a2, g2).storage());
}

TEST(XGradCamTest, NonNegativeActivationsMatchTextbookWeights) {
  Rng rng(6);
  Tensor a({3, 5, 5});
  for (double& v : a.storage()) v = rng.Uniform(0.0, 2.0);
  const Tensor g = RandomTensor({3, 5, 5}, rng);
  Tensor expected({5, 5});
  for (std::size_t k = 0; k < 3; ++k) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < 25; ++i) {
      num += a[k * 25 + i] * g[k * 25 + i];
      den += a[k * 25 + i];
    }
    for (std::size_t i = 0; i < 25; ++i) expected[i] += num / den * a[k * 25 + i];
  }
  EXPECT_LE(MaxRelativeError(XGradCamMap(a, g), expected), 1e-14);
}

TEST(FullGradTest, BiasFreeLinearLayerIsGradientTimesInput) {
  auto model = MakeLinearClassifier("nobias", {3, 4, 4}, 3, false, 8);
  Rng rng(7);
  const Tensor x = RandomImage({3, 4, 4}, rng);
  const auto fg = ExplainFullGrad(*model, x, 2, SeedMode::kLogit);
  Tensor gx = GradWrtInput(*model, x, {SeedMode::kLogit, 2});
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= x[i];
  EXPECT_EQ(fg.values.storage(), ChannelSum(gx).storage());
}

// With the linear post-processing the decomposition is no longer complete;
// what remains checkable is that the map is genuinely signed.
TEST(FullGradTest, LogitSeedMapChangesSign) {
  auto model = testing::SmallCnn(9);
  Rng rng(8);
  bool mixed = false;
  for (int trial = 0; trial < 10 && !mixed; ++trial) {
    const auto m = ExplainFullGrad(*model, RandomImage({3, 8, 8}, rng), 0, SeedMode::kLogit);
    mixed = m.values.Min() < 0.0 && m.values.Max() > 0.0;
  }
  EXPECT_TRUE(mixed);
}

// Before the spatial resize the bias terms and the input term add up to the
// logit (ReLU network, batch norm in inference mode).
TEST(FullGradTest, UnresizedTermsAreCompleteOnReluNetwork) {
  auto model = testing::SmallCnn(10);
  Rng rng(4);
  const Tensor x = AsBatch(RandomImage({3, 8, 8}, rng));
  auto trace = model->Trace(x);
  Tensor cot({1, 5});
  cot[3] = 1.0;
  BackwardRequest req;
  req.bias_terms = true;
  const auto r = model->Backward(*trace, cot, req);
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += r.input[i] * x[i];
  for (const auto& term : r.bias_terms) total += term.value.Sum();
  const auto& head = model->Params().back()->value;  // linear bias
  total += head[3];
  EXPECT_NEAR(total, trace->logits()[3], 1e-10);
}

TEST(FullGradTest, TransformerRejected) {
  auto model = testing::SmallTransformer(2);
  Rng rng(1);
  EXPECT_EQ(CodeOf([&] {
              ExplainFullGrad(*model, RandomImage({3, 8, 8}, rng), 0, SeedMode::kLogit);
            }),
            ErrorCode::kUnsupported);
}

TEST(VitGradCamTest, ZeroGradientGivesZeroMap) {
  Rng rng(2);
  const Tensor tokens = RandomTensor({5, 3}, rng);
  EXPECT_EQ(VitGradCamMap(tokens, Tensor({5, 3}), 2, 2).MaxAbs(), 0.0);
}

TEST(VitGradCamTest, EmbedDimOneIsWeightedActivationGrid) {
  Rng rng(2);
  const Tensor tokens = RandomTensor({7, 1}, rng);
  const Tensor grad = RandomTensor({7, 1}, rng);
  double w = 0.0;
  for (std::size_t p = 1; p < 7; ++p) w += grad[p];
  w /= 6.0;
  const Tensor m = VitGradCamMap(tokens, grad, 2, 3);
  ASSERT_EQ(m.shape(), (Shape{2, 3}));
  for (std::size_t p = 0; p < 6; ++p) EXPECT_DOUBLE_EQ(m[p], w * tokens[p + 1]);
}

TEST(VitGradCamTest, TokenGridResolutionAndBlockRange) {
  auto model = testing::SmallTransformer(3);
  Rng rng(2);
  const Tensor x = RandomImage({3, 8, 8}, rng);
  EXPECT_EQ(ExplainVitGradCam(*model, x, 1, 0, SeedMode::kLogit).values.shape(), (Shape{2, 2}));
  EXPECT_EQ(CodeOf([&] { ExplainVitGradCam(*model, x, 1, 2, SeedMode::kLogit); }),
            ErrorCode::kUnknownLayer);
  auto cnn = testing::SmallCnn(1);
  EXPECT_EQ(CodeOf([&] { ExplainVitGradCam(*cnn, x, 1, 0, SeedMode::kLogit); }),
            ErrorCode::kUnsupported);
}

Tensor Identity(std::size_t t) {
  Tensor m({t, t});
  for (std::size_t i = 0; i < t; ++i) m.at(i, i) = 1.0;
  return m;
}

TEST(RolloutTest, IdentityAttentionsGiveZeroPatchMap) {
  for (auto residual : {RolloutResidual::kIdentity, RolloutResidual::kNone}) {
    const std::vector<Tensor> g(3, Identity(5));
    const Tensor r = Rollout(g, false, residual);
    EXPECT_LE(MaxRelativeError(r, Identity(5)), 1e-15);
    EXPECT_EQ(RolloutMap(r, 2, 2).MaxAbs(), 0.0);
  }
}

TEST(RolloutTest, SingleBlockReadsWeightedClassTokenRow) {
  Rng rng(3);
  const Tensor g = RandomTensor({5, 5}, rng);
  const Tensor raw = RolloutMap(Rollout({g}, false, RolloutResidual::kNone), 2, 2);
  for (std::size_t p = 0; p < 4; ++p) EXPECT_EQ(raw[p], g.at(0, p + 1));

  const Tensor res = RolloutMap(Rollout({g}, false, RolloutResidual::kIdentity), 2, 2);
  double norm = std::abs(g.at(0, 0) + 1.0);
  for (std::size_t j = 1; j < 5; ++j) norm += std::abs(g.at(0, j));
  for (std::size_t p = 0; p < 4; ++p) EXPECT_DOUBLE_EQ(res[p], g.at(0, p + 1) / norm);
}

TEST(RolloutTest, RowsStayStochasticAfterResidualRenormalization) {
  Rng rng(4);
  std::vector<Tensor> g;
  for (int l = 0; l < 4; ++l) g.push_back(RandomTensor({6, 6}, rng, 0.3));
  const Tensor r = Rollout(g, true, RolloutResidual::kIdentity);
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      EXPECT_GE(r.at(i, j), 0.0);
      s += r.at(i, j);
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(RolloutTest, PerLayerReluMakesMapNonNegative) {
  auto model = testing::SmallTransformer(5);
  Rng rng(6);
  const auto m = ExplainAttentionRollout(*model, RandomImage({3, 8, 8}, rng), 1,
                                         SeedMode::kSoftmax, ReluMode::kFinalRelu);
  EXPECT_GE(m.values.Min(), 0.0);
  EXPECT_EQ(m.values.shape(), (Shape{2, 2}));
}

TEST(RolloutTest, ModelRolloutMatchesManualProduct) {
  auto model = testing::SmallTransformer(7);
  Rng rng(8);
  const Tensor x = RandomImage({3, 8, 8}, rng);
  const auto cap = CaptureAttentions(*model, x, {SeedMode::kLogit, 2});
  std::vector<Tensor> g;
  for (std::size_t l = 0; l < cap.gradients.size(); ++l) {
    g.push_back(GradientWeightedAttention(cap.stack.attentions[l], cap.gradients[l]));
  }
  const Tensor expected = RolloutMap(Rollout(g, false, RolloutResidual::kIdentity), 2, 2);
  const auto m = ExplainAttentionRollout(*model, x, 2, SeedMode::kLogit);
  EXPECT_LE(MaxRelativeError(m.values, expected), 1e-14);
}

TEST(ExplainRequestTest, LayerRulesEnforced) {
  auto model = testing::SmallCnn(1);
  Rng rng(1);
  const Tensor x = RandomImage({3, 8, 8}, rng);
  ExplainRequest grad{Method::kGradient, SeedMode::kLogit, ReluMode::kNone, 0, "block1"};
  EXPECT_EQ(CodeOf([&] { Explain(*model, x, grad); }), ErrorCode::kInvalidArgument);
  ExplainRequest cam{Method::kGradCam, SeedMode::kLogit, ReluMode::kNone, 0, std::nullopt};
  EXPECT_EQ(CodeOf([&] { Explain(*model, x, cam); }), ErrorCode::kInvalidArgument);
  cam.layer_name = "nope";
  EXPECT_EQ(CodeOf([&] { Explain(*model, x, cam); }), ErrorCode::kUnknownLayer);
  ExplainRequest xcam{Method::kXGradCam, SeedMode::kLogit, ReluMode::kFinalRelu, 0, "block1"};
  EXPECT_EQ(CodeOf([&] { Explain(*model, x, xcam); }), ErrorCode::kInvalidArgument);
  ExplainRequest bad_t{Method::kGradient, SeedMode::kLogit, ReluMode::kNone, 5, std::nullopt};
  EXPECT_EQ(CodeOf([&] { Explain(*model, x, bad_t); }), ErrorCode::kInvalidArgument);
  ExplainRequest roll{Method::kAttnRollout, SeedMode::kLogit, ReluMode::kNone, 0, std::nullopt};
  EXPECT_EQ(CodeOf([&] { Explain(*model, x, roll); }), ErrorCode::kUnsupported);
}

TEST(ExplanationMapTest, SaveLoadRoundTrip) {
  auto model = testing::SmallCnn(2);
  Rng rng(1);
  const auto m = ExplainGradCam(*model, RandomImage({3, 8, 8}, rng), 3, "block2",
                                SeedMode::kSoftmax);
  const auto dir = std::filesystem::path(::testing::TempDir()) / "ccbp_map_roundtrip";
  SaveMap(m, (dir / "map").string());
  const auto back = LoadMap((dir / "map").string());
  EXPECT_EQ(back.values.storage(), m.values.storage());
  EXPECT_EQ(back.method, Method::kGradCam);
  EXPECT_EQ(back.seed_mode, SeedMode::kSoftmax);
  EXPECT_EQ(back.target_class, 3u);
  EXPECT_EQ(back.layer_name, std::optional<std::string>("block2"));
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace ccbp
