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

#include "ccbp/contrast.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "ccbp/error.hpp"
#include "test_util.hpp"

namespace ccbp {
namespace {

using testing::RandomImage;
using testing::RandomTensor;

TEST(AlphaWeightsTest, SymmetricLogits) {
  const std::vector<double> y{0.0, 0.0, 0.0};
  const auto a = AlphaWeights(y, 0);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  EXPECT_DOUBLE_EQ(a[1], 0.5);
}

TEST(AlphaWeightsTest, TargetExcluded) {
  const std::vector<double> y{5.0, std::log(3.0), 0.0};
  const auto a = AlphaWeights(y, 0);
  EXPECT_NEAR(a[0], 0.75, 1e-15);
  EXPECT_NEAR(a[1], 0.25, 1e-15);
}

TEST(AlphaWeightsTest, HugeGapDoesNotOverflow) {
  const std::vector<double> y{0.0, 1000.0, 0.0};
  const auto a = AlphaWeights(y, 0);
  EXPECT_EQ(a[0], 1.0);
  EXPECT_LT(a[1], 1e-300);
  EXPECT_TRUE(std::isfinite(a[1]));
}

TEST(AlphaWeightsTest, PositiveAndNormalized) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> y(8);
    for (double& v : y) v = 5.0 * rng.Normal();
    const auto a = AlphaWeights(y, rng.Index(8));
    double s = 0.0;
    for (double v : a) {
      EXPECT_GT(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-8);
  }
}

TEST(AlphaWeightsTest, ShiftInvariant) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> y(6);
    for (double& v : y) v = 3.0 * rng.Normal();
    auto shifted = y;
    const double c = 100.0 * rng.Normal();
    for (double& v : shifted) v += c;
    const auto a = AlphaWeights(y, 2), b = AlphaWeights(shifted, 2);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-10);
  }
}

TEST(AlphaWeightsTest, SingleClassRejected) {
  const std::vector<double> y{1.0};
  EXPECT_THROW(AlphaWeights(y, 0), Error);
}

std::vector<Tensor> RandomSet(std::size_t classes, Rng& rng) {
  std::vector<Tensor> v;
  for (std::size_t s = 0; s < classes; ++s) v.push_back(RandomTensor({3, 4}, rng));
  return v;
}

TEST(CombineTest, TwoClassCombinatorsAgreeBitwise) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto set = RandomSet(2, rng);
    const std::vector<double> y{rng.Normal(), rng.Normal()};
    const std::size_t t = rng.Index(2);
    const Tensor mean = Combine(set, y, {Combinator::kMean, t});
    const Tensor max = Combine(set, y, {Combinator::kMax, t});
    const Tensor wtd = Combine(set, y, {Combinator::kWeighted, t});
    EXPECT_EQ(mean.storage(), max.storage());
    EXPECT_EQ(mean.storage(), wtd.storage());
    EXPECT_EQ(wtd.storage(), (set[t] - set[1 - t]).storage());
  }
}

TEST(CombineTest, IdenticalMapsCancel) {
  Rng rng(4);
  const Tensor phi = RandomTensor({3, 4}, rng);
  const std::vector<Tensor> set(5, phi);
  std::vector<double> y(5);
  for (double& v : y) v = rng.Normal();
  for (auto c : {Combinator::kMean, Combinator::kMax, Combinator::kWeighted}) {
    EXPECT_LE(Combine(set, y, {c, 1}).MaxAbs(), 1e-12) << ToString(c);
  }
  EXPECT_EQ(Combine(set, y, {Combinator::kOriginal, 1}).storage(), phi.storage());
}

TEST(CombineTest, MeanIncludesOneOverCMinusOne) {
  Rng rng(5);
  const auto set = RandomSet(4, rng);
  const std::vector<double> y{0.1, 0.2, 0.3, 0.4};
  Tensor expected = set[2];
  for (std::size_t s : {0u, 1u, 3u}) expected.Axpy(-1.0 / 3.0, set[s]);
  EXPECT_LE(MaxRelativeError(Combine(set, y, {Combinator::kMean, 2}), expected), 1e-15);
  ContrastSpec bare{Combinator::kMean, 2, false};
  Tensor unscaled = set[2];
  for (std::size_t s : {0u, 1u, 3u}) unscaled.Axpy(-1.0, set[s]);
  EXPECT_LE(MaxRelativeError(Combine(set, y, bare), unscaled), 1e-15);
}

TEST(CombineTest, MaxTieBrokenByLowestIndexAndRecorded) {
  Rng rng(6);
  const auto set = RandomSet(4, rng);
  const std::vector<double> y{2.0, 1.0, 3.0, 3.0};
  std::vector<std::string> notes;
  const Tensor m = Combine(set, y, {Combinator::kMax, 1}, &notes);
  EXPECT_EQ(m.storage(), (set[1] - set[2]).storage());
  ASSERT_EQ(notes.size(), 1u);
  EXPECT_NE(notes[0].find("lowest class 2"), std::string::npos);
}

TEST(CombineTest, PositiveScalingCommutes) {
  Rng rng(7);
  const auto set = RandomSet(5, rng);
  std::vector<Tensor> scaled;
  for (const auto& t : set) scaled.push_back(t * 3.5);
  std::vector<double> y(5);
  for (double& v : y) v = rng.Normal();
  for (auto c : {Combinator::kOriginal, Combinator::kMean, Combinator::kMax,
                 Combinator::kWeighted}) {
    const Tensor a = Combine(set, y, {c, 0});
    const Tensor b = Combine(scaled, y, {c, 0});
    EXPECT_LE(MaxRelativeError(b, a * 3.5), 1e-14);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i] > 0, b[i] > 0);
  }
}

TEST(CombineTest, IncompleteSetRejected) {
  Rng rng(8);
  const auto set = RandomSet(3, rng);
  const std::vector<double> y{0.0, 1.0, 2.0, 3.0};
  EXPECT_THROW(Combine(set, y, {Combinator::kWeighted, 0}), Error);
}

// The gradient of p_t is p_t (1 - p_t) times the weighted contrast of logit
// gradients; checked against an independently back-propagated softmax seed.
TEST(CombineTest, WeightedEqualsScaledSoftmaxGradient) {
  auto model = testing::SmallCnn(11, 5);
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = RandomImage({3, 8, 8}, rng);
    const std::size_t t = rng.Index(5);
    const auto y = Forward(*model, AsBatch(x)).storage();
    std::vector<Tensor> grads;
    for (std::size_t s = 0; s < 5; ++s) grads.push_back(GradWrtInput(*model, x, {SeedMode::kLogit, s}));
    const Tensor weighted = Combine(grads, y, {Combinator::kWeighted, t});
    const double p = Softmax(y)[t];
    const Tensor soft = GradWrtInput(*model, x, {SeedMode::kSoftmax, t});
    EXPECT_LE(MaxRelativeError(weighted, soft * (1.0 / (p * (1.0 - p)))), 1e-6);
  }
}

TEST(CoefficientsTest, MatchCombineOnBasisMaps) {
  Rng rng(10);
  std::vector<double> y(6);
  for (double& v : y) v = rng.Normal();
  std::vector<Tensor> basis;
  for (std::size_t s = 0; s < 6; ++s) {
    Tensor e({6});
    e[s] = 1.0;
    basis.push_back(e);
  }
  for (auto c : {Combinator::kOriginal, Combinator::kMean, Combinator::kMax,
                 Combinator::kWeighted}) {
    const auto coef = ContrastCoefficients(y, {c, 4});
    EXPECT_EQ(Combine(basis, y, {c, 4}).storage(), coef) << ToString(c);
  }
}

TEST(VerifyEquivalenceTest, TwoClassLinearModelExact) {
  auto model = MakeLinearClassifier("lin2", {3, 4, 4}, 2, true, 3);
  Rng rng(11);
  const auto r = VerifySoftmaxEquivalence(
      *model, RandomImage({3, 4, 4}, rng),
      {Method::kGradient, SeedMode::kLogit, ReluMode::kNone, 1, std::nullopt});
  EXPECT_LE(r.max_rel_error, 1e-14);
  EXPECT_NEAR(r.scale_factor / r.expected_scale, 1.0, 1e-12);
}

TEST(VerifyEquivalenceTest, ToyCnnGradCamPasses) {
  auto model = testing::SmallCnn(12);
  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const auto r = VerifySoftmaxEquivalence(
        *model, RandomImage({3, 8, 8}, rng),
        {Method::kGradCam, SeedMode::kLogit, ReluMode::kNone, 2, "block2"});
    EXPECT_LE(r.max_rel_error, 1e-5);
    EXPECT_NEAR(r.scale_factor / r.expected_scale, 1.0, 1e-4);
  }
}

TEST(VerifyEquivalenceTest, NonLinearVariantsRejected) {
  auto cnn = testing::SmallCnn(12);
  auto vit = testing::SmallTransformer(12);
  Rng rng(12);
  const Tensor x = RandomImage({3, 8, 8}, rng);
  try {
    VerifySoftmaxEquivalence(*cnn, x,
                             {Method::kGradCam, SeedMode::kLogit, ReluMode::kFinalRelu, 0, "block2"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
    EXPECT_NE(std::string(e.what()).find("not linear"), std::string::npos);
  }
  EXPECT_THROW(VerifySoftmaxEquivalence(
                   *vit, x, {Method::kAttnRollout, SeedMode::kLogit, ReluMode::kNone, 0, std::nullopt}),
               Error);
}

}  // namespace
}  // namespace ccbp
