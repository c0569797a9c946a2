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

#include "ccbp/viz.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "ccbp/error.hpp"
#include "test_util.hpp"

namespace ccbp {
namespace {

using testing::RandomImage;
using testing::RandomTensor;
using testing::TempDir;

std::uint8_t Byte(double v) { return static_cast<std::uint8_t>(std::lround(v * 255.0)); }

TEST(ColormapTest, Anchors) {
  EXPECT_EQ(DivergingColor(0.0), (std::array<double, 3>{1, 1, 1}));
  EXPECT_EQ(DivergingColor(1.0), (std::array<double, 3>{1, 0, 0}));
  EXPECT_EQ(DivergingColor(-1.0), (std::array<double, 3>{0, 0, 1}));
  EXPECT_EQ(DivergingColor(5.0), DivergingColor(1.0));
}

TEST(CenteredNormTest, SymmetricScaling) {
  Tensor m({1, 3});
  m.storage() = {-2.0, 1.0, 4.0};
  const Tensor n = CenteredNorm(m);
  EXPECT_EQ(n.storage(), (std::vector<double>{-0.5, 0.25, 1.0}));
  bool zero = false;
  EXPECT_EQ(CenteredNorm(Tensor({2, 2}), false, &zero).MaxAbs(), 0.0);
  EXPECT_TRUE(zero);
  Tensor shifted({1, 3});
  shifted.storage() = {10.0, 11.0, 13.0};
  EXPECT_EQ(CenteredNorm(shifted, true).storage(), (std::vector<double>{-0.5, 0.0, 1.0}));
}

TEST(RenderOverlayTest, ZeroMapBlendsWithWhite) {
  Rng rng(1);
  const Tensor img = RandomImage({3, 5, 6}, rng, 0.0, 1.0);
  bool zero = false;
  const RgbImage out = RenderOverlay(img, Tensor({5, 6}), {}, &zero);
  EXPECT_TRUE(zero);
  ASSERT_EQ(out.width, 6u);
  ASSERT_EQ(out.height, 5u);
  for (std::size_t y = 0; y < 5; ++y) {
    for (std::size_t x = 0; x < 6; ++x) {
      for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_EQ(out.px(x, y)[k], Byte(0.5 * 1.0 + 0.5 * img.at(k, y, x)));
      }
    }
  }
}

TEST(RenderOverlayTest, NegatedMapMirrorsRedAndBlue) {
  Rng rng(2);
  const Tensor map = RandomTensor({4, 4}, rng);
  const RgbImage a = RenderHeatmap(map, 12, 12);
  const RgbImage b = RenderHeatmap(map * -1.0, 12, 12);
  Tensor gray({3, 12, 12});
  for (std::size_t i = 0; i < 144; ++i) {
    const double g = rng.Uniform();
    for (std::size_t c = 0; c < 3; ++c) gray[c * 144 + i] = g;
  }
  const RgbImage oa = RenderOverlay(gray, map);
  const RgbImage ob = RenderOverlay(gray, map * -1.0);
  for (std::size_t y = 0; y < 12; ++y) {
    for (std::size_t x = 0; x < 12; ++x) {
      EXPECT_EQ(a.px(x, y)[0], b.px(x, y)[2]);
      EXPECT_EQ(a.px(x, y)[1], b.px(x, y)[1]);
      EXPECT_EQ(a.px(x, y)[2], b.px(x, y)[0]);
      EXPECT_EQ(oa.px(x, y)[0], ob.px(x, y)[2]);
      EXPECT_EQ(oa.px(x, y)[1], ob.px(x, y)[1]);
      EXPECT_EQ(oa.px(x, y)[2], ob.px(x, y)[0]);
    }
  }
}

TEST(RenderOverlayTest, ConstantPositiveMapIsSaturatedRed) {
  const RgbImage h = RenderHeatmap(Tensor({3, 3}, 0.2), 6, 6);
  for (std::size_t i = 0; i < 36; ++i) {
    EXPECT_EQ(h.rgb[3 * i], 255);
    EXPECT_EQ(h.rgb[3 * i + 1], 0);
    EXPECT_EQ(h.rgb[3 * i + 2], 0);
  }
}

TEST(RenderOverlayTest, LowResolutionMapUpsampledToImage) {
  Rng rng(3);
  const Tensor img = RandomImage({3, 16, 12}, rng);
  const RgbImage out = RenderOverlay(img, RandomTensor({4, 3}, rng));
  EXPECT_EQ(out.width, 12u);
  EXPECT_EQ(out.height, 16u);
  RenderSpec big;
  big.scale = 3;
  const RgbImage scaled = RenderOverlay(img, RandomTensor({4, 3}, rng), big);
  EXPECT_EQ(scaled.width, 36u);
  EXPECT_EQ(scaled.height, 48u);
}

TEST(RenderOverlayTest, RejectsBadInput) {
  Tensor bad({2, 2});
  bad[0] = std::nan("");
  EXPECT_THROW(RenderHeatmap(bad, 2, 2), Error);
  RenderSpec spec;
  spec.overlay_alpha = 1.5;
  EXPECT_THROW(RenderHeatmap(Tensor({2, 2}), 2, 2, spec), Error);
}

std::string Slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(RenderOverlayTest, RepeatedRunsByteIdentical) {
  TempDir dir("viz");
  Rng rng(4);
  const Tensor img = RandomImage({3, 8, 8}, rng);
  const Tensor map = RandomTensor({8, 8}, rng);
  WritePng(dir / "a.png", RenderOverlay(img, map), {{"method", "gradcam"}});
  WritePng(dir / "b.png", RenderOverlay(img, map), {{"method", "gradcam"}});
  EXPECT_EQ(Slurp(dir / "a.png"), Slurp(dir / "b.png"));
}

TEST(RenderGridTest, SingleCellIsFramedOverlay) {
  Rng rng(5);
  const Tensor img = RandomImage({3, 6, 7}, rng);
  const Tensor map = RandomTensor({6, 7}, rng);
  const GridFigure g = RenderGrid({{img, map, "cell"}}, 1, {}, 2);
  const RgbImage single = RenderOverlay(img, map);
  ASSERT_EQ(g.raster.width, 7u + 4);
  ASSERT_EQ(g.raster.height, 6u + 4);
  for (std::size_t y = 0; y < g.raster.height; ++y) {
    for (std::size_t x = 0; x < g.raster.width; ++x) {
      const bool inside = x >= 2 && x < 9 && y >= 2 && y < 8;
      for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_EQ(g.raster.px(x, y)[k], inside ? single.px(x - 2, y - 2)[k] : 255);
      }
    }
  }
}

TEST(RenderGridTest, CellsInRowMajorOrder) {
  const Tensor img({3, 4, 4}, 0.5);
  std::vector<GridCell> cells;
  const double values[4] = {1.0, -1.0, 0.0, 1.0};
  for (int i = 0; i < 4; ++i) cells.push_back({img, Tensor({4, 4}, values[i]), "c" + std::to_string(i)});
  cells[3].image = Tensor({3, 4, 4}, 0.0);
  const GridFigure g = RenderGrid(cells, 2, {}, 1);
  EXPECT_EQ(g.rows, 2u);
  EXPECT_EQ(g.labels, (std::vector<std::string>{"c0", "c1", "c2", "c3"}));
  EXPECT_EQ(g.warnings, 1u);
  auto centre = [&](std::size_t r, std::size_t c) { return g.raster.px(c * 6 + 3, r * 6 + 3); };
  const std::uint8_t half = Byte(0.5), three_q = Byte(0.75);
  EXPECT_EQ(std::vector<std::uint8_t>(centre(0, 0), centre(0, 0) + 3),
            (std::vector<std::uint8_t>{three_q, Byte(0.25), Byte(0.25)}));
  EXPECT_EQ(std::vector<std::uint8_t>(centre(0, 1), centre(0, 1) + 3),
            (std::vector<std::uint8_t>{Byte(0.25), Byte(0.25), three_q}));
  EXPECT_EQ(std::vector<std::uint8_t>(centre(1, 0), centre(1, 0) + 3),
            (std::vector<std::uint8_t>{three_q, three_q, three_q}));
  EXPECT_EQ(std::vector<std::uint8_t>(centre(1, 1), centre(1, 1) + 3),
            (std::vector<std::uint8_t>{half, 0, 0}));
}

TEST(RenderGridTest, EmptyAndMixedColumnsRejected) {
  EXPECT_THROW(RenderGrid({}, 2), Error);
  const GridCell a{Tensor({3, 4, 4}), Tensor({4, 4}), "a"};
  const GridCell b{Tensor({3, 4, 5}), Tensor({4, 5}), "b"};
  EXPECT_THROW(RenderGrid({a, b}, 1), Error);
  EXPECT_NO_THROW(RenderGrid({a, b}, 2));
}

TEST(RenderGridTest, SavedLabelsInTextAndSidecar) {
  TempDir dir("grid");
  const GridCell a{Tensor({3, 4, 4}), Tensor({4, 4}), "red disc 0.61"};
  const GridCell b{Tensor({3, 4, 4}), Tensor({4, 4}), "blue ring 0.30"};
  SaveGrid(RenderGrid({a, b}, 2), dir / "g.png", {{"seed", 3}});
  const auto text = ReadPngText(dir / "g.png");
  EXPECT_EQ(text.at("cell_000"), "red disc 0.61");
  EXPECT_EQ(text.at("cell_001"), "blue ring 0.30");
  EXPECT_EQ(text.at("layout"), "1x2");
  std::ifstream side(dir / "g.png.json");
  const auto j = nlohmann::json::parse(side);
  EXPECT_EQ(j.at("labels")[1], "blue ring 0.30");
  EXPECT_EQ(j.at("metadata").at("seed"), 3);
}

Dataset RandomDataset(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    images.push_back(RandomImage({3, 8, 8}, rng));
    labels.push_back(rng.Index(5));
    ids.push_back("s" + std::to_string(i));
  }
  return Dataset(images, labels, ids);
}

TEST(SelectSamplesTest, ThresholdExtremes) {
  auto model = testing::SmallCnn(41);
  const Dataset d = RandomDataset(12, 1);
  const auto all = SelectSamples(*model, d, Threshold::Parse("p2>0"), 100, 1);
  EXPECT_EQ(all.qualifying, 12u);
  EXPECT_EQ(all.samples.size(), 12u);
  const auto none = SelectSamples(*model, d, Threshold::Parse("p2>1"), 5, 1);
  EXPECT_EQ(none.status, "empty_result");
  EXPECT_TRUE(none.samples.empty());
}

TEST(SelectSamplesTest, SeededAndRecordsTopThree) {
  auto model = testing::SmallCnn(42);
  const Dataset d = RandomDataset(20, 2);
  const auto a = SelectSamples(*model, d, Threshold::Parse("p2>0"), 5, 7);
  const auto b = SelectSamples(*model, d, Threshold::Parse("p2>0"), 5, 7);
  const auto c = SelectSamples(*model, d, Threshold::Parse("p2>0"), 5, 8);
  EXPECT_EQ(a.ToJson(), b.ToJson());
  EXPECT_NE(a.ToJson(), c.ToJson());
  std::set<std::size_t> seen;
  for (const auto& s : a.samples) {
    EXPECT_TRUE(seen.insert(s.index).second);
    EXPECT_GE(s.probs[0], s.probs[1]);
    EXPECT_GE(s.probs[1], s.probs[2]);
    const auto p = Softmax(Forward(*model, AsBatch(d.image(s.index))).storage());
    EXPECT_EQ(p[s.classes[0]], s.probs[0]);
  }
  EXPECT_THROW(SelectSamples(*model, d, Threshold::Parse("p1>0"), 5, 7), Error);
}

PerturbationTrace ConstantTrace(std::vector<Combinator> sel, std::size_t n_total) {
  PerturbationTrace t;
  t.model_id = "toy-cnn";
  t.epsilon = 3e-3;
  t.n_total = n_total;
  double v = 0.2;
  for (auto c : sel) {
    SelectorSeries s;
    s.selector = c;
    s.accuracy.assign(n_total + 1, v);
    s.mean_y_t.assign(n_total + 1, v * 10);
    s.mean_p_t.assign(n_total + 1, v);
    for (std::size_t i = 0; i <= n_total; ++i) s.mean_p_t[i] += 0.01 * static_cast<double>(i);
    v += 0.1;
    t.series.push_back(s);
  }
  return t;
}

std::size_t CountColor(const RgbImage& img, const std::array<std::uint8_t, 3>& c) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < img.width * img.height; ++i) {
    if (img.rgb[3 * i] == c[0] && img.rgb[3 * i + 1] == c[1] && img.rgb[3 * i + 2] == c[2]) ++n;
  }
  return n;
}

TEST(PlotTracesTest, ConstantSeriesIsFlatLine) {
  const auto plots = PlotTraces(ConstantTrace({Combinator::kWeighted}, 5), 200, 100);
  ASSERT_EQ(plots.size(), 3u);
  const auto color = SelectorColor(Combinator::kWeighted);
  const RgbImage& img = plots[0].raster;
  std::size_t row = img.height;
  for (std::size_t y = 0; y < img.height && row == img.height; ++y) {
    if (std::equal(color.begin(), color.end(), img.px(40, y))) row = y;
  }
  ASSERT_LT(row, img.height);
  for (std::size_t x = 40; x <= 200 - 12; ++x) {
    EXPECT_TRUE(std::equal(color.begin(), color.end(), img.px(x, row))) << x;
  }
}

TEST(PlotTracesTest, OneCurvePerSelectorAndMetadata) {
  const std::vector<Combinator> all{Combinator::kOriginal, Combinator::kMean, Combinator::kMax,
                                    Combinator::kWeighted};
  const auto plots = PlotTraces(ConstantTrace(all, 20));
  for (const auto& p : plots) {
    for (auto c : all) EXPECT_GT(CountColor(p.raster, SelectorColor(c)), 64u + 100u);
    EXPECT_EQ(p.text.at("model_id"), "toy-cnn");
    EXPECT_EQ(p.text.at("epsilon"), "0.003");
    EXPECT_NE(p.text.at("legend").find("weighted=#d62728"), std::string::npos);
  }
  EXPECT_EQ(plots[2].panel, "p_t");
}

TEST(PlotTracesTest, LengthMismatchRejected) {
  auto t = ConstantTrace({Combinator::kMax}, 4);
  t.series[0].mean_y_t.pop_back();
  EXPECT_THROW(PlotTraces(t), Error);
  EXPECT_THROW(PlotTraces(PerturbationTrace{}), Error);
}

TEST(RegressionTest, RecoversExactQuadratic) {
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i < 30; ++i) {
    const double y = -3.0 + 0.37 * i;
    pts.emplace_back(y, 1.5 - 0.25 * y + 0.125 * y * y);
  }
  const auto r = FitQuadratic(pts);
  EXPECT_NEAR(r.coefficients[0], 1.5, 1.5e-8);
  EXPECT_NEAR(r.coefficients[1], -0.25, 0.25e-8);
  EXPECT_NEAR(r.coefficients[2], 0.125, 0.125e-8);
  EXPECT_NEAR(r.r_squared, 1.0, 1e-12);
  EXPECT_NEAR(r.SlopeAt(2.0), -0.25 + 0.5, 1e-8);
}

TEST(RegressionTest, DegenerateDesignRejected) {
  EXPECT_THROW(FitQuadratic({{1.0, 2.0}, {1.0, 3.0}, {1.0, 4.0}}), Error);
  EXPECT_THROW(FitQuadratic({{1.0, 2.0}, {2.0, 3.0}, {1.0, 4.0}}), Error);
  EXPECT_THROW(FitQuadratic({{1.0, 2.0}, {2.0, 3.0}}), Error);
}

TEST(RegressionTest, EqualNormLinearModelIsFlat) {
  auto model = MakeLinearClassifier("lin", {3, 6, 6}, 5, true, 3);
  Tensor& w = model->MutableParams()[0]->value;
  const std::size_t cols = w.size() / 5;
  for (std::size_t r = 0; r < 5; ++r) {
    double n = 0.0;
    for (std::size_t j = 0; j < cols; ++j) n += w[r * cols + j] * w[r * cols + j];
    for (std::size_t j = 0; j < cols; ++j) w[r * cols + j] /= std::sqrt(n);
  }
  Rng rng(4);
  std::vector<Tensor> images;
  for (int i = 0; i < 30; ++i) images.push_back(RandomImage({3, 6, 6}, rng, 0.0, 1.0));
  const Dataset d(images, std::vector<std::size_t>(30, 0), [] {
    std::vector<std::string> ids;
    for (int i = 0; i < 30; ++i) ids.push_back("l" + std::to_string(i));
    return ids;
  }());
  const auto r = NormLogitRegression(*model, d, 30, 5, 1);
  EXPECT_EQ(r.points.size(), 150u);
  for (const auto& p : r.points) EXPECT_NEAR(p.second, 1.0, 1e-12);
  EXPECT_LE(r.RelativeCurvature(), 1e-6);
  EXPECT_LE(std::abs(r.SlopeAt(r.y_max)), 1e-6);
}

TEST(RegressionTest, SamplesAreSeeded) {
  auto model = testing::SmallCnn(43);
  const Dataset d = RandomDataset(10, 3);
  const auto a = NormLogitRegression(*model, d, 4, 2, 9);
  const auto b = NormLogitRegression(*model, d, 4, 2, 9);
  EXPECT_EQ(a.ToJson(), b.ToJson());
  EXPECT_EQ(a.points.size(), 8u);
  EXPECT_THROW(NormLogitRegression(*model, d, 0, 2, 9), Error);
}

}  // namespace
}  // namespace ccbp
