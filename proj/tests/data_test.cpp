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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ccbp/dataset.hpp"
#include "ccbp/error.hpp"
#include "ccbp/image_io.hpp"
#include "ccbp/toydata.hpp"
#include "test_util.hpp"

namespace ccbp {
namespace {

using testing::TempDir;

RgbImage Gradient(std::size_t w, std::size_t h) {
  RgbImage img(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::uint8_t* p = img.px(x, y);
      p[0] = static_cast<std::uint8_t>(x * 17);
      p[1] = static_cast<std::uint8_t>(y * 29);
      p[2] = static_cast<std::uint8_t>((x + y) * 7);
    }
  }
  return img;
}

TEST(PngTest, RoundTripsPixelsAndText) {
  TempDir dir("png");
  const RgbImage img = Gradient(7, 5);
  WritePng(dir / "a.png", img, {{"b", "second"}, {"a", "first"}});
  const RgbImage back = ReadPng(dir / "a.png");
  EXPECT_EQ(back.width, 7u);
  EXPECT_EQ(back.height, 5u);
  EXPECT_EQ(back.rgb, img.rgb);
  const auto text = ReadPngText(dir / "a.png");
  EXPECT_EQ(text.at("a"), "first");
  EXPECT_EQ(text.at("b"), "second");
}

TEST(PngTest, OutputIsByteIdentical) {
  TempDir dir("png-det");
  const RgbImage img = Gradient(9, 4);
  WritePng(dir / "a.png", img, {{"k", "v"}});
  WritePng(dir / "b.png", img, {{"k", "v"}});
  std::ifstream a(dir / "a.png", std::ios::binary), b(dir / "b.png", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {});
  const std::string sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_FALSE(sa.empty());
  EXPECT_EQ(sa, sb);
}

TEST(PngTest, MissingAndCorruptFilesReportDistinctCodes) {
  TempDir dir("png-bad");
  try {
    ReadPng(dir / "none.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
  std::ofstream(dir / "bad.png") << "not a png at all";
  try {
    ReadPng(dir / "bad.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
  }
}

TEST(PngTest, TensorConversionRoundTrips) {
  const RgbImage img = Gradient(6, 6);
  const Tensor t = ToTensor(img);
  EXPECT_EQ(t.shape(), (Shape{3, 6, 6}));
  EXPECT_GE(t.Min(), 0.0);
  EXPECT_LE(t.Max(), 1.0);
  EXPECT_EQ(ToRgb(t).rgb, img.rgb);
}

class ManifestTest : public ::testing::Test {
 protected:
  ManifestTest() : dir_("manifest") {
    std::filesystem::create_directories(dir_.path() / "img");
  }

  void AddImage(const std::string& id, std::size_t label) {
    WritePng(dir_ / ("img/" + id + ".png"), Gradient(4, 3));
    entries_.push_back({id, "img/" + id + ".png", label});
  }

  std::string Write() {
    WriteManifest(dir_ / "manifest.tsv", entries_);
    return dir_ / "manifest.tsv";
  }

  TempDir dir_;
  std::vector<ManifestEntry> entries_;
};

TEST_F(ManifestTest, EmptyManifestGivesEmptyDataset) {
  const Dataset d = Dataset::Load(Write());
  EXPECT_TRUE(d.empty());
  EXPECT_EQ(d.NumBatches(8), 0u);
}

TEST_F(ManifestTest, SingleImage) {
  AddImage("only", 3);
  const Dataset d = Dataset::Load(Write());
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.id(0), "only");
  EXPECT_EQ(d.label(0), 3u);
  EXPECT_EQ(d.image(0).shape(), (Shape{3, 3, 4}));
  const ImageBatch b = d.Batch(0, 16);
  EXPECT_EQ(b.pixels.shape(), (Shape{1, 3, 3, 4}));
}

TEST_F(ManifestTest, MissingFileNamesTheId) {
  AddImage("a", 0);
  entries_.push_back({"ghost", "img/ghost.png", 1});
  try {
    Dataset::Load(Write());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
  }
}

TEST_F(ManifestTest, CorruptFileSkippedWithWarning) {
  AddImage("a", 0);
  AddImage("b", 1);
  std::ofstream(dir_ / "img/b.png", std::ios::trunc) << "garbage";
  const Dataset d = Dataset::Load(Write());
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.id(0), "a");
  ASSERT_EQ(d.skipped(), 1u);
  EXPECT_NE(d.warnings()[0].find("'b'"), std::string::npos);
}

TEST_F(ManifestTest, MalformedLineReportsLocation) {
  Write();
  std::ofstream(dir_ / "manifest.tsv", std::ios::app) << "x\tonly-two-fields\n";
  try {
    Dataset::Load(dir_ / "manifest.tsv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find(":"), std::string::npos);
  }
}

TEST_F(ManifestTest, ShuffleIsSeeded) {
  for (int i = 0; i < 12; ++i) AddImage("im" + std::to_string(i), static_cast<std::size_t>(i % 3));
  const std::string path = Write();
  const Dataset a = Dataset::Load(path, {true, 5, 0});
  const Dataset b = Dataset::Load(path, {true, 5, 0});
  const Dataset c = Dataset::Load(path, {true, 6, 0});
  const Dataset plain = Dataset::Load(path);
  EXPECT_EQ(a.ids(), b.ids());
  EXPECT_NE(a.ids(), c.ids());
  EXPECT_NE(a.ids(), plain.ids());
  EXPECT_EQ(Dataset::Load(path, {false, 0, 4}).size(), 4u);
}

TEST(ToyDataTest, DeterministicAndQuantized) {
  const Dataset a = GenerateToyDataset(20, 9, "t-");
  const Dataset b = GenerateToyDataset(20, 9, "t-");
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.image(i).storage(), b.image(i).storage());
    EXPECT_EQ(a.label(i), b.label(i));
    EXPECT_LT(a.label(i), kToyClasses);
    for (double v : a.image(i).storage()) {
      EXPECT_DOUBLE_EQ(v * 255.0, std::round(v * 255.0));
    }
  }
  EXPECT_EQ(a.id(3), "t-00003");
}

TEST(ToyDataTest, WrittenDatasetReloadsExactly) {
  TempDir dir("toy");
  const Dataset a = GenerateToyDataset(6, 4, "w-");
  const Dataset b = Dataset::Load(WriteDataset(a, dir.path().string()));
  ASSERT_EQ(b.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.image(i).storage(), b.image(i).storage());
    EXPECT_EQ(a.id(i), b.id(i));
    EXPECT_EQ(a.label(i), b.label(i));
  }
}

}  // namespace
}  // namespace ccbp
