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

#include "ccbp/ccbp.h"

#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccbp/model.hpp"
#include "ccbp/toydata.hpp"
#include "test_util.hpp"

namespace {

using nlohmann::json;

json TakeJson(char* s) {
  json j = json::parse(s);
  ccbp_string_free(s);
  return j;
}

class CApiTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new ccbp::testing::TempDir("capi");
    ccbp::ToyCnnConfig cfg;
    ccbp::SaveModel(*ccbp::MakeToyCnn("capi-cnn", cfg, 5), *dir_ / "models");
    manifest_ = ccbp::WriteDataset(ccbp::GenerateToyDataset(6, 9, "c-"), *dir_ / "data");
  }
  static void TearDownTestSuite() { delete dir_; }

  void SetUp() override {
    ASSERT_EQ(ccbp_model_load((*dir_ / "models/capi-cnn").c_str(), nullptr, &model_), CCBP_OK)
        << ccbp_last_error();
    ASSERT_EQ(ccbp_dataset_load(manifest_.c_str(), 0, &data_), CCBP_OK) << ccbp_last_error();
    pixels_.resize(ccbp_dataset_pixel_count(data_));
    ASSERT_EQ(ccbp_dataset_image(data_, 0, pixels_.data(), pixels_.size()), CCBP_OK);
  }
  void TearDown() override {
    ccbp_model_free(model_);
    ccbp_dataset_free(data_);
  }

  static ccbp::testing::TempDir* dir_;
  static std::string manifest_;
  ccbp_model* model_ = nullptr;
  ccbp_dataset* data_ = nullptr;
  std::vector<double> pixels_;
};

ccbp::testing::TempDir* CApiTest::dir_ = nullptr;
std::string CApiTest::manifest_;

TEST(CApi, VersionAndStatusNames) {
  EXPECT_STREQ(ccbp_version(), "0.1.0");
  EXPECT_STREQ(ccbp_status_name(CCBP_OK), "ok");
  EXPECT_STREQ(ccbp_status_name(CCBP_EMPTY_RESULT), "empty_result");
  EXPECT_STREQ(ccbp_status_name(static_cast<ccbp_status>(42)), "unknown");
}

TEST(CApi, NullArgumentsReported) {
  ccbp_model* m = reinterpret_cast<ccbp_model*>(0x1);
  EXPECT_EQ(ccbp_model_load(nullptr, nullptr, &m), CCBP_INVALID_ARGUMENT);
  EXPECT_NE(std::string(ccbp_last_error()).find("ref"), std::string::npos);
  EXPECT_EQ(ccbp_model_load("x", nullptr, nullptr), CCBP_INVALID_ARGUMENT);
  EXPECT_EQ(ccbp_dataset_size(nullptr), 0u);
  EXPECT_EQ(ccbp_map_data(nullptr), nullptr);
  ccbp_model_free(nullptr);
  ccbp_map_free(nullptr);
  ccbp_dataset_free(nullptr);
}

TEST(CApi, MissingModelClearsOutput) {
  ccbp_model* m = reinterpret_cast<ccbp_model*>(0x1);
  EXPECT_NE(ccbp_model_load("/nonexistent/dir/nothing", "/nonexistent", &m), CCBP_OK);
  EXPECT_EQ(m, nullptr);
  EXPECT_STRNE(ccbp_last_error(), "");
}

TEST_F(CApiTest, InfoAndLogits) {
  char* s = nullptr;
  ASSERT_EQ(ccbp_model_info(model_, &s), CCBP_OK);
  const json info = TakeJson(s);
  EXPECT_EQ(info["model_id"], "capi-cnn");
  EXPECT_EQ(info["num_classes"], 10);
  EXPECT_EQ(info["kind"], "cnn");
  std::vector<double> y(10);
  ASSERT_EQ(ccbp_model_logits(model_, pixels_.data(), pixels_.size(), y.data(), y.size()),
            CCBP_OK);
  EXPECT_EQ(ccbp_model_logits(model_, pixels_.data(), pixels_.size() - 1, y.data(), y.size()),
            CCBP_SHAPE_MISMATCH);
  EXPECT_EQ(ccbp_model_logits(model_, pixels_.data(), pixels_.size(), y.data(), 9),
            CCBP_SHAPE_MISMATCH);
  EXPECT_STREQ(ccbp_last_error(), "logit buffer must hold 10 values");
  ASSERT_EQ(ccbp_model_logits(model_, pixels_.data(), pixels_.size(), y.data(), y.size()),
            CCBP_OK);
  EXPECT_STREQ(ccbp_last_error(), "");
}

TEST_F(CApiTest, DatasetAccess) {
  EXPECT_EQ(ccbp_dataset_size(data_), 6u);
  EXPECT_EQ(ccbp_dataset_pixel_count(data_), 3u * 24 * 24);
  size_t label = 99;
  ASSERT_EQ(ccbp_dataset_label(data_, 5, &label), CCBP_OK);
  EXPECT_LT(label, 10u);
  EXPECT_EQ(ccbp_dataset_label(data_, 6, &label), CCBP_INVALID_ARGUMENT);
}

TEST_F(CApiTest, ExplainAndContrast) {
  ccbp_map* map = nullptr;
  ASSERT_EQ(ccbp_explain(model_, pixels_.data(), pixels_.size(),
                         R"({"method":"gradcam","layer":"block2","target":3})", &map),
            CCBP_OK)
      << ccbp_last_error();
  size_t h = 0, w = 0;
  ASSERT_EQ(ccbp_map_shape(map, &h, &w), CCBP_OK);
  EXPECT_EQ(h, 12u);
  EXPECT_EQ(w, 12u);
  char* s = nullptr;
  ASSERT_EQ(ccbp_map_json(map, &s), CCBP_OK);
  const json side = TakeJson(s);
  EXPECT_EQ(side["target_class"], 3);
  ccbp_map_free(map);

  EXPECT_EQ(ccbp_explain(model_, pixels_.data(), pixels_.size(), R"({"method":"gradcam"})", &map),
            CCBP_INVALID_ARGUMENT);
  EXPECT_EQ(map, nullptr);
  EXPECT_EQ(ccbp_explain(model_, pixels_.data(), pixels_.size(), R"({"metod":"gradient"})", &map),
            CCBP_PARSE);
  EXPECT_EQ(ccbp_explain(model_, pixels_.data(), pixels_.size(), "{", &map), CCBP_PARSE);

  // Two-class contrast of the gradient equals the difference of the two maps.
  std::vector<double> y(10);
  ccbp_model_logits(model_, pixels_.data(), pixels_.size(), y.data(), y.size());
  ccbp_map *c = nullptr, *a = nullptr;
  ASSERT_EQ(ccbp_contrast(model_, pixels_.data(), pixels_.size(),
                          R"({"method":"gradient","target":0,"combinator":"max"})", &c),
            CCBP_OK)
      << ccbp_last_error();
  std::size_t runner_up = 1;
  for (std::size_t k = 1; k < 10; ++k) {
    if (y[k] > y[runner_up]) runner_up = k;
  }
  ccbp_map* b = nullptr;
  ASSERT_EQ(ccbp_explain(model_, pixels_.data(), pixels_.size(), R"({"target":0})", &a), CCBP_OK);
  const std::string req = R"({"target":)" + std::to_string(runner_up) + "}";
  ASSERT_EQ(ccbp_explain(model_, pixels_.data(), pixels_.size(), req.c_str(), &b), CCBP_OK);
  ccbp_map_shape(c, &h, &w);
  for (size_t i = 0; i < h * w; ++i) {
    EXPECT_NEAR(ccbp_map_data(c)[i], ccbp_map_data(a)[i] - ccbp_map_data(b)[i], 1e-12);
  }
  ccbp_map_free(a);
  ccbp_map_free(b);
  ccbp_map_free(c);

  EXPECT_EQ(ccbp_contrast(model_, pixels_.data(), pixels_.size(), R"({"seed_mode":"softmax"})", &c),
            CCBP_INVALID_ARGUMENT);
}

TEST_F(CApiTest, VerifyIdentity) {
  double err = 1.0, scale = 0.0, expected = 0.0;
  ASSERT_EQ(ccbp_verify(model_, pixels_.data(), pixels_.size(),
                        R"({"method":"xgradcam","layer":"block3"})", &err, &scale, &expected),
            CCBP_OK)
      << ccbp_last_error();
  EXPECT_LE(err, 1e-5);
  EXPECT_NEAR(scale, expected, 1e-8 + 1e-6 * expected);
}

TEST(CApi, PerturbStepStaysInBudget) {
  const std::vector<double> x0{0.0, 0.5, 1.0, 0.3};
  const std::vector<double> phi{-1.0, 2.0, 3.0, 0.0};
  std::vector<double> x = x0, out(4);
  for (int i = 0; i < 5; ++i) {
    ASSERT_EQ(ccbp_perturb_step(x.data(), x0.data(), phi.data(), 4, 0.01, 2, out.data()), CCBP_OK);
    x = out;
  }
  EXPECT_DOUBLE_EQ(x[0], 0.0);
  EXPECT_DOUBLE_EQ(x[1], 0.51);
  EXPECT_DOUBLE_EQ(x[2], 1.0);
  EXPECT_DOUBLE_EQ(x[3], 0.3);
  EXPECT_EQ(ccbp_perturb_step(x.data(), x0.data(), phi.data(), 4, 0.0, 2, out.data()),
            CCBP_INVALID_ARGUMENT);
  EXPECT_EQ(ccbp_perturb_step(x.data(), x0.data(), phi.data(), 4, 0.01, 0, out.data()),
            CCBP_INVALID_ARGUMENT);
}

void Collect(const char* message, void* user) {
  static_cast<std::vector<std::string>*>(user)->push_back(message);
}

TEST_F(CApiTest, RunThroughCApi) {
  std::vector<std::string> log;
  ccbp_set_log_callback(Collect, &log);
  const std::string model = "model=" + *dir_ / "models/capi-cnn";
  const std::string data = "dataset.manifest=" + manifest_;
  const std::string root = *dir_ / "art";

  std::vector<const char*> bad{model.c_str(), "perturb.n_totl=0"};
  int code = -1;
  EXPECT_EQ(ccbp_run("perturb", nullptr, nullptr, bad.data(), bad.size(), root.c_str(), 0, &code,
                     nullptr),
            CCBP_PARSE);
  EXPECT_NE(std::string(ccbp_last_error()).find("perturb.n_totl"), std::string::npos);

  std::vector<const char*> ok{model.c_str(), data.c_str(), "perturb.n_total=0"};
  char* summary = nullptr;
  ASSERT_EQ(ccbp_run("perturb", nullptr, nullptr, ok.data(), ok.size(), root.c_str(), 2, &code,
                     &summary),
            CCBP_OK)
      << ccbp_last_error();
  EXPECT_EQ(code, 0);
  const json j = TakeJson(summary);
  EXPECT_EQ(j["run_id"].get<std::string>().rfind("perturb-", 0), 0u);
  EXPECT_FALSE(log.empty());
  ccbp_set_log_callback(nullptr, nullptr);
}

}  // namespace
