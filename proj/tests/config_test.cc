// Copyright 2026 The hflow Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hflow/config.h"

#include <filesystem>

#include "gtest/gtest.h"

namespace hflow {
namespace {

namespace fs = std::filesystem;

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(CliConfigTest, DefaultsRoundTrip) {
  const CliConfig defaults = cli_config_from_json(Json::object());
  EXPECT_EQ(defaults.corpus.n_train, 256u);
  EXPECT_EQ(defaults.train.steps, 6000u);
  EXPECT_EQ(defaults.train.model.arch, Arch::kArch3);
  EXPECT_EQ(to_json(cli_config_from_json(to_json(defaults))), to_json(defaults));
}

TEST(CliConfigTest, UnknownKeysAreNamed) {
  EXPECT_NE(message_of([] { cli_config_from_json({{"corpsu", Json::object()}}); }).find("corpsu"),
            std::string::npos);
  EXPECT_NE(message_of([] { cli_config_from_json({{"train", {{"stepz", 3}}}}); }).find("stepz"),
            std::string::npos);
  EXPECT_NE(message_of([] { cli_config_from_json({{"corpus", {{"vocab", "x"}}}}); }),
            "");
}

TEST(ApplyOverrideTest, ParsesJsonValuesAndCreatesPaths) {
  Json doc = Json::object();
  apply_override(doc, "train.steps=12");
  apply_override(doc, "train.arch=arch1");
  apply_override(doc, "train.position_periods=[12, 6]");
  apply_override(doc, "corpus.noise_sigma=0.5");
  EXPECT_EQ(doc["train"]["steps"], 12);
  EXPECT_EQ(doc["train"]["arch"], "arch1");
  EXPECT_EQ(doc["train"]["position_periods"].size(), 2u);
  const CliConfig c = cli_config_from_json(doc);
  EXPECT_EQ(c.train.steps, 12u);
  EXPECT_EQ(c.train.model.arch, Arch::kArch1);
  EXPECT_EQ(c.corpus.noise_sigma, 0.5);

  EXPECT_THROW(apply_override(doc, "no-equals"), ConfigError);
  EXPECT_THROW(apply_override(doc, "train..steps=1"), ConfigError);
  EXPECT_THROW(apply_override(doc, "train.steps.deeper=1"), ConfigError);
}

TEST(LoadCliConfigTest, FileAndOverrides) {
  const fs::path path = fs::temp_directory_path() / "hflow_config_test.json";
  write_text_file(path, R"({"corpus": {"n_train": 9}, "train": {"steps": 4}})");
  const CliConfig c = load_cli_config(path, {"train.steps=7"});
  EXPECT_EQ(c.corpus.n_train, 9u);
  EXPECT_EQ(c.train.steps, 7u);
  EXPECT_EQ(read_text_file(path), R"({"corpus": {"n_train": 9}, "train": {"steps": 4}})");

  write_text_file(path, "{broken");
  EXPECT_THROW(load_cli_config(path), ConfigError);
  fs::remove(path);
  EXPECT_THROW(load_cli_config(path), IoError);
  // No file: defaults plus overrides.
  EXPECT_EQ(load_cli_config("", {"train.seed=5"}).train.seed, 5u);
}

}  // namespace
}  // namespace hflow
