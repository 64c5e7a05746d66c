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

// Experiment configuration file for the command-line tool.
//
//   {
//     "corpus": { ...CorpusSpec keys... },
//     "train":  { ...TrainConfig and ModelConfig keys... }
//   }
//
// Both sections and every key are optional; unknown keys are rejected.

#ifndef HFLOW_CONFIG_H_
#define HFLOW_CONFIG_H_

#include <filesystem>
#include <string>
#include <vector>

#include "hflow/json_io.h"
#include "hflow/synthdata.h"
#include "hflow/training.h"

namespace hflow {

struct CliConfig {
  CorpusSpec corpus;
  TrainConfig train;
};

CliConfig cli_config_from_json(const Json& j);
Json to_json(const CliConfig& config);

// Applies "dotted.path=value" to a JSON document. The value is parsed as
// JSON when possible and taken as a string otherwise.
void apply_override(Json& document, const std::string& assignment);

// Reads `path` (or starts from {} when empty), applies overrides in order and
// parses the result. ConfigError on bad content, IoError on unreadable files.
CliConfig load_cli_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides = {});

// Whole-file read and write helpers raising IoError.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace hflow

#endif  // HFLOW_CONFIG_H_
