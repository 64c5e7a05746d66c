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

#include <fstream>
#include <iterator>
#include <sstream>

namespace hflow {

CliConfig cli_config_from_json(const Json& j) {
  CliConfig c;
  StrictObject o(j, "");
  if (const Json* corpus = o.child("corpus")) c.corpus = corpus_spec_from_json(*corpus, "corpus");
  if (const Json* train = o.child("train")) c.train = train_config_from_json(*train, "train");
  o.finish();
  return c;
}

Json to_json(const CliConfig& c) {
  return {{"corpus", to_json(c.corpus)}, {"train", to_json(c.train)}};
}

void apply_override(Json& document, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  Json* node = &document;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError("override path '" + path + "' crosses a non-object");
      *node = Json::object();
    }
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

CliConfig load_cli_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides) {
  Json doc = Json::object();
  if (!path.empty()) {
    const std::string text = read_text_file(path);
    try {
      doc = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  for (const std::string& o : overrides) apply_override(doc, o);
  return cli_config_from_json(doc);
}

}  // namespace hflow
