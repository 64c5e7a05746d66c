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

#ifndef HFLOW_JSON_IO_H_
#define HFLOW_JSON_IO_H_

#include <set>
#include <stdexcept>
#include <string>
#include <utility>

#include "json.hpp"

namespace hflow {

using Json = nlohmann::json;

// Bad configuration or malformed structured input. what() names the
// offending key or line.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reads fields of a JSON object, keeping defaults for absent keys and
// rejecting keys that were never asked for.
class StrictObject {
 public:
  StrictObject(const Json& object, std::string path)
      : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) {
      throw ConfigError(where() + " must be a JSON object");
    }
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = object_.find(key);
    if (it == object_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad value for key '" + qualified(key) + "': " +
                        e.what());
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = object_.find(key);
    return it == object_.end() ? nullptr : &*it;
  }

  std::string qualified(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  // Throws ConfigError naming the first unknown key.
  void finish() const {
    for (auto it = object_.begin(); it != object_.end(); ++it) {
      if (!seen_.contains(it.key())) {
        throw ConfigError("unknown config key '" + qualified(it.key()) + "'");
      }
    }
  }

 private:
  std::string where() const { return path_.empty() ? "document" : path_; }

  const Json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace hflow

#endif  // HFLOW_JSON_IO_H_
