/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The wavetomo Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <nlohmann/json.hpp>

#include <set>
#include <string>

#include "wavetomo/field.hpp"

namespace wavetomo {

/// Reads typed members of a JSON object. Type errors and, on finish(), unknown keys raise
/// StructuralError naming the offending path.
class JsonReader {
 public:
  JsonReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw StructuralError(where_ + ": expected a JSON object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw StructuralError(path(key) + ": " + e.what());
    }
  }

  /// Sub-object, marked as used; null when absent.
  const nlohmann::json* object(const char* key) {
    used_.insert(key);
    if (!j_.contains(key)) return nullptr;
    if (!j_.at(key).is_object()) throw StructuralError(path(key) + ": expected a JSON object");
    return &j_.at(key);
  }

  void require(bool ok, const char* key, const std::string& what) const {
    if (!ok) throw StructuralError(path(key) + " " + what);
  }

  std::string path(const char* key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!used_.count(key)) throw StructuralError(where_ + ": unknown key '" + key + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> used_;
};

}  // namespace wavetomo
