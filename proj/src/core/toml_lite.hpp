// Copyright 2026 The dpkl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DPKL_CORE_TOML_LITE_HPP_
#define DPKL_CORE_TOML_LITE_HPP_

#include <string>

#include "json.hpp"

namespace dpkl {

// Minimal TOML reader covering the subset used by experiment configs:
// [table] / [table.sub] headers, `key = value` pairs with string, number,
// boolean and flat array values, and # comments. Parses into the same JSON
// object shape the JSON config path produces. Throws ConfigError with a
// line diagnostic on anything outside the subset.
nlohmann::json parse_toml_lite(const std::string& text);

}  // namespace dpkl

#endif  // DPKL_CORE_TOML_LITE_HPP_
