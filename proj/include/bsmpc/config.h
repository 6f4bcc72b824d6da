// Copyright 2026 The bsmpc Authors
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

#ifndef BSMPC_CONFIG_H_
#define BSMPC_CONFIG_H_

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsmpc/trainer.h"

namespace bsmpc {

// Bad config file, unknown key or unparsable override. The message names the
// file line or dotted key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parses JSON text; syntax errors report "<origin>:<line>:<column>".
nlohmann::json parse_json_text(const std::string& text,
                               const std::string& origin);
nlohmann::json read_json_file(const std::filesystem::path& path);

// Merges `patch` into `base`. Every key in `patch` must already exist in
// `base` (dotted path reported otherwise) and keep its JSON kind.
void merge_checked(nlohmann::json& base, const nlohmann::json& patch,
                   const std::string& origin);

// Applies "a.b.c" = value. Values are parsed as JSON when possible, so
// `0.5`, `true` and `"x"` work; anything else is taken as a string.
void apply_override(nlohmann::json& tree, const std::string& dotted,
                    const std::string& value);

// "--planner.population 512" / "--planner.population=512" pairs from
// leftover command-line arguments.
std::vector<std::pair<std::string, std::string>> parse_override_args(
    const std::vector<std::string>& args);

// Defaults <- file (optional) <- overrides, then validated.
TrainConfig resolve_train_config(
    const std::filesystem::path& file,
    const std::vector<std::pair<std::string, std::string>>& overrides);

// "1,2,3" or "4-6" or mixtures.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace bsmpc

#endif  // BSMPC_CONFIG_H_
