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

#include "bsmpc/config.h"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace bsmpc {
namespace {

std::string kind(const nlohmann::json& j) {
  if (j.is_number()) return "number";
  return j.type_name();
}

bool compatible(const nlohmann::json& a, const nlohmann::json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

void merge_at(nlohmann::json& base, const nlohmann::json& patch,
              const std::string& path, const std::string& origin) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) {
      throw ConfigError(origin + ": unknown key '" + key + "'");
    }
    nlohmann::json& slot = base[it.key()];
    if (slot.is_object()) {
      if (!it->is_object()) {
        throw ConfigError(origin + ": key '" + key + "' must be an object");
      }
      merge_at(slot, *it, key, origin);
    } else {
      if (!compatible(slot, *it)) {
        throw ConfigError(origin + ": key '" + key + "' expects a " +
                          kind(slot) + ", got " + kind(*it));
      }
      slot = *it;
    }
  }
}

}  // namespace

nlohmann::json parse_json_text(const std::string& text,
                               const std::string& origin) {
  try {
    return nlohmann::json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string what = e.what();
    const auto colon = what.rfind(": ");
    if (colon != std::string::npos) what = what.substr(colon + 2);
    throw ConfigError(origin + ":" + std::to_string(line) + ":" +
                      std::to_string(col) + ": " + what);
  }
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path.string());
}

void merge_checked(nlohmann::json& base, const nlohmann::json& patch,
                   const std::string& origin) {
  if (!patch.is_object()) {
    throw ConfigError(origin + ": top level must be an object");
  }
  merge_at(base, patch, "", origin);
}

void apply_override(nlohmann::json& tree, const std::string& dotted,
                    const std::string& value) {
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::parse_error&) {
    parsed = value;
  }
  // Build {"a": {"b": value}} and merge it with the usual checks.
  std::vector<std::string> keys;
  std::stringstream ss(dotted);
  std::string key;
  while (std::getline(ss, key, '.')) keys.push_back(key);
  if (keys.empty() || dotted.back() == '.' ||
      std::any_of(keys.begin(), keys.end(),
                  [](const std::string& k) { return k.empty(); })) {
    throw ConfigError("malformed override key '" + dotted + "'");
  }
  nlohmann::json patch = parsed;
  for (auto it = keys.rbegin(); it != keys.rend(); ++it) {
    patch = nlohmann::json{{*it, patch}};
  }
  merge_checked(tree, patch, "override --" + dotted);
}

std::vector<std::pair<std::string, std::string>> parse_override_args(
    const std::vector<std::string>& args) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0 || a.size() <= 2) {
      throw ConfigError("unexpected argument '" + a + "'");
    }
    const std::string body = a.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else {
      if (i + 1 >= args.size()) {
        throw ConfigError("override '" + a + "' has no value");
      }
      out.emplace_back(body, args[++i]);
    }
  }
  return out;
}

TrainConfig resolve_train_config(
    const std::filesystem::path& file,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  nlohmann::json tree = TrainConfig().to_json();
  if (!file.empty()) merge_checked(tree, read_json_file(file), file.string());
  for (const auto& [key, value] : overrides) apply_override(tree, key, value);
  try {
    return TrainConfig::from_json(tree);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (s.empty() || used != s.size() || s[0] == '-') {
      throw ConfigError("bad seed '" + s + "' in '" + text + "'");
    }
    return static_cast<std::uint64_t>(v);
  };
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    if (dash != std::string::npos && dash > 0) {
      const std::uint64_t lo = number(item.substr(0, dash));
      const std::uint64_t hi = number(item.substr(dash + 1));
      if (hi < lo) throw ConfigError("empty seed range '" + item + "'");
      for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    } else {
      seeds.push_back(number(item));
    }
  }
  if (seeds.empty()) throw ConfigError("no seeds in '" + text + "'");
  return seeds;
}

}  // namespace bsmpc
