// Copyright 2026 The FloWM Authors
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

// Plain key=value run configuration with [env] [model] [train] [eval]
// sections. Command-line flags are applied as overrides before resolution.

#ifndef FLOWM_CONFIG_HPP_
#define FLOWM_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "flowm/env.hpp"
#include "flowm/model.hpp"
#include "flowm/train.hpp"

namespace flowm::config {

struct DataSplit {
  int train_episodes = 1000;
  // Defaults to a tenth of train_episodes when unset.
  int val_episodes = -1;
  std::uint64_t seed = 0;

  int resolved_val_episodes() const {
    return val_episodes >= 0 ? val_episodes : train_episodes / 10;
  }
  friend bool operator==(const DataSplit&, const DataSplit&) = default;
};

struct EvalConfig {
  std::vector<int> horizons = {20, 150};
  int obs_len = 50;
  // Evaluate only the first this many episodes; 0 means all.
  int episodes = 0;
  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct RunConfig {
  env::DatasetConfig env = env::DatasetConfig::for_subset(env::Subset::kDynamicPo);
  DataSplit data;
  model::FloWMConfig model;
  model::Ablation ablation = model::Ablation::kFull;
  train::TrainConfig train;
  EvalConfig eval;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Raw "section.key" -> value, with source line numbers for messages.
struct RawConfig {
  struct Entry {
    std::string value;
    int line = 0;  // 0 for overrides
  };
  std::map<std::string, Entry> entries;
  std::string source = "<defaults>";
};

RawConfig parse_config(const std::string& text, const std::string& source);
RawConfig read_config(const std::filesystem::path& path);

// Sets "section.key"; rejects unknown keys.
void set_override(RawConfig& raw, const std::string& qualified_key,
                  const std::string& value);

// Subset-dependent env defaults first, then explicit keys. Model extents follow
// the env block; the velocity set and flags follow the ablation.
RunConfig resolve(const RawConfig& raw);

RunConfig load_config(const std::filesystem::path& path);

// Fully resolved values in the same key=value format.
std::string to_text(const RunConfig& c);

std::vector<std::string> known_keys();

// Levenshtein distance, used for "did you mean" suggestions.
std::size_t edit_distance(const std::string& a, const std::string& b);

}  // namespace flowm::config

#endif  // FLOWM_CONFIG_HPP_
