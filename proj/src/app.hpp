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

// Subcommand implementations behind the C API. Every run directory receives a
// manifest.json describing the resolved configuration and outputs.

#ifndef FLOWM_SRC_APP_HPP_
#define FLOWM_SRC_APP_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "flowm/config.hpp"

namespace flowm::app {

using LogFn = std::function<void(const std::string&)>;

std::uint64_t episode_seed(std::uint64_t base, int split, std::uint64_t index);

// Writes train.fwm and val.fwm.
void gen_data(const config::RunConfig& cfg, const std::filesystem::path& out_dir,
              const LogFn& log = {});

// A directory resolves to <dir>/<name>.fwm; a file is used as is.
std::filesystem::path dataset_file(const std::filesystem::path& data,
                                   const std::string& name);

void train(const config::RunConfig& cfg, const std::filesystem::path& data,
           const std::filesystem::path& out_dir, const LogFn& log = {});

// Checkpoint specs are "path" or "label=path".
void evaluate(const config::RunConfig& cfg,
              const std::vector<std::string>& checkpoints,
              const std::filesystem::path& data,
              const std::filesystem::path& out_dir, const LogFn& log = {});

// horizon <= 0 uses the first evaluation horizon.
void render(const config::RunConfig& cfg, const std::string& checkpoint,
            const std::filesystem::path& data, int episode, int horizon,
            const std::filesystem::path& out_dir);

struct VerifyOutcome {
  bool passed = false;
  std::string table;
};

VerifyOutcome verify(const std::string& suite, std::uint64_t seed, int trials);

}  // namespace flowm::app

#endif  // FLOWM_SRC_APP_HPP_
