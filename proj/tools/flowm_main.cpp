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

// flowm: command-line front end over the C API.

#include <cstdint>
#include <cstdio>
#include <deque>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flowm/flowm.h"

namespace {

// A flag that, when given, overrides one configuration key.
struct Override {
  const CLI::App* owner;
  CLI::Option* opt;
  std::string key;
  std::string value;
};

class Overrides {
 public:
  void add(CLI::App* app, const std::string& flag, const std::string& key,
           const std::string& help) {
    items_.push_back({app, nullptr, key, {}});
    items_.back().opt = app->add_option(flag, items_.back().value, help + " [" + key + "]");
  }
  void add_flag(CLI::App* app, const std::string& flag, const std::string& key,
                const std::string& value, const std::string& help) {
    items_.push_back({app, nullptr, key, value});
    items_.back().opt = app->add_flag(flag, help);
  }
  // Applies flags given on the command line of `app` in declaration order.
  bool apply(flowm_config* cfg, const CLI::App* app) const {
    for (const Override& o : items_) {
      if (o.owner != app || o.opt->count() == 0) continue;
      if (flowm_config_set(cfg, o.key.c_str(), o.value.c_str()) != FLOWM_OK) return false;
    }
    return true;
  }

 private:
  std::deque<Override> items_;
};

void print_line(const char* line, void*) {
  std::printf("%s\n", line);
  std::fflush(stdout);
}

int report_error(flowm_status s) {
  std::fprintf(stderr, "flowm: error: %s\n", flowm_last_error());
  return static_cast<int>(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow equivariant world models"};
  app.set_version_flag("--version", std::string(flowm_version()));
  app.require_subcommand(1);

  Overrides ov;
  std::string config_path, out, data;
  std::vector<std::string> sets;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "configuration file")->check(CLI::ExistingFile);
    sub->add_option("--set", sets, "override any configuration key (section.key=value)");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate train/val datasets");
  common(gen);
  gen->add_option("--out", out, "output directory")->required();
  ov.add(gen, "--subset", "env.subset", "dataset subset");
  ov.add(gen, "--world", "env.world_size", "world size");
  ov.add(gen, "--window", "env.window_size", "view window size");
  ov.add(gen, "--sprites", "env.n_sprites", "sprites per episode");
  ov.add(gen, "--frames", "env.n_frames", "frames per episode");
  ov.add(gen, "--episodes", "env.episodes", "training episodes");
  ov.add(gen, "--val-episodes", "env.val_episodes", "validation episodes");
  ov.add(gen, "--seed", "env.seed", "dataset seed");
  ov.add(gen, "--sprite-source", "env.sprite_source", "procedural or idx");

  CLI::App* trn = app.add_subcommand("train", "train a model with BPTT");
  common(trn);
  trn->add_option("--data", data, "dataset directory or file")->required();
  trn->add_option("--out", out, "output directory")->required();
  ov.add(trn, "--seed", "train.seed", "initialisation and shuffle seed");
  ov.add(trn, "--epochs", "train.epochs", "epochs");
  ov.add(trn, "--ablation", "model.ablation", "full|no-vc|no-sme|no-sme-no-vc|action-concat");
  ov.add(trn, "--lr", "train.learning_rate", "learning rate");
  ov.add(trn, "--max-steps", "train.max_steps", "stop after this many steps (0: no limit)");
  ov.add(trn, "--threads", "train.threads", "worker threads");
  ov.add_flag(trn, "--deterministic", "train.threads", "1", "single-threaded, reproducible run");

  std::vector<std::string> checkpoints;
  CLI::App* evl = app.add_subcommand("eval", "evaluate checkpoints against the all-black baseline");
  common(evl);
  evl->add_option("--checkpoint", checkpoints, "checkpoint path or label=path (repeatable)")
      ->required();
  evl->add_option("--data", data, "dataset directory or file")->required();
  evl->add_option("--out", out, "output directory")->required();
  ov.add(evl, "--horizons", "eval.horizons", "comma-separated horizons");
  ov.add(evl, "--episodes", "eval.episodes", "limit the number of episodes (0: all)");
  ov.add(evl, "--threads", "train.threads", "worker threads");

  std::string suite = "all";
  std::uint64_t seed = 0;
  int trials = 20;
  CLI::App* ver = app.add_subcommand("verify", "run the exact equivariance checks");
  ver->add_option("--suite", suite, "flow|theorem|closure|relative|all")
      ->check(CLI::IsMember({"flow", "theorem", "closure", "relative", "all"}));
  ver->add_option("--seed", seed, "random seed");
  ver->add_option("--trials", trials, "random trials per check");

  std::string checkpoint;
  int episode = 0, horizon = 0;
  CLI::App* ren = app.add_subcommand("render", "write predicted and true frames as PGM images");
  common(ren);
  ren->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  ren->add_option("--data", data, "dataset directory or file")->required();
  ren->add_option("--out", out, "output directory")->required();
  ren->add_option("--episode", episode, "episode index");
  ren->add_option("--horizon", horizon, "predicted frames (default: first eval horizon)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "flowm: %s\n\n", e.what());
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::fprintf(stderr, "%s", sub->help().c_str());
    return 1;
  }

  if (ver->parsed()) {
    char* report = nullptr;
    const flowm_status s = flowm_verify(suite.c_str(), seed, trials, &report);
    if (report) {
      std::printf("%s", report);
      flowm_string_free(report);
    }
    if (s != FLOWM_OK) return report_error(s);
    return 0;
  }

  CLI::App* sub = app.get_subcommands().front();
  flowm_config* cfg = nullptr;
  flowm_status s = config_path.empty() ? flowm_config_new(&cfg)
                                       : flowm_config_load(config_path.c_str(), &cfg);
  if (s != FLOWM_OK) return report_error(s);
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "flowm: error: --set expects section.key=value, got '%s'\n", kv.c_str());
      flowm_config_free(cfg);
      return 1;
    }
    s = flowm_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (s != FLOWM_OK) break;
  }
  if (s == FLOWM_OK && !ov.apply(cfg, sub)) s = FLOWM_ERR_CONFIG;

  if (s == FLOWM_OK) {
    if (sub == gen) {
      s = flowm_gen_data(cfg, out.c_str(), print_line, nullptr);
    } else if (sub == trn) {
      s = flowm_train(cfg, data.c_str(), out.c_str(), print_line, nullptr);
    } else if (sub == evl) {
      std::vector<const char*> ptrs;
      for (const std::string& c : checkpoints) ptrs.push_back(c.c_str());
      s = flowm_eval(cfg, ptrs.data(), ptrs.size(), data.c_str(), out.c_str(), print_line,
                     nullptr);
    } else if (sub == ren) {
      s = flowm_render(cfg, checkpoint.c_str(), data.c_str(), episode, horizon, out.c_str());
      if (s == FLOWM_OK) std::printf("wrote %s\n", out.c_str());
    }
  }
  flowm_config_free(cfg);
  return s == FLOWM_OK ? 0 : report_error(s);
}
