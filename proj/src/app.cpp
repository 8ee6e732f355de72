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

#include "app.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>

#include "json.hpp"

#include "binary_io.hpp"
#include "flowm/equiv.hpp"
#include "flowm/error.hpp"
#include "flowm/eval.hpp"

namespace flowm::app {

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Manifest {
 public:
  Manifest(std::string subcommand, const config::RunConfig& cfg, std::uint64_t seed)
      : start_(utc_now()) {
    j_["subcommand"] = std::move(subcommand);
    j_["version"] = FLOWM_VERSION;
    j_["seed"] = seed;
    j_["config"] = config::to_text(cfg);
  }
  void input(const std::string& key, const std::string& value) { j_["inputs"][key] = value; }
  void output(const fs::path& p) { j_["outputs"].push_back(p.filename().string()); }
  void write(const fs::path& dir) {
    j_["started"] = start_;
    j_["finished"] = utc_now();
    flowm::detail::write_text_atomic(dir / "manifest.json", j_.dump(2) + "\n");
  }

 private:
  nlohmann::ordered_json j_;
  std::string start_;
};

void say(const LogFn& log, const std::string& s) {
  if (log) log(s);
}

std::vector<env::Episode> load_episodes(const fs::path& file, int limit = 0) {
  std::vector<env::Episode> eps = env::read_dataset(file);
  if (limit > 0 && eps.size() > std::size_t(limit)) eps.resize(limit);
  if (eps.empty()) throw ConfigError(file.string() + ": dataset has no episodes");
  return eps;
}

model::FloWMConfig model_for(const config::RunConfig& cfg, const env::Episode& ep) {
  model::FloWMConfig m = cfg.model;
  m.world_size = ep.world;
  m.window_size = ep.window;
  m.validate();
  return m;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

std::uint64_t episode_seed(std::uint64_t base, int split, std::uint64_t index) {
  return splitmix64(splitmix64(base) ^ splitmix64((std::uint64_t(split) << 48) + index));
}

void gen_data(const config::RunConfig& cfg, const fs::path& out_dir, const LogFn& log) {
  cfg.env.validate();
  fs::create_directories(out_dir);
  Manifest manifest("gen-data", cfg, cfg.data.seed);
  const env::SpriteBank bank = env::SpriteBank::for_config(cfg.env);
  const struct {
    const char* name;
    int split;
    int count;
  } splits[] = {{"train", 0, cfg.data.train_episodes},
                {"val", 1, cfg.data.resolved_val_episodes()}};
  for (const auto& s : splits) {
    std::vector<env::Episode> eps;
    eps.reserve(s.count);
    for (int i = 0; i < s.count; ++i) {
      eps.push_back(env::generate_episode(cfg.env, episode_seed(cfg.data.seed, s.split, i), bank));
    }
    const fs::path file = out_dir / (std::string(s.name) + ".fwm");
    env::write_dataset(file, eps);
    manifest.output(file);
    say(log, "wrote " + file.string() + " (" + std::to_string(s.count) + " episodes)");
  }
  manifest.write(out_dir);
}

fs::path dataset_file(const fs::path& data, const std::string& name) {
  if (fs::is_directory(data)) return data / (name + ".fwm");
  return data;
}

void train(const config::RunConfig& cfg, const fs::path& data, const fs::path& out_dir,
           const LogFn& log) {
  const fs::path train_file = dataset_file(data, "train");
  const std::vector<env::Episode> train_set = load_episodes(train_file);
  std::vector<env::Episode> val_set;
  const fs::path val_file = dataset_file(data, "val");
  if (fs::is_directory(data) && fs::exists(val_file)) val_set = env::read_dataset(val_file);
  const model::FloWMConfig m = model_for(cfg, train_set.front());

  fs::create_directories(out_dir);
  Manifest manifest("train", cfg, cfg.train.seed);
  manifest.input("train_data", train_file.string());
  if (!val_set.empty()) manifest.input("val_data", val_file.string());
  say(log, "training " + model::to_string(cfg.ablation) + " on " +
               std::to_string(train_set.size()) + " episodes, " +
               std::to_string(model::zero_params(m).count()) + " parameters");
  const auto t0 = std::chrono::steady_clock::now();
  const train::TrainResult r = train::train(
      m, cfg.train, train_set, val_set, out_dir, [&](const train::MetricsRow& row) {
        if (!row.val_mse_short && row.step % 10 != 0) return;
        std::string line = "step " + std::to_string(row.step) + " epoch " +
                           std::to_string(row.epoch);
        if (row.train_loss) line += fmt(" loss %.5f", *row.train_loss);
        if (row.val_mse_short) line += fmt(" val_mse %.6f", *row.val_mse_short);
        if (row.val_mse_long) line += fmt(" val_mse_long %.6f", *row.val_mse_long);
        const double secs = std::chrono::duration<double>(
                                std::chrono::steady_clock::now() - t0).count();
        say(log, line + fmt(" (%.0fs)", secs));
      });
  for (const char* f : {"metrics.csv", "best.ckpt", "final.ckpt"}) manifest.output(out_dir / f);
  manifest.write(out_dir);
  say(log, "done after " + std::to_string(r.steps) + " steps; best val_mse " +
               fmt("%.6f", r.best_val_mse));
}

namespace {

eval::ModelEntry load_entry(const std::string& spec) {
  std::string label, path = spec;
  if (const auto eq = spec.find('='); eq != std::string::npos) {
    label = spec.substr(0, eq);
    path = spec.substr(eq + 1);
  }
  model::Checkpoint ck = model::load_checkpoint(path);
  if (label.empty()) label = model::to_string(ck.config.ablation());
  return {label, ck.config, std::move(ck.params)};
}

}  // namespace

void evaluate(const config::RunConfig& cfg, const std::vector<std::string>& checkpoints,
              const fs::path& data, const fs::path& out_dir, const LogFn& log) {
  const fs::path file = dataset_file(data, "val");
  const std::vector<env::Episode> eps = load_episodes(file, cfg.eval.episodes);
  std::vector<eval::ModelEntry> models;
  for (const std::string& spec : checkpoints) {
    models.push_back(load_entry(spec));
    for (std::size_t i = 0; i + 1 < models.size(); ++i) {
      if (models[i].label == models.back().label) {
        models.back().label += "#" + std::to_string(models.size());
      }
    }
  }
  const eval::Evaluation e =
      eval::evaluate(models, eps, cfg.eval.obs_len, cfg.eval.horizons, cfg.train.threads);
  fs::create_directories(out_dir);
  Manifest manifest("eval", cfg, cfg.train.seed);
  manifest.input("data", file.string());
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    manifest.input("checkpoint_" + models[i].label, checkpoints[i]);
  }
  flowm::detail::write_text_atomic(out_dir / "metrics.csv", eval::metrics_csv(e));
  const std::string summary = eval::summary_csv(e);
  flowm::detail::write_text_atomic(out_dir / "summary.csv", summary);
  manifest.output(out_dir / "metrics.csv");
  manifest.output(out_dir / "summary.csv");
  manifest.write(out_dir);
  say(log, summary);
}

void render(const config::RunConfig& cfg, const std::string& checkpoint,
            const fs::path& data, int episode, int horizon, const fs::path& out_dir) {
  const fs::path file = dataset_file(data, "val");
  const std::vector<env::Episode> eps = load_episodes(file);
  if (episode < 0 || std::size_t(episode) >= eps.size()) {
    throw ConfigError("render: episode " + std::to_string(episode) + " out of range (dataset has " +
                      std::to_string(eps.size()) + ")");
  }
  const eval::ModelEntry m = load_entry(checkpoint);
  Manifest manifest("render", cfg, cfg.train.seed);
  manifest.input("data", file.string());
  manifest.input("checkpoint", checkpoint);
  manifest.input("episode", std::to_string(episode));
  if (horizon <= 0) horizon = cfg.eval.horizons.front();
  eval::render_rollout(m, eps[episode], cfg.eval.obs_len, horizon, out_dir);
  manifest.output(out_dir / "strip.pgm");
  manifest.write(out_dir);
}

VerifyOutcome verify(const std::string& suite, std::uint64_t seed, int trials) {
  const equiv::EquivReport r = equiv::run_suite(suite, seed, trials);
  return {r.all_passed(), r.table()};
}

}  // namespace flowm::app
