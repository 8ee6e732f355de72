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

#include "flowm/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "binary_io.hpp"
#include "flowm/error.hpp"

namespace flowm::config {

namespace {

const std::vector<std::string>& key_table() {
  static const std::vector<std::string> keys = {
      "env.subset", "env.world_size", "env.window_size", "env.n_sprites",
      "env.self_motion_range", "env.velocity_range", "env.n_frames",
      "env.sprite_size", "env.sprite_source", "env.idx_path", "env.episodes",
      "env.val_episodes", "env.seed",
      "model.hidden_channels", "model.kernel_size", "model.velocity_radius",
      "model.ablation", "model.rollout_input", "model.action_scale",
      "train.learning_rate", "train.batch_size", "train.grad_clip_norm",
      "train.epochs", "train.obs_len", "train.pred_len", "train.seed",
      "train.long_horizon", "train.val_every", "train.val_episodes",
      "train.max_steps", "train.threads", "train.select_on",
      "eval.horizons", "eval.obs_len", "eval.episodes",
  };
  return keys;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string suggestion(const std::string& key) {
  std::string best;
  std::size_t best_d = std::string::npos;
  for (const std::string& k : key_table()) {
    const std::size_t d = edit_distance(key, k);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best_d <= 4 ? " (did you mean '" + best + "'?)" : "";
}

void check_known(const std::string& key, const std::string& where) {
  const auto& keys = key_table();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
    throw ConfigError(where + "unknown key '" + key + "'" + suggestion(key));
  }
}

class Resolver {
 public:
  explicit Resolver(const RawConfig& raw) : raw_(raw) {}

  const RawConfig::Entry* find(const std::string& key) const {
    auto it = raw_.entries.find(key);
    return it == raw_.entries.end() ? nullptr : &it->second;
  }

  std::string where(const RawConfig::Entry& e) const {
    return e.line > 0 ? raw_.source + ":" + std::to_string(e.line) + ": "
                      : "override: ";
  }

  template <typename T>
  void integer(const std::string& key, T& out) const {
    const auto* e = find(key);
    if (e == nullptr) return;
    T v{};
    const char* first = e->value.data();
    const char* last = first + e->value.size();
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || p != last) {
      throw ConfigError(where(*e) + key + ": expected an integer, got '" + e->value + "'");
    }
    out = v;
  }

  void real(const std::string& key, double& out) const {
    const auto* e = find(key);
    if (e == nullptr) return;
    char* end = nullptr;
    const double v = std::strtod(e->value.c_str(), &end);
    if (e->value.empty() || end != e->value.c_str() + e->value.size()) {
      throw ConfigError(where(*e) + key + ": expected a number, got '" + e->value + "'");
    }
    out = v;
  }

  template <typename Fn>
  void parsed(const std::string& key, Fn&& fn) const {
    const auto* e = find(key);
    if (e == nullptr) return;
    try {
      fn(e->value);
    } catch (const ConfigError& err) {
      throw ConfigError(where(*e) + key + ": " + err.what());
    }
  }

  std::string context() const { return raw_.source + ": "; }

 private:
  const RawConfig& raw_;
};

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    int v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size()) {
      throw ConfigError("expected a comma-separated list of integers, got '" + s + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1,
                         prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<std::string> known_keys() { return key_table(); }

RawConfig parse_config(const std::string& text, const std::string& source) {
  RawConfig raw;
  raw.source = source;
  std::string section;
  std::stringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string where = source + ":" + std::to_string(number) + ": ";
    const auto hash = line.find_first_of("#;");
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(body.substr(1, body.size() - 2));
      if (section != "env" && section != "model" && section != "train" && section != "eval") {
        throw ConfigError(where + "unknown section [" + section +
                          "] (expected env, model, train, eval)");
      }
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key=value");
    if (section.empty()) throw ConfigError(where + "key outside of any section");
    const std::string key = section + "." + trim(body.substr(0, eq));
    check_known(key, where);
    const std::string value = trim(body.substr(eq + 1));
    auto [it, inserted] = raw.entries.emplace(key, RawConfig::Entry{value, number});
    if (!inserted) {
      throw ConfigError(where + "duplicate key '" + key + "' (first set on line " +
                        std::to_string(it->second.line) + ")");
    }
  }
  return raw;
}

RawConfig read_config(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = flowm::detail::read_file(path);
  return parse_config(std::string(bytes.begin(), bytes.end()), path.string());
}

void set_override(RawConfig& raw, const std::string& qualified_key,
                  const std::string& value) {
  check_known(qualified_key, "override: ");
  raw.entries[qualified_key] = RawConfig::Entry{value, 0};
}

RunConfig resolve(const RawConfig& raw) {
  const Resolver r(raw);
  RunConfig c;

  env::Subset subset = env::Subset::kDynamicPo;
  r.parsed("env.subset", [&](const std::string& v) { subset = env::parse_subset(v); });
  c.env = env::DatasetConfig::for_subset(subset);
  r.integer("env.world_size", c.env.world_size);
  r.integer("env.window_size", c.env.window_size);
  r.integer("env.n_sprites", c.env.n_sprites);
  r.integer("env.self_motion_range", c.env.self_motion_range);
  r.integer("env.velocity_range", c.env.velocity_range);
  r.integer("env.n_frames", c.env.n_frames);
  r.integer("env.sprite_size", c.env.sprite_size);
  r.parsed("env.sprite_source", [&](const std::string& v) {
    c.env.sprite_source = env::parse_sprite_source(v);
  });
  r.parsed("env.idx_path", [&](const std::string& v) { c.env.idx_path = v; });
  r.integer("env.episodes", c.data.train_episodes);
  r.integer("env.val_episodes", c.data.val_episodes);
  r.integer("env.seed", c.data.seed);
  c.data.val_episodes = c.data.resolved_val_episodes();

  c.model.world_size = c.env.world_size;
  c.model.window_size = c.env.window_size;
  c.model.action_scale = std::max(1, c.env.self_motion_range);
  int radius = 2;
  r.integer("model.hidden_channels", c.model.hidden_channels);
  r.integer("model.kernel_size", c.model.kernel_size);
  r.integer("model.velocity_radius", radius);
  r.integer("model.action_scale", c.model.action_scale);
  if (radius < 0) throw ConfigError(r.context() + "model.velocity_radius must be >= 0");
  c.model.velocities = flow::VelocitySet::square(radius);
  r.parsed("model.ablation", [&](const std::string& v) {
    c.ablation = model::parse_ablation(v);
  });
  c.model.apply_ablation(c.ablation);
  r.parsed("model.rollout_input", [&](const std::string& v) {
    c.model.rollout_input = model::parse_rollout_input(v);
  });

  r.real("train.learning_rate", c.train.learning_rate);
  r.integer("train.batch_size", c.train.batch_size);
  r.real("train.grad_clip_norm", c.train.grad_clip_norm);
  r.integer("train.epochs", c.train.epochs);
  r.integer("train.obs_len", c.train.obs_len);
  r.integer("train.pred_len", c.train.pred_len);
  r.integer("train.seed", c.train.seed);
  r.integer("train.long_horizon", c.train.long_horizon);
  r.integer("train.val_every", c.train.val_every);
  r.integer("train.val_episodes", c.train.val_episodes);
  r.integer("train.max_steps", c.train.max_steps);
  r.integer("train.threads", c.train.threads);
  r.parsed("train.select_on", [&](const std::string& v) {
    if (v != "short" && v != "long") {
      throw ConfigError("train.select_on: expected short or long, got '" + v + "'");
    }
    c.train.select_on_long = v == "long";
  });

  c.eval.obs_len = c.train.obs_len;
  r.parsed("eval.horizons", [&](const std::string& v) { c.eval.horizons = parse_int_list(v); });
  r.integer("eval.obs_len", c.eval.obs_len);
  r.integer("eval.episodes", c.eval.episodes);

  try {
    c.env.validate();
    c.model.validate();
    c.train.validate();
    if (c.data.train_episodes < 0) throw ConfigError("env.episodes must be >= 0");
    if (c.eval.obs_len < 1) throw ConfigError("eval.obs_len must be >= 1");
    if (c.eval.episodes < 0) throw ConfigError("eval.episodes must be >= 0");
    for (int h : c.eval.horizons) {
      if (h < 1) throw ConfigError("eval.horizons must be >= 1");
    }
  } catch (const ConfigError& e) {
    throw ConfigError(r.context() + e.what());
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  return resolve(read_config(path));
}

std::string to_text(const RunConfig& c) {
  std::string s;
  auto kv = [&s](const std::string& k, const std::string& v) { s += k + " = " + v + "\n"; };
  s += "[env]\n";
  kv("subset", std::string(env::to_string(c.env.subset)));
  kv("world_size", std::to_string(c.env.world_size));
  kv("window_size", std::to_string(c.env.window_size));
  kv("n_sprites", std::to_string(c.env.n_sprites));
  kv("self_motion_range", std::to_string(c.env.self_motion_range));
  kv("velocity_range", std::to_string(c.env.velocity_range));
  kv("n_frames", std::to_string(c.env.n_frames));
  kv("sprite_size", std::to_string(c.env.sprite_size));
  kv("sprite_source", std::string(env::to_string(c.env.sprite_source)));
  if (!c.env.idx_path.empty()) kv("idx_path", c.env.idx_path);
  kv("episodes", std::to_string(c.data.train_episodes));
  kv("val_episodes", std::to_string(c.data.resolved_val_episodes()));
  kv("seed", std::to_string(c.data.seed));
  s += "\n[model]\n";
  kv("hidden_channels", std::to_string(c.model.hidden_channels));
  kv("kernel_size", std::to_string(c.model.kernel_size));
  int radius = 0;
  for (const flow::Velocity& v : c.model.velocities) radius = std::max(radius, std::abs(v.vx));
  if (c.ablation == model::Ablation::kFull || c.ablation == model::Ablation::kNoSme) {
    kv("velocity_radius", std::to_string(radius));
  }
  kv("ablation", model::to_string(c.ablation));
  kv("rollout_input", model::to_string(c.model.rollout_input));
  kv("action_scale", std::to_string(c.model.action_scale));
  s += "\n[train]\n";
  kv("learning_rate", num(c.train.learning_rate));
  kv("batch_size", std::to_string(c.train.batch_size));
  kv("grad_clip_norm", num(c.train.grad_clip_norm));
  kv("epochs", std::to_string(c.train.epochs));
  kv("obs_len", std::to_string(c.train.obs_len));
  kv("pred_len", std::to_string(c.train.pred_len));
  kv("seed", std::to_string(c.train.seed));
  kv("long_horizon", std::to_string(c.train.long_horizon));
  kv("val_every", std::to_string(c.train.val_every));
  kv("val_episodes", std::to_string(c.train.val_episodes));
  kv("max_steps", std::to_string(c.train.max_steps));
  kv("threads", std::to_string(c.train.threads));
  kv("select_on", c.train.select_on_long ? "long" : "short");
  s += "\n[eval]\n";
  std::string hs;
  for (std::size_t i = 0; i < c.eval.horizons.size(); ++i) {
    hs += (i ? "," : "") + std::to_string(c.eval.horizons[i]);
  }
  kv("horizons", hs);
  kv("obs_len", std::to_string(c.eval.obs_len));
  kv("episodes", std::to_string(c.eval.episodes));
  return s;
}

}  // namespace flowm::config
