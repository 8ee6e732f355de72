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

// A toroidal 2D world of sprites moving at constant integer velocities,
// observed through a square window that the agent translates every step.

#ifndef FLOWM_ENV_HPP_
#define FLOWM_ENV_HPP_

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "flowm/flow.hpp"
#include "flowm/grid.hpp"

namespace flowm::env {

using Rng = std::mt19937_64;

enum class Subset { kDynamicFoNoSm, kDynamicFo, kStaticPo, kDynamicPo };

std::string_view to_string(Subset s);
Subset parse_subset(std::string_view name);

enum class SpriteSource { kProcedural, kIdx };

std::string_view to_string(SpriteSource s);
SpriteSource parse_sprite_source(std::string_view name);

// View translation applied after a frame is observed.
struct Action {
  int ax = 0;
  int ay = 0;

  flow::Velocity as_velocity() const { return {ax, ay}; }
  friend bool operator==(const Action&, const Action&) = default;
};

struct DatasetConfig {
  Subset subset = Subset::kDynamicPo;
  int world_size = 50;
  int window_size = 32;
  int n_sprites = 5;
  int self_motion_range = 10;
  // Sprite velocity components are drawn from [-velocity_range, velocity_range].
  int velocity_range = 2;
  int n_frames = 70;
  int sprite_size = 28;
  SpriteSource sprite_source = SpriteSource::kProcedural;
  // IDX image archive, used when sprite_source is kIdx.
  std::string idx_path;

  // Generation parameters of each subset at full scale.
  static DatasetConfig for_subset(Subset s);

  bool has_self_motion() const { return self_motion_range > 0; }
  bool has_dynamics() const { return velocity_range > 0; }
  bool partially_observed() const { return window_size < world_size; }

  // Throws ConfigError.
  void validate() const;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct Sprite {
  grid::Field bitmap;  // 1 x s x s, values in [0, 1]
  int y = 0;           // top-left corner on the torus
  int x = 0;
  flow::Velocity velocity;
};

struct WorldState {
  int world_size = 0;
  std::vector<Sprite> sprites;
  int time = 0;
};

struct AgentState {
  int origin_y = 0;  // top-left of the view on the torus
  int origin_x = 0;
  int window_size = 0;
};

struct Episode {
  std::vector<grid::Field> frames;  // each 1 x window x window
  std::vector<Action> actions;      // actions[t] moves the view between t and t+1
  std::uint64_t seed = 0;
  int window = 0;
  int world = 0;

  friend bool operator==(const Episode&, const Episode&) = default;
};

// Sprite bitmaps: procedural digit-like glyphs or images loaded from an IDX
// archive.
class SpriteBank {
 public:
  // Procedural glyphs of the given size.
  explicit SpriteBank(int sprite_size);
  // Images from an IDX (ubyte, rank 3) file. Throws IoError / FormatError.
  static SpriteBank from_idx(const std::filesystem::path& path);
  static SpriteBank for_config(const DatasetConfig& cfg);

  grid::Field draw(Rng& rng) const;

  int sprite_size() const { return size_; }
  std::size_t image_count() const { return images_.size(); }

 private:
  int size_ = 0;
  std::vector<grid::Field> images_;
};

// Random digit-like stroke glyph (or, occasionally, a connected blob).
grid::Field procedural_glyph(Rng& rng, int size);

struct World {
  WorldState world;
  AgentState agent;
};

World init_world(const DatasetConfig& cfg, Rng& rng, const SpriteBank& bank);

WorldState step_world(WorldState w);

// Shifts every sprite by (dx, dy).
WorldState translate_world(WorldState w, int dx, int dy);

Action sample_action(Rng& rng, int range);

AgentState move_agent(AgentState agent, const Action& a, int world_size);

// Full canvas: sprites composited by per-pixel max on black.
grid::Field render(const WorldState& w);

grid::Field observe(const WorldState& w, const AgentState& agent);

// round(255 * clamp(v, 0, 1)) / 255 elementwise.
grid::Field quantize(const grid::Field& f);

Episode generate_episode(const DatasetConfig& cfg, std::uint64_t seed);
Episode generate_episode(const DatasetConfig& cfg, std::uint64_t seed,
                         const SpriteBank& bank);

// Binary container "FWM1"; see README for the byte layout.
void write_dataset(const std::filesystem::path& path,
                   const std::vector<Episode>& episodes);
std::vector<Episode> read_dataset(const std::filesystem::path& path);

// Size of the file write_dataset produces.
std::uint64_t dataset_file_size(const std::vector<Episode>& episodes);

}  // namespace flowm::env

#endif  // FLOWM_ENV_HPP_
