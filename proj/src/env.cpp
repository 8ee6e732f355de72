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

#include "flowm/env.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "binary_io.hpp"
#include "flowm/error.hpp"

namespace flowm::env {
namespace {

constexpr std::string_view kDatasetMagic = "FWM1";
constexpr std::uint32_t kDatasetVersion = 1;

int wrap(int i, int n) {
  int r = i % n;
  return r < 0 ? r + n : r;
}

int uniform(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

double uniform_real(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

struct Point {
  double x;
  double y;
};

double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - p.x;
  const double ey = a.y + t * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

// Seven-segment masks (a b c d e f g, bit 0 = a) for the digits 0..9.
constexpr std::array<std::uint8_t, 10> kDigitSegments = {
    0b0111111, 0b0000110, 0b1011011, 0b1001111, 0b1100110,
    0b1101101, 0b1111101, 0b0000111, 0b1111111, 0b1101111};

}  // namespace

std::string_view to_string(Subset s) {
  switch (s) {
    case Subset::kDynamicFoNoSm:
      return "dynamic_fo_no_sm";
    case Subset::kDynamicFo:
      return "dynamic_fo";
    case Subset::kStaticPo:
      return "static_po";
    case Subset::kDynamicPo:
      return "dynamic_po";
  }
  return "?";
}

Subset parse_subset(std::string_view name) {
  for (Subset s : {Subset::kDynamicFoNoSm, Subset::kDynamicFo, Subset::kStaticPo,
                   Subset::kDynamicPo}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown subset '" + std::string(name) +
                    "' (expected dynamic_fo_no_sm, dynamic_fo, static_po, dynamic_po)");
}

std::string_view to_string(SpriteSource s) {
  return s == SpriteSource::kProcedural ? "procedural" : "idx";
}

SpriteSource parse_sprite_source(std::string_view name) {
  if (name == "procedural") return SpriteSource::kProcedural;
  if (name == "idx") return SpriteSource::kIdx;
  throw ConfigError("unknown sprite source '" + std::string(name) +
                    "' (expected procedural or idx)");
}

DatasetConfig DatasetConfig::for_subset(Subset s) {
  DatasetConfig c;
  c.subset = s;
  switch (s) {
    case Subset::kDynamicFoNoSm:
      c.world_size = 32;
      c.window_size = 32;
      c.n_sprites = 3;
      c.self_motion_range = 0;
      c.velocity_range = 2;
      break;
    case Subset::kDynamicFo:
      c.world_size = 32;
      c.window_size = 32;
      c.n_sprites = 3;
      c.self_motion_range = 10;
      c.velocity_range = 2;
      break;
    case Subset::kStaticPo:
      c.world_size = 50;
      c.window_size = 32;
      c.n_sprites = 5;
      c.self_motion_range = 10;
      c.velocity_range = 0;
      break;
    case Subset::kDynamicPo:
      c.world_size = 50;
      c.window_size = 32;
      c.n_sprites = 5;
      c.self_motion_range = 10;
      c.velocity_range = 2;
      break;
  }
  return c;
}

void DatasetConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("dataset config: " + m); };
  if (world_size < 1 || world_size > 4096) fail("world_size must be in [1, 4096]");
  if (window_size < 1) fail("window_size must be >= 1");
  if (window_size > world_size) fail("window_size exceeds world_size");
  if (n_sprites < 1) fail("n_sprites must be >= 1");
  if (n_frames < 1) fail("n_frames must be >= 1");
  if (self_motion_range < 0) fail("self_motion_range must be >= 0");
  if (self_motion_range > std::numeric_limits<std::int16_t>::max()) {
    fail("self_motion_range does not fit the action encoding");
  }
  if (velocity_range < 0) fail("velocity_range must be >= 0");
  if (sprite_size < 1) fail("sprite_size must be >= 1");
  if (sprite_source == SpriteSource::kIdx && idx_path.empty()) {
    fail("sprite_source=idx requires idx_path");
  }
  // The subset name pins which of the three axes are active.
  const bool po = partially_observed();
  switch (subset) {
    case Subset::kDynamicFoNoSm:
      if (po || has_self_motion() || !has_dynamics()) {
        fail("dynamic_fo_no_sm needs window == world, no self-motion, nonzero velocities");
      }
      break;
    case Subset::kDynamicFo:
      if (po || !has_self_motion() || !has_dynamics()) {
        fail("dynamic_fo needs window == world, self-motion, nonzero velocities");
      }
      break;
    case Subset::kStaticPo:
      if (!po || !has_self_motion() || has_dynamics()) {
        fail("static_po needs window < world, self-motion, zero velocities");
      }
      break;
    case Subset::kDynamicPo:
      if (!po || !has_self_motion() || !has_dynamics()) {
        fail("dynamic_po needs window < world, self-motion, nonzero velocities");
      }
      break;
  }
}

grid::Field procedural_glyph(Rng& rng, int size) {
  grid::Field g(1, size, size);
  const double s = size;
  auto stamp_segment = [&](Point a, Point b, double radius) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double d = segment_distance({x + 0.5, y + 0.5}, a, b);
        const double v = std::clamp(radius - d + 0.5, 0.0, 1.0);
        g.at(0, y, x) = std::max(g.at(0, y, x), v);
      }
    }
  };

  if (uniform(rng, 0, 4) == 0) {
    // Connected blob: a short random walk of overlapping discs.
    Point p{s * uniform_real(rng, 0.35, 0.65), s * uniform_real(rng, 0.35, 0.65)};
    const int steps = uniform(rng, 3, 6);
    const double radius = s * uniform_real(rng, 0.08, 0.14);
    for (int i = 0; i < steps; ++i) {
      Point q{std::clamp(p.x + s * uniform_real(rng, -0.25, 0.25), s * 0.2, s * 0.8),
              std::clamp(p.y + s * uniform_real(rng, -0.25, 0.25), s * 0.2, s * 0.8)};
      stamp_segment(p, q, radius);
      p = q;
    }
    return g;
  }

  // Seven-segment digit with jittered anchors, random slant and stroke width.
  const int digit = uniform(rng, 0, 9);
  const double j = 0.06;
  const double slant = uniform_real(rng, -0.12, 0.12);
  auto anchor = [&](double x, double y) {
    const double ax = x + uniform_real(rng, -j, j) + slant * (0.5 - y);
    const double ay = y + uniform_real(rng, -j, j);
    return Point{ax * s, ay * s};
  };
  // tl, tr, ml, mr, bl, br
  const Point tl = anchor(0.25, 0.18), tr = anchor(0.75, 0.18);
  const Point ml = anchor(0.25, 0.50), mr = anchor(0.75, 0.50);
  const Point bl = anchor(0.25, 0.82), br = anchor(0.75, 0.82);
  const std::array<std::pair<Point, Point>, 7> segments = {{
      {tl, tr}, {tr, mr}, {mr, br}, {bl, br}, {ml, bl}, {tl, ml}, {ml, mr}}};
  const double radius = std::max(0.6, s * uniform_real(rng, 0.05, 0.08));
  for (int i = 0; i < 7; ++i) {
    if (kDigitSegments[digit] & (1u << i)) {
      stamp_segment(segments[i].first, segments[i].second, radius);
    }
  }
  return g;
}

SpriteBank::SpriteBank(int sprite_size) : size_(sprite_size) {
  if (sprite_size < 1) throw ConfigError("sprite_size must be >= 1");
}

SpriteBank SpriteBank::from_idx(const std::filesystem::path& path) {
  const auto buf = detail::read_file(path);
  // IDX headers are big-endian: 0x00 0x00 type rank, then rank u32 extents.
  if (buf.size() < 16 || buf[0] != 0 || buf[1] != 0 || buf[2] != 0x08 || buf[3] != 3) {
    throw FormatError(path.string() + ": not an unsigned-byte rank-3 IDX file");
  }
  auto be32 = [&](std::size_t off) {
    return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) |
           (std::uint32_t{buf[off + 2]} << 8) | std::uint32_t{buf[off + 3]};
  };
  const std::uint32_t n = be32(4), rows = be32(8), cols = be32(12);
  if (rows != cols || rows == 0 || n == 0) {
    throw FormatError(path.string() + ": expected non-empty square images");
  }
  const std::uint64_t need = 16 + std::uint64_t{n} * rows * cols;
  if (buf.size() < need) throw TruncatedError(path.string() + ": truncated IDX payload");
  SpriteBank bank(static_cast<int>(rows));
  bank.images_.reserve(n);
  std::size_t off = 16;
  for (std::uint32_t i = 0; i < n; ++i) {
    grid::Field f(1, static_cast<int>(rows), static_cast<int>(cols));
    for (double& v : f.data) v = buf[off++] / 255.0;
    bank.images_.push_back(std::move(f));
  }
  return bank;
}

SpriteBank SpriteBank::for_config(const DatasetConfig& cfg) {
  if (cfg.sprite_source == SpriteSource::kIdx) return from_idx(cfg.idx_path);
  return SpriteBank(cfg.sprite_size);
}

grid::Field SpriteBank::draw(Rng& rng) const {
  if (images_.empty()) return procedural_glyph(rng, size_);
  const auto i = std::uniform_int_distribution<std::size_t>(0, images_.size() - 1)(rng);
  return images_[i];
}

World init_world(const DatasetConfig& cfg, Rng& rng, const SpriteBank& bank) {
  cfg.validate();
  World out;
  out.world.world_size = cfg.world_size;
  out.world.sprites.reserve(cfg.n_sprites);
  for (int i = 0; i < cfg.n_sprites; ++i) {
    Sprite s;
    s.bitmap = bank.draw(rng);
    s.y = uniform(rng, 0, cfg.world_size - 1);
    s.x = uniform(rng, 0, cfg.world_size - 1);
    if (cfg.has_dynamics()) {
      s.velocity.vx = uniform(rng, -cfg.velocity_range, cfg.velocity_range);
      s.velocity.vy = uniform(rng, -cfg.velocity_range, cfg.velocity_range);
    }
    out.world.sprites.push_back(std::move(s));
  }
  out.agent.window_size = cfg.window_size;
  out.agent.origin_y = uniform(rng, 0, cfg.world_size - 1);
  out.agent.origin_x = uniform(rng, 0, cfg.world_size - 1);
  return out;
}

WorldState step_world(WorldState w) {
  for (Sprite& s : w.sprites) {
    s.x = wrap(s.x + s.velocity.vx, w.world_size);
    s.y = wrap(s.y + s.velocity.vy, w.world_size);
  }
  ++w.time;
  return w;
}

WorldState translate_world(WorldState w, int dx, int dy) {
  for (Sprite& s : w.sprites) {
    s.x = wrap(s.x + dx, w.world_size);
    s.y = wrap(s.y + dy, w.world_size);
  }
  return w;
}

Action sample_action(Rng& rng, int range) {
  if (range < 0) throw ConfigError("action range must be >= 0");
  if (range == 0) return {};
  const int ax = uniform(rng, -range, range);
  const int ay = uniform(rng, -range, range);
  return {ax, ay};
}

AgentState move_agent(AgentState agent, const Action& a, int world_size) {
  agent.origin_x = wrap(agent.origin_x + a.ax, world_size);
  agent.origin_y = wrap(agent.origin_y + a.ay, world_size);
  return agent;
}

grid::Field render(const WorldState& w) {
  const int n = w.world_size;
  grid::Field canvas(1, n, n);
  for (const Sprite& s : w.sprites) {
    for (int y = 0; y < s.bitmap.height; ++y) {
      const int cy = wrap(s.y + y, n);
      for (int x = 0; x < s.bitmap.width; ++x) {
        double& dst = canvas.at(0, cy, wrap(s.x + x, n));
        dst = std::max(dst, s.bitmap.at(0, y, x));
      }
    }
  }
  return canvas;
}

grid::Field observe(const WorldState& w, const AgentState& agent) {
  const grid::Field canvas = render(w);
  const int n = w.world_size;
  const int k = agent.window_size;
  grid::Field frame(1, k, k);
  for (int y = 0; y < k; ++y) {
    for (int x = 0; x < k; ++x) {
      frame.at(0, y, x) = canvas.at(0, wrap(agent.origin_y + y, n),
                                    wrap(agent.origin_x + x, n));
    }
  }
  return frame;
}

grid::Field quantize(const grid::Field& f) {
  grid::Field out = f;
  for (double& v : out.data) v = std::round(255.0 * std::clamp(v, 0.0, 1.0)) / 255.0;
  return out;
}

Episode generate_episode(const DatasetConfig& cfg, std::uint64_t seed) {
  return generate_episode(cfg, seed, SpriteBank::for_config(cfg));
}

Episode generate_episode(const DatasetConfig& cfg, std::uint64_t seed,
                         const SpriteBank& bank) {
  cfg.validate();
  Rng rng(seed);
  World state = init_world(cfg, rng, bank);
  Episode ep;
  ep.seed = seed;
  ep.window = cfg.window_size;
  ep.world = cfg.world_size;
  ep.frames.reserve(cfg.n_frames);
  ep.actions.reserve(cfg.n_frames);
  for (int t = 0; t < cfg.n_frames; ++t) {
    ep.frames.push_back(quantize(observe(state.world, state.agent)));
    const Action a = sample_action(rng, cfg.self_motion_range);
    ep.actions.push_back(a);
    state.agent = move_agent(state.agent, a, cfg.world_size);
    state.world = step_world(std::move(state.world));
  }
  return ep;
}

std::uint64_t dataset_file_size(const std::vector<Episode>& episodes) {
  std::uint64_t size = 4 + 4 + 4;
  for (const Episode& ep : episodes) {
    const std::uint64_t n = ep.frames.size();
    const std::uint64_t c = ep.frames.empty() ? 1 : ep.frames.front().channels;
    size += 4 + 2 + 2 + 1 + 8 + n * 2 * 2 +
            n * c * static_cast<std::uint64_t>(ep.window) * ep.window;
  }
  return size;
}

void write_dataset(const std::filesystem::path& path,
                   const std::vector<Episode>& episodes) {
  detail::ByteWriter w;
  w.tag(kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(episodes.size()));
  for (const Episode& ep : episodes) {
    if (ep.actions.size() != ep.frames.size()) {
      throw ShapeError("write_dataset: episode has " + std::to_string(ep.frames.size()) +
                       " frames but " + std::to_string(ep.actions.size()) + " actions");
    }
    const int channels = ep.frames.empty() ? 1 : ep.frames.front().channels;
    w.u32(static_cast<std::uint32_t>(ep.frames.size()));
    w.u16(static_cast<std::uint16_t>(ep.window));
    w.u16(static_cast<std::uint16_t>(ep.world));
    w.u8(static_cast<std::uint8_t>(channels));
    w.u64(ep.seed);
    for (const Action& a : ep.actions) {
      w.i16(static_cast<std::int16_t>(a.ax));
      w.i16(static_cast<std::int16_t>(a.ay));
    }
    for (const grid::Field& f : ep.frames) {
      if (f.channels != channels || f.height != ep.window || f.width != ep.window) {
        throw ShapeError("write_dataset: frame shape does not match episode header");
      }
      for (double v : f.data) {
        w.u8(static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))));
      }
    }
  }
  detail::write_file_atomic(path, w.data());
}

std::vector<Episode> read_dataset(const std::filesystem::path& path) {
  const auto buf = detail::read_file(path);
  detail::ByteReader r(buf, path.string());
  if (buf.size() < 4 || r.tag(4) != kDatasetMagic) {
    throw FormatError(path.string() + ": bad magic (not a FWM1 dataset)");
  }
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw FormatError(path.string() + ": unsupported dataset version " +
                      std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  std::vector<Episode> out;
  out.reserve(std::min<std::uint32_t>(count, 1u << 16));
  for (std::uint32_t e = 0; e < count; ++e) {
    Episode ep;
    const std::uint32_t n = r.u32();
    ep.window = r.u16();
    ep.world = r.u16();
    const int channels = r.u8();
    ep.seed = r.u64();
    if (channels < 1) throw FormatError(path.string() + ": zero channels");
    ep.actions.reserve(n);
    for (std::uint32_t t = 0; t < n; ++t) {
      const int ax = r.i16();
      const int ay = r.i16();
      ep.actions.push_back({ax, ay});
    }
    const std::size_t frame_bytes =
        static_cast<std::size_t>(channels) * ep.window * ep.window;
    ep.frames.reserve(n);
    for (std::uint32_t t = 0; t < n; ++t) {
      grid::Field f(channels, ep.window, ep.window);
      const std::uint8_t* p = r.cursor();
      r.skip(frame_bytes);
      for (std::size_t i = 0; i < frame_bytes; ++i) f.data[i] = p[i] / 255.0;
      ep.frames.push_back(std::move(f));
    }
    out.push_back(std::move(ep));
  }
  return out;
}

}  // namespace flowm::env
