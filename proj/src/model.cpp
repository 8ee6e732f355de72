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

#include "flowm/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "binary_io.hpp"
#include "flowm/error.hpp"
#include "model_ops.hpp"

namespace flowm::model {

namespace detail {

void activate_embed_roll(const grid::Field& z, const grid::Field* enc,
                         int offset, grid::Activation act,
                         const flow::Velocity& shift, grid::Field& out) {
  const int H = z.height, W = z.width;
  if (!out.same_shape(z)) out = grid::Field(z.channels, H, W);
  const int dy = ((shift.vy % H) + H) % H;
  const int dx = ((shift.vx % W) + W) % W;
  std::vector<double> row(W);
  for (int c = 0; c < z.channels; ++c) {
    for (int y = 0; y < H; ++y) {
      const double* src = &z.at(c, y, 0);
      std::memcpy(row.data(), src, sizeof(double) * W);
      const int ey = y - offset;
      if (enc != nullptr && ey >= 0 && ey < enc->height) {
        const double* e = &enc->at(c, ey, 0);
        for (int x = 0; x < enc->width; ++x) row[offset + x] += e[x];
      }
      switch (act) {
        case grid::Activation::kRelu:
          for (double& v : row) v = v > 0.0 ? v : 0.0;
          break;
        case grid::Activation::kSigmoid:
          for (double& v : row) v = 1.0 / (1.0 + std::exp(-v));
          break;
        case grid::Activation::kIdentity:
          break;
      }
      double* dst = &out.at(c, (y + dy) % H, 0);
      std::memcpy(dst + dx, row.data(), sizeof(double) * (W - dx));
      std::memcpy(dst, row.data() + (W - dx), sizeof(double) * dx);
    }
  }
}

double activation_grad_from_output(grid::Activation act, double y) {
  switch (act) {
    case grid::Activation::kRelu:
      return y > 0.0 ? 1.0 : 0.0;
    case grid::Activation::kSigmoid:
      return y * (1.0 - y);
    case grid::Activation::kIdentity:
      return 1.0;
  }
  return 1.0;
}

grid::Field concat_channels(const grid::Field& a, const grid::Field& b) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError("concat_channels: spatial extents differ");
  }
  grid::Field out(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.size());
  return out;
}

}  // namespace detail

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kNoVc: return "no-vc";
    case Ablation::kNoSme: return "no-sme";
    case Ablation::kNoSmeNoVc: return "no-sme-no-vc";
    case Ablation::kActionConcat: return "action-concat";
  }
  return "full";
}

Ablation parse_ablation(const std::string& s) {
  for (Ablation a : {Ablation::kFull, Ablation::kNoVc, Ablation::kNoSme,
                     Ablation::kNoSmeNoVc, Ablation::kActionConcat}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown ablation '" + s +
                    "' (expected full, no-vc, no-sme, no-sme-no-vc, "
                    "action-concat)");
}

std::string to_string(RolloutInput r) {
  return r == RolloutInput::kZeros ? "zeros" : "closed_loop";
}

RolloutInput parse_rollout_input(const std::string& s) {
  if (s == "zeros") return RolloutInput::kZeros;
  if (s == "closed_loop") return RolloutInput::kClosedLoop;
  throw ConfigError("unknown rollout_input '" + s +
                    "' (expected zeros or closed_loop)");
}

void FloWMConfig::apply_ablation(Ablation a) {
  use_velocity_channels = a == Ablation::kFull || a == Ablation::kNoSme;
  use_self_motion_equivariance = a == Ablation::kFull || a == Ablation::kNoVc;
  action_concat = a == Ablation::kActionConcat;
  if (!use_velocity_channels) velocities = flow::VelocitySet::zero();
}

Ablation FloWMConfig::ablation() const {
  if (action_concat) return Ablation::kActionConcat;
  if (use_velocity_channels) {
    return use_self_motion_equivariance ? Ablation::kFull : Ablation::kNoSme;
  }
  return use_self_motion_equivariance ? Ablation::kNoVc : Ablation::kNoSmeNoVc;
}

void FloWMConfig::validate() const {
  if (world_size < 1 || window_size < 1 || window_size > world_size) {
    throw ConfigError("model: need 1 <= window_size <= world_size");
  }
  if ((world_size - window_size) % 2 != 0) {
    throw ConfigError("model: world_size - window_size must be even");
  }
  if (hidden_channels < 1) throw ConfigError("model: hidden_channels < 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ConfigError("model: kernel_size must be odd and positive");
  }
  if (velocities.size() == 0) throw ConfigError("model: empty velocity set");
  if (!use_velocity_channels && !(velocities == flow::VelocitySet::zero())) {
    throw ConfigError("model: no velocity channels requires V = {(0,0)}");
  }
  if (action_concat && use_self_motion_equivariance) {
    throw ConfigError("model: action_concat requires self-motion equivariance off");
  }
  if (action_scale < 1) throw ConfigError("model: action_scale < 1");
}

flow::Velocity FloWMConfig::shift(const flow::Velocity& v,
                                  const env::Action& a) const {
  return use_self_motion_equivariance ? v - a.as_velocity() : v;
}

std::size_t Params::count() const {
  std::size_t n = 0;
  for (const grid::Kernel* k : kernels()) n += k->weights.size() + k->bias.size();
  return n;
}

std::vector<grid::Kernel*> Params::kernels() { return {&U, &W, &dec1, &dec2}; }

std::vector<const grid::Kernel*> Params::kernels() const {
  return {&U, &W, &dec1, &dec2};
}

Params zero_params(const FloWMConfig& cfg) {
  const int C = cfg.hidden_channels, k = cfg.kernel_size;
  Params p;
  p.U = grid::Kernel(C, cfg.input_channels(), k, k);
  p.W = grid::Kernel(C, cfg.recurrent_in_channels(), k, k);
  p.dec1 = grid::Kernel(C, C, k, k, true);
  p.dec2 = grid::Kernel(1, C, k, k, true);
  return p;
}

Params init_params(const FloWMConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Params p = zero_params(cfg);
  std::mt19937_64 rng(seed);
  for (grid::Kernel* k : p.kernels()) {
    const double bound = 1.0 / std::sqrt(double(k->in_channels) * k->kh * k->kw);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : k->weights) w = dist(rng);
    for (double& b : k->bias) b = dist(rng);
  }
  return p;
}

HiddenState init_hidden(const FloWMConfig& cfg) {
  HiddenState h;
  h.stack.assign(cfg.velocities.size(),
                 grid::Field(cfg.hidden_channels, cfg.world_size, cfg.world_size));
  return h;
}

grid::Field action_planes(const env::Action& a, int size, int scale) {
  grid::Field f(2, size, size);
  std::fill_n(f.data.begin(), f.plane_size(), double(a.ax) / scale);
  std::fill_n(f.data.begin() + f.plane_size(), f.plane_size(),
              double(a.ay) / scale);
  return f;
}

grid::Field encoder_input(const grid::Field& frame, const env::Action& a,
                          const FloWMConfig& cfg) {
  if (!cfg.action_concat) return frame;
  return detail::concat_channels(
      frame, action_planes(a, frame.height, cfg.action_scale));
}

grid::Field encode(const grid::Field& input, const FloWMConfig& cfg,
                   const Params& params) {
  if (input.channels != cfg.input_channels() ||
      input.height != cfg.window_size || input.width != cfg.window_size) {
    throw ShapeError("encode: expected " + std::to_string(cfg.input_channels()) +
                     "x" + std::to_string(cfg.window_size) + "x" +
                     std::to_string(cfg.window_size) + " input");
  }
  return grid::conv2d(input, params.U, grid::Padding::kCircular);
}

namespace {

void check_hidden(const HiddenState& h, const FloWMConfig& cfg) {
  if (h.stack.size() != cfg.velocities.size()) {
    throw ShapeError("hidden state has " + std::to_string(h.stack.size()) +
                     " velocity slices, config has " +
                     std::to_string(cfg.velocities.size()));
  }
  for (const grid::Field& s : h.stack) {
    if (s.channels != cfg.hidden_channels || s.height != cfg.world_size ||
        s.width != cfg.world_size) {
      throw ShapeError("hidden slice shape does not match config");
    }
  }
}

}  // namespace

HiddenState step(const HiddenState& h, const grid::Field* frame,
                 const env::Action& a, const FloWMConfig& cfg,
                 const Params& params) {
  check_hidden(h, cfg);
  grid::Field enc;
  if (frame != nullptr) enc = encode(encoder_input(*frame, a, cfg), cfg, params);
  const int offset = detail::window_offset(cfg.world_size, cfg.window_size);
  grid::Field planes;
  if (cfg.action_concat) {
    planes = action_planes(a, cfg.world_size, cfg.action_scale);
  }

  HiddenState next;
  next.time = h.time + 1;
  next.stack.resize(h.stack.size());
  grid::Field z;
  for (std::size_t i = 0; i < h.stack.size(); ++i) {
    if (cfg.action_concat) {
      grid::conv2d_into(detail::concat_channels(h.stack[i], planes), params.W,
                        grid::Padding::kCircular, z);
    } else {
      grid::conv2d_into(h.stack[i], params.W, grid::Padding::kCircular, z);
    }
    detail::activate_embed_roll(z, frame != nullptr ? &enc : nullptr, offset,
                                cfg.activation, cfg.shift(cfg.velocities[i], a),
                                next.stack[i]);
  }
  return next;
}

grid::Field decode(const HiddenState& h, const FloWMConfig& cfg,
                   const Params& params) {
  check_hidden(h, cfg);
  grid::VelocityStack windows;
  windows.reserve(h.stack.size());
  for (const grid::Field& s : h.stack) {
    windows.push_back(grid::window(s, cfg.window_size));
  }
  const grid::Field pooled = grid::maxpool_velocity(windows).value;
  const grid::Field hidden = grid::pointwise(
      grid::conv2d(pooled, params.dec1, grid::Padding::kCircular),
      grid::Activation::kRelu);
  return grid::conv2d(hidden, params.dec2, grid::Padding::kCircular);
}

std::vector<grid::Field> rollout(const Params& params, const FloWMConfig& cfg,
                                 std::span<const grid::Field> observed,
                                 std::span<const env::Action> actions,
                                 int horizon) {
  if (horizon < 1) throw ConfigError("rollout: horizon must be >= 1");
  if (observed.empty()) throw ConfigError("rollout: no observed frames");
  const std::size_t needed = observed.size() + horizon - 1;
  if (actions.size() < needed) {
    throw ConfigError("rollout: need " + std::to_string(needed) +
                      " actions, got " + std::to_string(actions.size()));
  }
  HiddenState h = init_hidden(cfg);
  for (std::size_t t = 0; t < observed.size(); ++t) {
    h = step(h, &observed[t], actions[t], cfg, params);
  }
  std::vector<grid::Field> preds;
  preds.reserve(horizon);
  for (int k = 0; k < horizon; ++k) {
    preds.push_back(decode(h, cfg, params));
    if (k + 1 < horizon) {
      const grid::Field* input =
          cfg.rollout_input == RolloutInput::kClosedLoop ? &preds.back() : nullptr;
      h = step(h, input, actions[observed.size() + k], cfg, params);
    }
  }
  return preds;
}

HiddenState step_generalized(const HiddenState& h, const grid::Field* frame,
                             const AbstractOps& ops,
                             const flow::VelocitySet& velocities, int world) {
  if (h.stack.size() != velocities.size()) {
    throw ShapeError("step_generalized: hidden/velocity count mismatch");
  }
  grid::Field o;
  if (frame != nullptr) o = ops.encoder(*frame);
  HiddenState next;
  next.time = h.time + 1;
  next.stack.reserve(h.stack.size());
  for (std::size_t i = 0; i < h.stack.size(); ++i) {
    const grid::Field zero =
        frame == nullptr ? grid::Field(h.stack[i].channels, world, world)
                         : grid::Field();
    const grid::Field u = ops.update(h.stack[i], frame != nullptr ? o : zero);
    next.stack.push_back(grid::roll(u, velocities[i].vx, velocities[i].vy));
  }
  return next;
}

AbstractOps simple_ops(const FloWMConfig& cfg, const Params& params,
                       grid::Padding encoder_padding) {
  AbstractOps ops;
  ops.encoder = [&cfg, &params, encoder_padding](const grid::Field& f) {
    return grid::pad(grid::conv2d(f, params.U, encoder_padding), cfg.world_size);
  };
  ops.update = [&cfg, &params](const grid::Field& h, const grid::Field& o) {
    grid::Field z = grid::conv2d(h, params.W, grid::Padding::kCircular);
    grid::add_into(z, o);
    return grid::pointwise(z, cfg.activation);
  };
  return ops;
}

namespace {

constexpr char kCheckpointMagic[] = "FWMC";
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const FloWMConfig& cfg,
                     const Params& params) {
  flowm::detail::ByteWriter w;
  w.tag(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.i32(cfg.world_size);
  w.i32(cfg.window_size);
  w.i32(cfg.hidden_channels);
  w.i32(cfg.kernel_size);
  w.i32(cfg.action_scale);
  w.u8(cfg.use_velocity_channels);
  w.u8(cfg.use_self_motion_equivariance);
  w.u8(cfg.action_concat);
  w.u8(static_cast<std::uint8_t>(cfg.rollout_input));
  w.u8(static_cast<std::uint8_t>(cfg.activation));
  w.u32(static_cast<std::uint32_t>(cfg.velocities.size()));
  for (const flow::Velocity& v : cfg.velocities) {
    w.i32(v.vx);
    w.i32(v.vy);
  }
  w.u64(params.count());
  for (const grid::Kernel* k : params.kernels()) {
    for (double x : k->weights) w.f64(x);
    for (double x : k->bias) w.f64(x);
  }
  flowm::detail::write_file_atomic(path, w.data());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> buf = flowm::detail::read_file(path);
  flowm::detail::ByteReader r(buf, "checkpoint " + path.string());
  if (r.tag(4) != kCheckpointMagic) {
    throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  }
  if (const std::uint32_t v = r.u32(); v != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " +
                      std::to_string(v));
  }
  Checkpoint ck;
  FloWMConfig& c = ck.config;
  c.world_size = r.i32();
  c.window_size = r.i32();
  c.hidden_channels = r.i32();
  c.kernel_size = r.i32();
  c.action_scale = r.i32();
  c.use_velocity_channels = r.u8() != 0;
  c.use_self_motion_equivariance = r.u8() != 0;
  c.action_concat = r.u8() != 0;
  const std::uint8_t ri = r.u8(), act = r.u8();
  if (ri > 1 || act > 2) throw FormatError(path.string() + ": bad enum field");
  c.rollout_input = static_cast<RolloutInput>(ri);
  c.activation = static_cast<grid::Activation>(act);
  const std::uint32_t nv = r.u32();
  if (nv == 0 || nv > 4096) {
    throw FormatError(path.string() + ": bad velocity count");
  }
  std::vector<flow::Velocity> vs(nv);
  for (flow::Velocity& v : vs) {
    v.vx = r.i32();
    v.vy = r.i32();
  }
  try {
    c.velocities = flow::VelocitySet(vs);
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": invalid config block: " + e.what());
  }
  ck.params = zero_params(c);
  if (r.u64() != ck.params.count()) {
    throw FormatError(path.string() + ": parameter count does not match config");
  }
  for (grid::Kernel* k : ck.params.kernels()) {
    for (double& x : k->weights) x = r.f64();
    for (double& x : k->bias) x = r.f64();
  }
  if (r.remaining() != 0) {
    throw FormatError(path.string() + ": trailing bytes after parameters");
  }
  return ck;
}

}  // namespace flowm::model
