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

#include "flowm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <thread>

#include "binary_io.hpp"
#include "flowm/error.hpp"
#include "model_ops.hpp"

namespace flowm::train {

namespace {

using grid::Field;
using grid::Kernel;
using grid::VelocityStack;
using model::detail::window_offset;

model::Params zeros_like(const model::Params& p) {
  model::Params z = p;
  for (Kernel* k : z.kernels()) {
    std::fill(k->weights.begin(), k->weights.end(), 0.0);
    std::fill(k->bias.begin(), k->bias.end(), 0.0);
  }
  return z;
}

void add_params(model::Params& dst, const model::Params& src, double scale = 1.0) {
  auto d = dst.kernels();
  auto s = src.kernels();
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < d[i]->weights.size(); ++j) {
      d[i]->weights[j] += scale * s[i]->weights[j];
    }
    for (std::size_t j = 0; j < d[i]->bias.size(); ++j) {
      d[i]->bias[j] += scale * s[i]->bias[j];
    }
  }
}

// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// gz = roll^-1(g) * act'(roll^-1(y)) where y = roll(act(z), shift).
void unroll_activation_grad(const Field& g, const Field& y, grid::Activation act,
                            const flow::Velocity& shift, Field& gz) {
  const int H = g.height, W = g.width;
  if (!gz.same_shape(g)) gz = Field(g.channels, H, W);
  const int dy = ((shift.vy % H) + H) % H;
  const int dx = ((shift.vx % W) + W) % W;
  for (int c = 0; c < g.channels; ++c) {
    for (int r = 0; r < H; ++r) {
      const double* gs = &g.at(c, (r + dy) % H, 0);
      const double* ys = &y.at(c, (r + dy) % H, 0);
      double* out = &gz.at(c, r, 0);
      for (int x = 0; x < W; ++x) {
        const int sx = x + dx < W ? x + dx : x + dx - W;
        out[x] = gs[sx] *
                 model::detail::activation_grad_from_output(act, ys[sx]);
      }
    }
  }
}

struct DecoderTrace {
  Field pooled;
  std::vector<std::int32_t> argmax;
  Field hidden;  // relu output of the first decoder conv
  Field out;
};

DecoderTrace decode_traced(const VelocityStack& h, const model::FloWMConfig& cfg,
                           const model::Params& p) {
  VelocityStack windows;
  windows.reserve(h.size());
  for (const Field& s : h) windows.push_back(grid::window(s, cfg.window_size));
  grid::MaxPool mp = grid::maxpool_velocity(windows);
  DecoderTrace d;
  d.pooled = std::move(mp.value);
  d.argmax = std::move(mp.argmax);
  d.hidden = grid::pointwise(grid::conv2d(d.pooled, p.dec1, grid::Padding::kCircular),
                             grid::Activation::kRelu);
  d.out = grid::conv2d(d.hidden, p.dec2, grid::Padding::kCircular);
  return d;
}

void decoder_backward(const DecoderTrace& d, const Field& g_out,
                      const model::FloWMConfig& cfg, const model::Params& p,
                      VelocityStack& g_h, model::Params& grad) {
  Field g_hidden(d.hidden.channels, d.hidden.height, d.hidden.width);
  grid::conv2d_vjp_accumulate(d.hidden, p.dec2, g_out, grid::Padding::kCircular,
                              &g_hidden, &grad.dec2);
  for (std::size_t i = 0; i < g_hidden.size(); ++i) {
    if (!(d.hidden.data[i] > 0.0)) g_hidden.data[i] = 0.0;
  }
  Field g_pooled(d.pooled.channels, d.pooled.height, d.pooled.width);
  grid::conv2d_vjp_accumulate(d.pooled, p.dec1, g_hidden, grid::Padding::kCircular,
                              &g_pooled, &grad.dec1);
  const int o = window_offset(cfg.world_size, cfg.window_size);
  const int w = cfg.window_size;
  std::size_t idx = 0;
  for (int c = 0; c < g_pooled.channels; ++c) {
    for (int y = 0; y < w; ++y) {
      for (int x = 0; x < w; ++x, ++idx) {
        g_h[d.argmax[idx]].at(c, y + o, x + o) += g_pooled.data[idx];
      }
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(grad_clip_norm > 0.0)) throw ConfigError("train: grad_clip_norm must be > 0");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (obs_len < 1) throw ConfigError("train: obs_len must be >= 1");
  if (pred_len < 1) throw ConfigError("train: pred_len must be >= 1");
  if (long_horizon < 1) throw ConfigError("train: long_horizon must be >= 1");
  if (val_every < 0 || val_episodes < 0 || max_steps < 0) {
    throw ConfigError("train: val_every, val_episodes and max_steps must be >= 0");
  }
  if (threads < 1) throw ConfigError("train: threads must be >= 1");
}

AdamState AdamState::for_params(const model::Params& p) {
  AdamState s;
  s.m = zeros_like(p);
  s.v = zeros_like(p);
  return s;
}

double loss_mse(std::span<const Field> pred, std::span<const Field> target) {
  if (pred.size() != target.size() || pred.empty()) {
    throw ShapeError("loss_mse: frame counts differ or are zero");
  }
  double total = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    if (!pred[t].same_shape(target[t])) throw ShapeError("loss_mse: frame shapes differ");
    double s = 0.0;
    for (std::size_t i = 0; i < pred[t].size(); ++i) {
      const double d = pred[t].data[i] - target[t].data[i];
      s += d * d;
    }
    total += s;
  }
  return total / static_cast<double>(pred.size());
}

LossAndGrad episode_loss_and_grad(const model::Params& params,
                                  const model::FloWMConfig& cfg,
                                  std::span<const Field> frames,
                                  std::span<const env::Action> actions,
                                  int obs_len, int pred_len) {
  if (obs_len < 1 || pred_len < 1) throw ConfigError("obs_len and pred_len must be >= 1");
  const int T = obs_len + pred_len - 1;
  if (frames.size() < std::size_t(obs_len + pred_len) ||
      actions.size() < std::size_t(T)) {
    throw ConfigError("episode too short for obs_len + pred_len");
  }
  const bool closed = cfg.rollout_input == model::RolloutInput::kClosedLoop;

  // Forward, keeping every hidden state and the decoder intermediates.
  std::vector<VelocityStack> hs;
  hs.reserve(T + 1);
  std::vector<Field> inputs(T);
  std::vector<DecoderTrace> dec(pred_len);
  model::HiddenState h = model::init_hidden(cfg);
  hs.push_back(h.stack);
  for (int t = 0; t < T; ++t) {
    if (t >= obs_len) dec[t - obs_len] = decode_traced(h.stack, cfg, params);
    const Field* frame = nullptr;
    if (t < obs_len) {
      frame = &frames[t];
    } else if (closed) {
      frame = &dec[t - obs_len].out;
    }
    if (frame != nullptr) inputs[t] = model::encoder_input(*frame, actions[t], cfg);
    h = model::step(h, frame, actions[t], cfg, params);
    hs.push_back(h.stack);
  }
  dec[pred_len - 1] = decode_traced(h.stack, cfg, params);

  LossAndGrad result;
  std::vector<Field> g_out(pred_len);
  double loss = 0.0;
  for (int k = 0; k < pred_len; ++k) {
    const Field& pred = dec[k].out;
    const Field& target = frames[obs_len + k];
    if (!pred.same_shape(target)) throw ShapeError("frame shape does not match model");
    g_out[k] = Field(1, pred.height, pred.width);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = pred.data[i] - target.data[i];
      loss += d * d;
      g_out[k].data[i] = 2.0 * d / pred_len;
    }
  }
  result.loss = loss / pred_len;

  // Backward through time.
  model::Params& grad = result.grad;
  grad = zeros_like(params);
  const std::size_t nv = cfg.velocities.size();
  const Field zero_slice(cfg.hidden_channels, cfg.world_size, cfg.world_size);
  VelocityStack g_h(nv, zero_slice);
  decoder_backward(dec[pred_len - 1], g_out[pred_len - 1], cfg, params, g_h, grad);

  const int o = window_offset(cfg.world_size, cfg.window_size);
  const int w = cfg.window_size;
  Field planes;
  Field gz;
  for (int t = T - 1; t >= 0; --t) {
    const bool has_input = !inputs[t].data.empty();
    const bool need_state_grad = t > 0;
    VelocityStack g_prev;
    if (need_state_grad) g_prev.assign(nv, zero_slice);
    Field g_enc;
    if (has_input) g_enc = Field(cfg.hidden_channels, w, w);
    if (cfg.action_concat) {
      planes = model::action_planes(actions[t], cfg.world_size, cfg.action_scale);
    }
    for (std::size_t i = 0; i < nv; ++i) {
      unroll_activation_grad(g_h[i], hs[t + 1][i], cfg.activation,
                             cfg.shift(cfg.velocities[i], actions[t]), gz);
      if (cfg.action_concat) {
        const Field in = model::detail::concat_channels(hs[t][i], planes);
        Field g_in(in.channels, in.height, in.width);
        grid::conv2d_vjp_accumulate(in, params.W, gz, grid::Padding::kCircular,
                                    need_state_grad ? &g_in : nullptr, &grad.W);
        if (need_state_grad) {
          std::copy_n(g_in.data.begin(), g_prev[i].size(), g_prev[i].data.begin());
        }
      } else {
        grid::conv2d_vjp_accumulate(hs[t][i], params.W, gz,
                                    grid::Padding::kCircular,
                                    need_state_grad ? &g_prev[i] : nullptr,
                                    &grad.W);
      }
      if (has_input) {
        for (int c = 0; c < cfg.hidden_channels; ++c) {
          for (int y = 0; y < w; ++y) {
            const double* src = &gz.at(c, y + o, o);
            double* dst = &g_enc.at(c, y, 0);
            for (int x = 0; x < w; ++x) dst[x] += src[x];
          }
        }
      }
    }
    if (has_input) {
      const bool feeds_back = closed && t >= obs_len;
      Field g_x;
      if (feeds_back) g_x = Field(inputs[t].channels, w, w);
      grid::conv2d_vjp_accumulate(inputs[t], params.U, g_enc,
                                  grid::Padding::kCircular,
                                  feeds_back ? &g_x : nullptr, &grad.U);
      if (feeds_back) {
        Field& target = g_out[t - obs_len];
        for (std::size_t i = 0; i < target.size(); ++i) target.data[i] += g_x.data[i];
      }
    }
    if (!need_state_grad) break;
    if (t >= obs_len) {
      decoder_backward(dec[t - obs_len], g_out[t - obs_len], cfg, params, g_prev, grad);
    }
    g_h = std::move(g_prev);
  }
  return result;
}

LossAndGrad batch_loss_and_grad(const model::Params& params,
                                const model::FloWMConfig& cfg,
                                std::span<const env::Episode> episodes,
                                std::span<const std::size_t> indices,
                                int obs_len, int pred_len, int threads) {
  if (indices.empty()) throw ConfigError("batch_loss_and_grad: empty batch");
  std::vector<LossAndGrad> parts(indices.size());
  parallel_for(indices.size(), threads, [&](std::size_t j) {
    const env::Episode& ep = episodes[indices[j]];
    parts[j] = episode_loss_and_grad(params, cfg, ep.frames, ep.actions,
                                     obs_len, pred_len);
  });
  LossAndGrad total;
  total.grad = zeros_like(params);
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (const LossAndGrad& p : parts) {
    total.loss += p.loss * inv;
    add_params(total.grad, p.grad, inv);
  }
  return total;
}

double global_norm(const Gradients& g) {
  double s = 0.0;
  for (const Kernel* k : g.kernels()) {
    for (double x : k->weights) s += x * x;
    for (double x : k->bias) s += x * x;
  }
  return std::sqrt(s);
}

double clip_by_norm(Gradients& g, double max_norm) {
  const double norm = global_norm(g);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (Kernel* k : g.kernels()) {
      for (double& x : k->weights) x *= scale;
      for (double& x : k->bias) x *= scale;
    }
  }
  return norm;
}

void adam_step(model::Params& params, const Gradients& grads, AdamState& state,
               double lr) {
  state.step += 1;
  const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
  auto p = params.kernels();
  auto g = grads.kernels();
  auto m = state.m.kernels();
  auto v = state.v.kernels();
  if (p.size() != g.size() || m.size() != p.size()) {
    throw ShapeError("adam_step: state does not match parameters");
  }
  auto update = [&](std::vector<double>& pw, const std::vector<double>& gw,
                    std::vector<double>& mw, std::vector<double>& vw) {
    if (gw.size() != pw.size() || mw.size() != pw.size() || vw.size() != pw.size()) {
      throw ShapeError("adam_step: state does not match parameters");
    }
    for (std::size_t i = 0; i < pw.size(); ++i) {
      mw[i] = state.beta1 * mw[i] + (1.0 - state.beta1) * gw[i];
      vw[i] = state.beta2 * vw[i] + (1.0 - state.beta2) * gw[i] * gw[i];
      const double mhat = mw[i] / c1;
      const double vhat = vw[i] / c2;
      pw[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  };
  for (std::size_t k = 0; k < p.size(); ++k) {
    update(p[k]->weights, g[k]->weights, m[k]->weights, v[k]->weights);
    update(p[k]->bias, g[k]->bias, m[k]->bias, v[k]->bias);
  }
}

double validation_mse(const model::Params& params, const model::FloWMConfig& cfg,
                      std::span<const env::Episode> episodes, int obs_len,
                      int horizon, int threads) {
  if (episodes.empty()) throw ConfigError("validation_mse: no episodes");
  std::vector<double> per_episode(episodes.size());
  parallel_for(episodes.size(), threads, [&](std::size_t e) {
    const env::Episode& ep = episodes[e];
    if (ep.frames.size() < std::size_t(obs_len + horizon)) {
      throw ConfigError("validation episode shorter than obs_len + horizon");
    }
    const auto preds = model::rollout(
        params, cfg, std::span(ep.frames).first(obs_len), ep.actions, horizon);
    double s = 0.0;
    for (int k = 0; k < horizon; ++k) {
      const Field& target = ep.frames[obs_len + k];
      double f = 0.0;
      for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = preds[k].data[i] - target.data[i];
        f += d * d;
      }
      s += f / static_cast<double>(target.size());
    }
    per_episode[e] = s / horizon;
  });
  double total = 0.0;
  for (double v : per_episode) total += v;
  return total / static_cast<double>(episodes.size());
}

namespace {

void check_episodes(std::span<const env::Episode> eps, const model::FloWMConfig& cfg,
                    int min_frames, const char* what) {
  for (const env::Episode& ep : eps) {
    if (ep.window != cfg.window_size || ep.world != cfg.world_size) {
      throw ConfigError(std::string(what) + " episodes have window/world " +
                        std::to_string(ep.window) + "/" + std::to_string(ep.world) +
                        ", model expects " + std::to_string(cfg.window_size) + "/" +
                        std::to_string(cfg.world_size));
    }
    if (ep.frames.size() < std::size_t(min_frames)) {
      throw ConfigError(std::string(what) + " episode has " +
                        std::to_string(ep.frames.size()) + " frames, need " +
                        std::to_string(min_frames));
    }
  }
}

std::string fmt(std::optional<double> v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", *v);
  return buf;
}

}  // namespace

std::string metrics_csv(std::span<const MetricsRow> rows) {
  std::string out = "step,epoch,train_loss,val_mse_20,val_mse_150\n";
  for (const MetricsRow& r : rows) {
    out += std::to_string(r.step) + "," + std::to_string(r.epoch) + "," +
           fmt(r.train_loss) + "," + fmt(r.val_mse_short) + "," +
           fmt(r.val_mse_long) + "\n";
  }
  return out;
}

TrainResult train(const model::FloWMConfig& cfg, const TrainConfig& tc,
                  std::span<const env::Episode> train_set,
                  std::span<const env::Episode> val_set,
                  const std::filesystem::path& out_dir,
                  const ProgressFn& progress) {
  cfg.validate();
  tc.validate();
  if (train_set.empty()) throw ConfigError("train: empty training set");
  check_episodes(train_set, cfg, tc.obs_len + tc.pred_len, "training");
  std::span<const env::Episode> val = val_set;
  if (tc.val_episodes > 0 && val.size() > std::size_t(tc.val_episodes)) {
    val = val.first(tc.val_episodes);
  }
  check_episodes(val, cfg, tc.obs_len + tc.pred_len, "validation");
  const bool long_ok =
      !val.empty() &&
      std::all_of(val.begin(), val.end(), [&](const env::Episode& ep) {
        return ep.frames.size() >= std::size_t(tc.obs_len + tc.long_horizon);
      });
  if (tc.select_on_long && !val.empty() && !long_ok) {
    throw ConfigError("train: selecting on long_horizon needs validation episodes of at least " +
                      std::to_string(tc.obs_len + tc.long_horizon) + " frames");
  }

  TrainResult result;
  model::Params params = model::init_params(cfg, tc.seed);
  AdamState adam = AdamState::for_params(params);
  result.best_params = params;
  result.best_val_mse = std::numeric_limits<double>::infinity();

  auto validate_into = [&](MetricsRow& row) {
    if (val.empty()) return;
    row.val_mse_short = validation_mse(params, cfg, val, tc.obs_len, tc.pred_len, tc.threads);
    if (long_ok) {
      row.val_mse_long = validation_mse(params, cfg, val, tc.obs_len, tc.long_horizon, tc.threads);
    }
    const double score = tc.select_on_long ? *row.val_mse_long : *row.val_mse_short;
    if (score < result.best_val_mse) {
      result.best_val_mse = score;
      result.best_params = params;
    }
  };

  MetricsRow initial;
  validate_into(initial);
  result.metrics.push_back(initial);
  if (progress) progress(initial);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(tc.seed ^ 0x5eedf10a5eedf10aULL);
  std::int64_t step = 0;
  bool done = false;
  for (int epoch = 1; epoch <= tc.epochs && !done; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t b = 0; b < order.size() && !done; b += tc.batch_size) {
      const std::size_t n = std::min<std::size_t>(tc.batch_size, order.size() - b);
      LossAndGrad lg = batch_loss_and_grad(params, cfg, train_set,
                                           std::span(order).subspan(b, n),
                                           tc.obs_len, tc.pred_len, tc.threads);
      if (!std::isfinite(lg.loss)) {
        throw NumericError("non-finite training loss at step " +
                           std::to_string(step + 1) + " (epoch " +
                           std::to_string(epoch) + ")");
      }
      clip_by_norm(lg.grad, tc.grad_clip_norm);
      adam_step(params, lg.grad, adam, tc.learning_rate);
      ++step;
      MetricsRow row;
      row.step = step;
      row.epoch = epoch;
      row.train_loss = lg.loss;
      done = tc.max_steps > 0 && step >= tc.max_steps;
      const bool epoch_end = b + n >= order.size();
      if ((tc.val_every > 0 && step % tc.val_every == 0) ||
          (tc.val_every == 0 && epoch_end) || done ||
          (epoch == tc.epochs && epoch_end)) {
        validate_into(row);
      }
      result.metrics.push_back(row);
      if (progress) progress(row);
    }
  }
  result.steps = step;
  result.final_params = params;
  if (val.empty()) result.best_params = params;

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    flowm::detail::write_text_atomic(out_dir / "metrics.csv", metrics_csv(result.metrics));
    model::save_checkpoint(out_dir / "best.ckpt", cfg, result.best_params);
    model::save_checkpoint(out_dir / "final.ckpt", cfg, result.final_params);
  }
  return result;
}

}  // namespace flowm::train
