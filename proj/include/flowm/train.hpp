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

// Backpropagation through the full observation and prediction unroll, Adam
// with global-norm clipping, and the seeded training loop.

#ifndef FLOWM_TRAIN_HPP_
#define FLOWM_TRAIN_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowm/env.hpp"
#include "flowm/model.hpp"

namespace flowm::train {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 32;
  double grad_clip_norm = 1.0;
  int epochs = 50;
  int obs_len = 50;
  int pred_len = 20;
  std::uint64_t seed = 0;
  // Second validation horizon, reported as val_mse_150.
  int long_horizon = 150;
  // Validate every this many optimizer steps; 0 means once per epoch.
  int val_every = 0;
  // Use only the first this many validation episodes; 0 means all.
  int val_episodes = 0;
  // Stop after this many optimizer steps; 0 means no limit.
  int max_steps = 0;
  int threads = 1;
  // Pick best.ckpt by validation MSE at long_horizon instead of pred_len.
  bool select_on_long = false;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Gradients share the parameter layout.
using Gradients = model::Params;

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  model::Params m;
  model::Params v;

  static AdamState for_params(const model::Params& p);
};

// (1/n) sum over frames of the squared L2 norm of the difference.
double loss_mse(std::span<const grid::Field> pred,
                std::span<const grid::Field> target);

struct LossAndGrad {
  double loss = 0.0;
  Gradients grad;
};

// Loss of predicting frames obs..obs+pred-1 after observing 0..obs-1, and its
// gradient with respect to every parameter.
LossAndGrad episode_loss_and_grad(const model::Params& params,
                                  const model::FloWMConfig& cfg,
                                  std::span<const grid::Field> frames,
                                  std::span<const env::Action> actions,
                                  int obs_len, int pred_len);

// Mean over the selected episodes. Per-episode gradients may be computed on
// several threads but are always summed in index order.
LossAndGrad batch_loss_and_grad(const model::Params& params,
                                const model::FloWMConfig& cfg,
                                std::span<const env::Episode> episodes,
                                std::span<const std::size_t> indices,
                                int obs_len, int pred_len, int threads = 1);

double global_norm(const Gradients& g);

// Scales g in place when its global norm exceeds max_norm; returns the norm
// before clipping.
double clip_by_norm(Gradients& g, double max_norm);

void adam_step(model::Params& params, const Gradients& grads, AdamState& state,
               double lr);

// Mean per-pixel MSE of horizon-step rollouts over the episodes.
double validation_mse(const model::Params& params, const model::FloWMConfig& cfg,
                      std::span<const env::Episode> episodes, int obs_len,
                      int horizon, int threads = 1);

struct MetricsRow {
  std::int64_t step = 0;
  int epoch = 0;
  std::optional<double> train_loss;
  std::optional<double> val_mse_short;
  std::optional<double> val_mse_long;
};

struct TrainResult {
  model::Params final_params;
  model::Params best_params;
  double best_val_mse = 0.0;
  std::int64_t steps = 0;
  std::vector<MetricsRow> metrics;
};

using ProgressFn = std::function<void(const MetricsRow&)>;

// Writes metrics.csv, best.ckpt and final.ckpt into out_dir (when non-empty).
TrainResult train(const model::FloWMConfig& cfg, const TrainConfig& tc,
                  std::span<const env::Episode> train_set,
                  std::span<const env::Episode> val_set,
                  const std::filesystem::path& out_dir,
                  const ProgressFn& progress = {});

std::string metrics_csv(std::span<const MetricsRow> rows);

}  // namespace flowm::train

#endif  // FLOWM_TRAIN_HPP_
