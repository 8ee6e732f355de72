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

// Frame metrics, horizon-aggregated rollout evaluation with an all-black
// baseline row, and rollout rendering to portable graymaps.

#ifndef FLOWM_EVAL_HPP_
#define FLOWM_EVAL_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "flowm/env.hpp"
#include "flowm/model.hpp"

namespace flowm::eval {

// Per-pixel mean squared error.
double mse(const grid::Field& pred, const grid::Field& target);

inline constexpr double kPsnrCeiling = 100.0;

// 10 log10(peak^2 / mse), capped at kPsnrCeiling when mse < 1e-10.
double psnr(const grid::Field& pred, const grid::Field& target, double peak = 1.0);

inline constexpr int kSsimWindow = 7;

// Mean SSIM over all 7x7 windows (uniform weights, sample covariance,
// K1 = 0.01, K2 = 0.03, dynamic range 1).
double ssim(const grid::Field& pred, const grid::Field& target);

struct MetricSeries {
  std::vector<double> mse;
  std::vector<double> psnr;
  std::vector<double> ssim;

  friend bool operator==(const MetricSeries&, const MetricSeries&) = default;
};

MetricSeries frame_metrics(std::span<const grid::Field> pred,
                           std::span<const grid::Field> target);

// Mean of the first `horizon` entries.
double horizon_mean(std::span<const double> series, int horizon);

struct ModelEntry {
  std::string label;
  model::FloWMConfig config;
  model::Params params;
};

struct ModelResult {
  std::string label;
  // Per-timestep means over episodes, length max(horizons).
  MetricSeries curve;

  friend bool operator==(const ModelResult&, const ModelResult&) = default;
};

struct Evaluation {
  std::vector<int> horizons;
  std::vector<ModelResult> rows;  // models first, then "all-black"

  friend bool operator==(const Evaluation&, const Evaluation&) = default;
};

inline constexpr char kBaselineLabel[] = "all-black";

Evaluation evaluate(std::span<const ModelEntry> models,
                    std::span<const env::Episode> episodes, int obs_len,
                    std::vector<int> horizons, int threads = 1);

// Columns model,t,mse,psnr,ssim with t counted from 1.
std::string metrics_csv(const Evaluation& e);
// One row per model: model, mse_H, psnr_H, ssim_H for each horizon H.
std::string summary_csv(const Evaluation& e);

std::uint8_t to_byte(double v);

// Binary 8-bit PGM of a single-channel field.
std::vector<std::uint8_t> encode_pgm(const grid::Field& f);

// Writes gt_###.pgm and pred_###.pgm for every predicted frame and strip.pgm
// with ground truth above predictions. Returns the number of frames written.
int render_rollout(const ModelEntry& m, const env::Episode& episode, int obs_len,
                   int horizon, const std::filesystem::path& out_dir);

}  // namespace flowm::eval

#endif  // FLOWM_EVAL_HPP_
