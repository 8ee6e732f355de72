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

#include "flowm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <thread>

#include "binary_io.hpp"
#include "flowm/error.hpp"

namespace flowm::eval {

namespace {

using grid::Field;

void check_pair(const Field& a, const Field& b, const char* what) {
  if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": frame shapes differ");
  if (a.size() == 0) throw ShapeError(std::string(what) + ": empty frame");
}

// Neumaier compensated sum.
class Accumulator {
 public:
  void add(double x) {
    const double t = sum_ + x;
    comp_ += std::abs(sum_) >= std::abs(x) ? (sum_ - t) + x : (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Sums of each kSsimWindow x kSsimWindow block, by separable running sums.
std::vector<double> box_sums(const std::vector<double>& v, int h, int w) {
  const int k = kSsimWindow;
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += v[y * w + x + i];
      rows[y * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += rows[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  }
  return out;
}

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

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

double mse(const Field& pred, const Field& target) {
  check_pair(pred, target, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

double psnr(const Field& pred, const Field& target, double peak) {
  const double m = mse(pred, target);
  if (m < 1e-10) return kPsnrCeiling;
  return std::min(kPsnrCeiling, 10.0 * std::log10(peak * peak / m));
}

double ssim(const Field& pred, const Field& target) {
  check_pair(pred, target, "ssim");
  if (pred.channels != 1) throw ShapeError("ssim: expects a single channel");
  const int h = pred.height, w = pred.width;
  if (h < kSsimWindow || w < kSsimWindow) {
    throw ShapeError("ssim: frame smaller than the 7x7 window");
  }
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const double n = kSsimWindow * kSsimWindow;
  std::vector<double> xx(pred.size()), yy(pred.size()), xy(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    xx[i] = pred.data[i] * pred.data[i];
    yy[i] = target.data[i] * target.data[i];
    xy[i] = pred.data[i] * target.data[i];
  }
  const auto sx = box_sums(pred.data, h, w), sy = box_sums(target.data, h, w);
  const auto sxx = box_sums(xx, h, w), syy = box_sums(yy, h, w), sxy = box_sums(xy, h, w);
  Accumulator acc;
  for (std::size_t i = 0; i < sx.size(); ++i) {
    const double mx = sx[i] / n, my = sy[i] / n;
    const double vx = (sxx[i] - n * mx * mx) / (n - 1);
    const double vy = (syy[i] - n * my * my) / (n - 1);
    const double cxy = (sxy[i] - n * mx * my) / (n - 1);
    acc.add(((2 * mx * my + c1) * (2 * cxy + c2)) /
            ((mx * mx + my * my + c1) * (vx + vy + c2)));
  }
  return acc.value() / static_cast<double>(sx.size());
}

MetricSeries frame_metrics(std::span<const Field> pred, std::span<const Field> target) {
  if (pred.size() != target.size()) throw ShapeError("frame_metrics: counts differ");
  MetricSeries s;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    s.mse.push_back(mse(pred[t], target[t]));
    s.psnr.push_back(psnr(pred[t], target[t]));
    s.ssim.push_back(ssim(pred[t], target[t]));
  }
  return s;
}

double horizon_mean(std::span<const double> series, int horizon) {
  if (horizon < 1 || std::size_t(horizon) > series.size()) {
    throw ConfigError("horizon_mean: horizon out of range");
  }
  Accumulator acc;
  for (int t = 0; t < horizon; ++t) acc.add(series[t]);
  return acc.value() / horizon;
}

Evaluation evaluate(std::span<const ModelEntry> models,
                    std::span<const env::Episode> episodes, int obs_len,
                    std::vector<int> horizons, int threads) {
  if (horizons.empty()) throw ConfigError("evaluate: no horizons");
  std::sort(horizons.begin(), horizons.end());
  horizons.erase(std::unique(horizons.begin(), horizons.end()), horizons.end());
  if (horizons.front() < 1) throw ConfigError("evaluate: horizons must be >= 1");
  if (obs_len < 1) throw ConfigError("evaluate: obs_len must be >= 1");
  if (episodes.empty()) throw ConfigError("evaluate: no episodes");
  const int hmax = horizons.back();
  for (const env::Episode& ep : episodes) {
    if (ep.frames.size() < std::size_t(obs_len + hmax)) {
      throw ConfigError("evaluate: horizon " + std::to_string(hmax) +
                        " exceeds episode length " + std::to_string(ep.frames.size()) +
                        " minus " + std::to_string(obs_len) + " observed frames");
    }
  }
  for (const ModelEntry& m : models) {
    if (m.config.window_size != episodes[0].window ||
        m.config.world_size != episodes[0].world) {
      throw ConfigError("evaluate: model '" + m.label +
                        "' does not match the dataset window/world sizes");
    }
  }

  Evaluation out;
  out.horizons = horizons;
  auto average = [&](const std::vector<MetricSeries>& per_episode, const std::string& label) {
    ModelResult r;
    r.label = label;
    for (auto member : {&MetricSeries::mse, &MetricSeries::psnr, &MetricSeries::ssim}) {
      std::vector<double>& dst = r.curve.*member;
      dst.resize(hmax);
      for (int t = 0; t < hmax; ++t) {
        Accumulator acc;
        for (const MetricSeries& s : per_episode) acc.add((s.*member)[t]);
        dst[t] = acc.value() / static_cast<double>(per_episode.size());
      }
    }
    return r;
  };

  for (const ModelEntry& m : models) {
    std::vector<MetricSeries> per(episodes.size());
    parallel_for(episodes.size(), threads, [&](std::size_t e) {
      const env::Episode& ep = episodes[e];
      const auto preds = model::rollout(m.params, m.config,
                                        std::span(ep.frames).first(obs_len),
                                        ep.actions, hmax);
      per[e] = frame_metrics(preds, std::span(ep.frames).subspan(obs_len, hmax));
    });
    out.rows.push_back(average(per, m.label));
  }
  std::vector<MetricSeries> black(episodes.size());
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto target = std::span(episodes[e].frames).subspan(obs_len, hmax);
    const std::vector<Field> zeros(hmax, Field(1, target[0].height, target[0].width));
    black[e] = frame_metrics(zeros, target);
  }
  out.rows.push_back(average(black, kBaselineLabel));
  return out;
}

std::string metrics_csv(const Evaluation& e) {
  std::string s = "model,t,mse,psnr,ssim\n";
  for (const ModelResult& r : e.rows) {
    for (std::size_t t = 0; t < r.curve.mse.size(); ++t) {
      s += r.label + "," + std::to_string(t + 1) + "," + num(r.curve.mse[t]) + "," +
           num(r.curve.psnr[t]) + "," + num(r.curve.ssim[t]) + "\n";
    }
  }
  return s;
}

std::string summary_csv(const Evaluation& e) {
  std::string s = "model";
  for (const char* m : {"mse", "psnr", "ssim"}) {
    for (int h : e.horizons) s += std::string(",") + m + "_" + std::to_string(h);
  }
  s += "\n";
  for (const ModelResult& r : e.rows) {
    s += r.label;
    for (auto member : {&MetricSeries::mse, &MetricSeries::psnr, &MetricSeries::ssim}) {
      for (int h : e.horizons) s += "," + num(horizon_mean(r.curve.*member, h));
    }
    s += "\n";
  }
  return s;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

std::vector<std::uint8_t> encode_pgm(const Field& f) {
  if (f.channels != 1) throw ShapeError("encode_pgm: expects a single channel");
  const std::string header =
      "P5\n" + std::to_string(f.width) + " " + std::to_string(f.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double v : f.data) out.push_back(to_byte(v));
  return out;
}

int render_rollout(const ModelEntry& m, const env::Episode& episode, int obs_len,
                   int horizon, const std::filesystem::path& out_dir) {
  if (horizon < 1) throw ConfigError("render: horizon must be >= 1");
  if (episode.frames.size() < std::size_t(obs_len + horizon)) {
    throw ConfigError("render: episode shorter than obs_len + horizon");
  }
  const auto preds = model::rollout(m.params, m.config,
                                    std::span(episode.frames).first(obs_len),
                                    episode.actions, horizon);
  std::filesystem::create_directories(out_dir);
  const int w = episode.window;
  Field strip(1, 2 * w, horizon * w);
  char name[32];
  for (int k = 0; k < horizon; ++k) {
    const Field& gt = episode.frames[obs_len + k];
    std::snprintf(name, sizeof(name), "gt_%03d.pgm", k);
    flowm::detail::write_file_atomic(out_dir / name, encode_pgm(gt));
    std::snprintf(name, sizeof(name), "pred_%03d.pgm", k);
    flowm::detail::write_file_atomic(out_dir / name, encode_pgm(preds[k]));
    for (int y = 0; y < w; ++y) {
      for (int x = 0; x < w; ++x) {
        strip.at(0, y, k * w + x) = gt.at(0, y, x);
        strip.at(0, w + y, k * w + x) = preds[k].at(0, y, x);
      }
    }
  }
  flowm::detail::write_file_atomic(out_dir / "strip.pgm", encode_pgm(strip));
  return horizon;
}

}  // namespace flowm::eval
