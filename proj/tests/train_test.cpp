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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "flowm/error.hpp"
#include "test_util.hpp"

namespace flowm::train {
namespace {

namespace fs = std::filesystem;
using flowm::testing::random_field;
using grid::Field;
using model::FloWMConfig;

FloWMConfig tiny_config() {
  FloWMConfig c;
  c.world_size = 8;
  c.window_size = 6;
  c.hidden_channels = 4;
  c.velocities = flow::VelocitySet::square(1);
  c.action_scale = 2;
  return c;
}

struct Sequence {
  std::vector<Field> frames;
  std::vector<env::Action> actions;
};

Sequence random_sequence(std::mt19937_64& rng, int n, int window) {
  Sequence s;
  std::uniform_int_distribution<int> a(-2, 2);
  for (int t = 0; t < n; ++t) {
    s.frames.push_back(random_field(rng, 1, window, window, 0.0, 1.0));
    s.actions.push_back({a(rng), a(rng)});
  }
  return s;
}

// Forward loss through the public rollout, independent of the traced unroll.
double rollout_loss(const model::Params& p, const FloWMConfig& c, const Sequence& s,
                    int obs, int pred) {
  const auto preds = model::rollout(p, c, std::span(s.frames).first(obs), s.actions, pred);
  return loss_mse(preds, std::span(s.frames).subspan(obs, pred));
}

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

// Central differences on every parameter coordinate. Coordinates whose
// gradient magnitude is below `floor` are compared against the floor.
GradCheck check_all_coordinates(const model::Params& p, const FloWMConfig& c,
                                const Sequence& s, int obs, int pred,
                                double floor = 1e-8) {
  const LossAndGrad lg = episode_loss_and_grad(p, c, s.frames, s.actions, obs, pred);
  EXPECT_NEAR(lg.loss, rollout_loss(p, c, s, obs, pred), 1e-12 * (1.0 + lg.loss));
  GradCheck out;
  model::Params q = p;
  auto qk = q.kernels();
  auto gk = lg.grad.kernels();
  const double h = 1e-6;
  for (std::size_t k = 0; k < qk.size(); ++k) {
    for (auto [vals, grads] :
         {std::pair{&qk[k]->weights, &gk[k]->weights}, std::pair{&qk[k]->bias, &gk[k]->bias}}) {
      for (std::size_t i = 0; i < vals->size(); ++i) {
        const double orig = (*vals)[i];
        (*vals)[i] = orig + h;
        const double lp = rollout_loss(q, c, s, obs, pred);
        (*vals)[i] = orig - h;
        const double lm = rollout_loss(q, c, s, obs, pred);
        (*vals)[i] = orig;
        const double numeric = (lp - lm) / (2 * h);
        const double analytic = (*grads)[i];
        const double scale = std::max({std::abs(numeric), std::abs(analytic), floor});
        out.max_rel = std::max(out.max_rel, std::abs(numeric - analytic) / scale);
        ++out.checked;
      }
    }
  }
  return out;
}

TEST(LossMse, ExamplesAndOracle) {
  std::mt19937_64 rng(1);
  const Field a = random_field(rng, 1, 5, 5);
  EXPECT_EQ(loss_mse(std::vector{a}, std::vector{a}), 0.0);
  EXPECT_EQ(loss_mse(std::vector{Field(1, 2, 2)}, std::vector{Field(1, 2, 2, 1.0)}), 4.0);
  std::vector<Field> p, t;
  for (int i = 0; i < 4; ++i) {
    p.push_back(random_field(rng, 1, 5, 5));
    t.push_back(random_field(rng, 1, 5, 5));
  }
  double oracle = 0.0;
  for (int i = 0; i < 4; ++i) {
    for (int y = 0; y < 5; ++y) {
      for (int x = 0; x < 5; ++x) {
        oracle += std::pow(p[i].at(0, y, x) - t[i].at(0, y, x), 2);
      }
    }
  }
  EXPECT_NEAR(loss_mse(p, t), oracle / 4, 1e-12);
  EXPECT_THROW(loss_mse(p, std::span(t).first(3)), ShapeError);
}

TEST(Backward, ZeroLossGivesZeroGradient) {
  const FloWMConfig c = tiny_config();
  model::Params p = model::zero_params(c);
  Sequence s;
  s.frames.assign(5, Field(1, 6, 6));
  s.actions.assign(5, env::Action{1, -1});
  const LossAndGrad lg = episode_loss_and_grad(p, c, s.frames, s.actions, 3, 2);
  EXPECT_EQ(lg.loss, 0.0);
  EXPECT_EQ(global_norm(lg.grad), 0.0);
}

TEST(Backward, OneStepMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  const FloWMConfig c = tiny_config();
  const model::Params p = model::init_params(c, 3);
  const Sequence s = random_sequence(rng, 2, 6);
  const GradCheck g = check_all_coordinates(p, c, s, 1, 1);
  EXPECT_EQ(g.checked, p.count());
  EXPECT_LT(g.max_rel, 1e-5);
}

TEST(Backward, FiveStepMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  const FloWMConfig c = tiny_config();
  const model::Params p = model::init_params(c, 5);
  const Sequence s = random_sequence(rng, 6, 6);
  const GradCheck g = check_all_coordinates(p, c, s, 3, 3);
  EXPECT_LT(g.max_rel, 1e-4);
  const GradCheck g2 = check_all_coordinates(p, c, s, 3, 2);
  EXPECT_LT(g2.max_rel, 1e-4);
}

TEST(Backward, VariantsMatchFiniteDifferences) {
  struct Variant {
    std::string name;
    std::function<void(FloWMConfig&)> apply;
  };
  const std::vector<Variant> variants = {
      {"no-vc", [](FloWMConfig& c) { c.apply_ablation(model::Ablation::kNoVc); }},
      {"no-sme", [](FloWMConfig& c) { c.apply_ablation(model::Ablation::kNoSme); }},
      {"no-sme-no-vc", [](FloWMConfig& c) { c.apply_ablation(model::Ablation::kNoSmeNoVc); }},
      {"action-concat", [](FloWMConfig& c) { c.apply_ablation(model::Ablation::kActionConcat); }},
      {"closed-loop", [](FloWMConfig& c) { c.rollout_input = model::RolloutInput::kClosedLoop; }},
      {"sigmoid", [](FloWMConfig& c) { c.activation = grid::Activation::kSigmoid; }},
      {"identity", [](FloWMConfig& c) { c.activation = grid::Activation::kIdentity; }},
  };
  std::mt19937_64 rng(6);
  for (const Variant& v : variants) {
    FloWMConfig c = tiny_config();
    v.apply(c);
    const model::Params p = model::init_params(c, 7);
    const Sequence s = random_sequence(rng, 6, 6);
    EXPECT_LT(check_all_coordinates(p, c, s, 3, 3).max_rel, 1e-4) << v.name;
  }
}

TEST(Backward, BatchIsMeanInFixedOrder) {
  std::mt19937_64 rng(8);
  const FloWMConfig c = tiny_config();
  const model::Params p = model::init_params(c, 9);
  std::vector<env::Episode> eps;
  for (int i = 0; i < 3; ++i) {
    const Sequence s = random_sequence(rng, 5, 6);
    env::Episode e;
    e.frames = s.frames;
    e.actions = s.actions;
    e.window = 6;
    e.world = 8;
    eps.push_back(e);
  }
  const std::vector<std::size_t> idx = {2, 0, 1};
  const LossAndGrad one = batch_loss_and_grad(p, c, eps, idx, 3, 2, 1);
  const LossAndGrad many = batch_loss_and_grad(p, c, eps, idx, 3, 2, 3);
  EXPECT_EQ(one.loss, many.loss);
  EXPECT_EQ(one.grad, many.grad);
  double mean = 0.0;
  for (const auto& e : eps) {
    mean += episode_loss_and_grad(p, c, e.frames, e.actions, 3, 2).loss / 3;
  }
  EXPECT_NEAR(one.loss, mean, 1e-12);
}

model::Params filled(const FloWMConfig& c, double v) {
  model::Params g = model::zero_params(c);
  for (grid::Kernel* k : g.kernels()) {
    std::fill(k->weights.begin(), k->weights.end(), v);
    std::fill(k->bias.begin(), k->bias.end(), v);
  }
  return g;
}

TEST(ClipByNorm, Examples) {
  const FloWMConfig c = tiny_config();
  const double n = static_cast<double>(model::zero_params(c).count());
  model::Params g = filled(c, 0.5 / std::sqrt(n));
  const model::Params before = g;
  EXPECT_NEAR(clip_by_norm(g, 1.0), 0.5, 1e-12);
  EXPECT_EQ(g, before);
  g = filled(c, 2.0 / std::sqrt(n));
  EXPECT_NEAR(clip_by_norm(g, 1.0), 2.0, 1e-12);
  EXPECT_NEAR(global_norm(g), 1.0, 1e-12);
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 50; ++trial) {
    model::Params r = model::zero_params(c);
    const double scale = std::pow(10.0, u(rng) * 2);
    for (grid::Kernel* k : r.kernels()) {
      for (double& x : k->weights) x = u(rng) * scale / 30;
    }
    const double pre = global_norm(r);
    clip_by_norm(r, 1.0);
    EXPECT_NEAR(global_norm(r), std::min(pre, 1.0), 1e-12);
    EXPECT_LE(global_norm(r), 1.0 + 1e-12);
  }
}

TEST(AdamStep, ZeroGradientFirstStepAndDeterminism) {
  const FloWMConfig c = tiny_config();
  const model::Params p0 = model::init_params(c, 11);
  model::Params p = p0;
  AdamState s = AdamState::for_params(p);
  adam_step(p, model::zero_params(c), s, 1e-4);
  EXPECT_EQ(p, p0);

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1, 1);
  model::Params g = model::zero_params(c);
  for (grid::Kernel* k : g.kernels()) {
    for (double& x : k->weights) x = u(rng);
    for (double& x : k->bias) x = u(rng);
  }
  p = p0;
  s = AdamState::for_params(p);
  adam_step(p, g, s, 1e-3);
  auto pk = p.kernels();
  auto p0k = p0.kernels();
  auto gk = g.kernels();
  for (std::size_t k = 0; k < pk.size(); ++k) {
    for (std::size_t i = 0; i < pk[k]->weights.size(); ++i) {
      // m_hat / sqrt(v_hat) = g / |g| on the first step.
      const double gi = gk[k]->weights[i];
      const double expected = -1e-3 * gi / (std::abs(gi) + 1e-8);
      EXPECT_NEAR(pk[k]->weights[i] - p0k[k]->weights[i], expected, 1e-12);
    }
  }
  model::Params a = p0, b = p0;
  AdamState sa = AdamState::for_params(a), sb = AdamState::for_params(b);
  for (int i = 0; i < 3; ++i) {
    adam_step(a, g, sa, 1e-3);
    adam_step(b, g, sb, 1e-3);
  }
  EXPECT_EQ(a, b);
  EXPECT_EQ(sa.step, 3);
}

std::vector<env::Episode> small_dataset(int n, std::uint64_t seed0) {
  env::DatasetConfig d = env::DatasetConfig::for_subset(env::Subset::kDynamicPo);
  d.world_size = 8;
  d.window_size = 6;
  d.n_sprites = 1;
  d.sprite_size = 4;
  d.self_motion_range = 1;
  d.velocity_range = 1;
  d.n_frames = 8;
  std::vector<env::Episode> eps;
  for (int i = 0; i < n; ++i) eps.push_back(env::generate_episode(d, seed0 + i));
  return eps;
}

TEST(Train, DeterministicAndDecreasing) {
  FloWMConfig c = tiny_config();
  c.action_scale = 1;
  TrainConfig tc;
  tc.learning_rate = 3e-3;
  tc.batch_size = 4;
  tc.epochs = 6;
  tc.obs_len = 4;
  tc.pred_len = 2;
  tc.long_horizon = 4;
  tc.seed = 3;
  const auto train_set = small_dataset(16, 100);
  const auto val_set = small_dataset(4, 900);
  const fs::path dir = fs::temp_directory_path() / "flowm_train_test";
  fs::remove_all(dir);
  const TrainResult a = train(c, tc, train_set, val_set, dir / "a");
  tc.threads = 3;
  const TrainResult b = train(c, tc, train_set, val_set, dir / "b");
  EXPECT_EQ(a.final_params, b.final_params);
  EXPECT_EQ(a.steps, 24);
  ASSERT_EQ(a.metrics.size(), 25u);
  for (const char* f : {"metrics.csv", "best.ckpt", "final.ckpt"}) {
    std::ifstream fa(dir / "a" / f, std::ios::binary), fb(dir / "b" / f, std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    EXPECT_FALSE(sa.str().empty());
    EXPECT_EQ(sa.str(), sb.str()) << f;
  }
  // Validation at step 0 and at every epoch end.
  int validated = 0;
  for (const MetricsRow& r : a.metrics) validated += r.val_mse_short.has_value();
  EXPECT_EQ(validated, 7);
  ASSERT_TRUE(a.metrics.back().val_mse_long.has_value());
  EXPECT_LT(*a.metrics.back().val_mse_short, *a.metrics.front().val_mse_short);
  double first_epoch = 0.0, last_epoch = 0.0;
  for (int i = 1; i <= 4; ++i) {
    first_epoch += *a.metrics[i].train_loss;
    last_epoch += *a.metrics[a.metrics.size() - i].train_loss;
  }
  EXPECT_LT(last_epoch, first_epoch);
  EXPECT_EQ(model::load_checkpoint(dir / "a" / "final.ckpt").params, a.final_params);
  std::ifstream csv(dir / "a" / "metrics.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "step,epoch,train_loss,val_mse_20,val_mse_150");
}

TEST(Train, BestCheckpointFollowsSelectedHorizon) {
  FloWMConfig c = tiny_config();
  c.action_scale = 1;
  TrainConfig tc;
  tc.learning_rate = 1e-2;
  tc.batch_size = 4;
  tc.epochs = 4;
  tc.obs_len = 4;
  tc.pred_len = 2;
  tc.long_horizon = 4;
  const auto train_set = small_dataset(8, 300);
  const auto val_set = small_dataset(3, 700);
  for (bool on_long : {false, true}) {
    tc.select_on_long = on_long;
    const TrainResult r = train(c, tc, train_set, val_set, {});
    double best = INFINITY;
    for (const MetricsRow& row : r.metrics) {
      if (row.val_mse_short) best = std::min(best, on_long ? *row.val_mse_long : *row.val_mse_short);
    }
    EXPECT_EQ(r.best_val_mse, best);
    EXPECT_EQ(validation_mse(r.best_params, c, val_set, tc.obs_len,
                             on_long ? tc.long_horizon : tc.pred_len, 1),
              best);
  }
  tc.long_horizon = 10;  // longer than the episodes
  EXPECT_THROW(train(c, tc, train_set, val_set, {}), ConfigError);
}

TEST(Train, RejectsBadInputs) {
  const FloWMConfig c = tiny_config();
  TrainConfig tc;
  tc.obs_len = 4;
  tc.pred_len = 2;
  tc.epochs = 1;
  const auto eps = small_dataset(2, 1);
  tc.pred_len = 0;
  EXPECT_THROW(train(c, tc, eps, {}, {}), ConfigError);
  tc.pred_len = 10;
  EXPECT_THROW(train(c, tc, eps, {}, {}), ConfigError);
  FloWMConfig wrong = c;
  wrong.world_size = 10;
  tc.pred_len = 2;
  EXPECT_THROW(train(wrong, tc, eps, {}, {}), ConfigError);
  tc.learning_rate = 1e308;
  tc.epochs = 5;
  tc.max_steps = 3;
  EXPECT_THROW(train(c, tc, eps, {}, {}), NumericError);
}

}  // namespace
}  // namespace flowm::train
