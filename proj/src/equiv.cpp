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

#include "flowm/equiv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "flowm/env.hpp"
#include "flowm/error.hpp"
#include "flowm/model.hpp"

namespace flowm::equiv {

namespace {

using flow::FlowElement;
using flow::Velocity;
using grid::Field;

double max_diff(const Field& a, const Field& b) {
  if (!a.same_shape(b)) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  }
  return m;
}

Field random_field(std::mt19937_64& rng, int c, int h, int w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Field f(c, h, w);
  for (double& v : f.data) v = u(rng);
  return f;
}

// Integer deviation between two flow elements: displacement mismatch.
double flow_dev(const FlowElement& a, const FlowElement& b) {
  if (a.world() != b.world()) return std::numeric_limits<double>::infinity();
  return std::abs(a.dx() - b.dx()) + std::abs(a.dy() - b.dy());
}

model::FloWMConfig recurrence_config(const RecurrenceOptions& o) {
  model::FloWMConfig c;
  c.world_size = o.world;
  c.window_size = o.window;
  c.hidden_channels = o.channels;
  c.velocities = flow::VelocitySet::square(o.radius);
  c.action_scale = std::max(1, o.radius);
  c.validate();
  return c;
}

void note(CheckResult& r, double dev) { r.max_deviation = std::max(r.max_deviation, dev); }

}  // namespace

bool EquivReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const CheckResult& c) { return c.passed(); });
}

void EquivReport::append(const EquivReport& other) {
  checks.insert(checks.end(), other.checks.begin(), other.checks.end());
}

std::string EquivReport::table() const {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-44s %12s %9s %8s %10s  %s\n", "check",
                "max_dev", "covered", "skipped", "bound", "result");
  out += line;
  for (const CheckResult& c : checks) {
    std::snprintf(line, sizeof(line), "%-44s %12.3e %9zu %8zu %s%9.0e  %s\n",
                  c.name.c_str(), c.max_deviation, c.covered, c.skipped,
                  c.negative_control ? ">" : "<=", c.tolerance,
                  c.passed() ? "PASS" : "FAIL");
    out += line;
  }
  return out;
}

EquivReport check_flow_laws(const std::vector<int>& worlds,
                            const flow::VelocitySet& velocities, int t_max,
                            std::uint64_t seed) {
  CheckResult identity{"flow: psi_0 is identity"};
  CheckResult one_param{"flow: psi_s+t = psi_s . psi_t"};
  CheckResult iterate{"flow: psi_t = t-fold psi_1"};
  CheckResult inverse{"flow: psi . psi^-1 = id"};
  CheckResult additive{"flow: psi_t(v+w) = psi_t(v) . psi_t(w)"};
  CheckResult action{"flow: action homomorphism on fields"};
  std::mt19937_64 rng(seed);
  for (int world : worlds) {
    const Field f = random_field(rng, 2, world, world);
    for (const Velocity& v : velocities) {
      note(identity, flow_dev(flow::flow_at(v, 0, world), FlowElement::identity(world)));
      ++identity.covered;
      FlowElement repeated = FlowElement::identity(world);
      for (int t = 0; t <= t_max; ++t) {
        const FlowElement pt = flow::flow_at(v, t, world);
        note(iterate, flow_dev(pt, repeated));
        ++iterate.covered;
        repeated = flow::compose(repeated, flow::flow_at(v, 1, world));
        note(inverse, flow_dev(flow::compose(pt, pt.inverse()), FlowElement::identity(world)));
        ++inverse.covered;
        for (int s = 0; s <= t_max; ++s) {
          const FlowElement ps = flow::flow_at(v, s, world);
          note(one_param, flow_dev(flow::flow_at(v, s + t, world), flow::compose(ps, pt)));
          ++one_param.covered;
          note(action, max_diff(flow::act_on_field(flow::compose(ps, pt), f),
                                flow::act_on_field(ps, flow::act_on_field(pt, f))));
          ++action.covered;
        }
        for (const Velocity& w : velocities) {
          note(additive, flow_dev(flow::flow_at(v + w, t, world),
                                  flow::compose(pt, flow::flow_at(w, t, world))));
          ++additive.covered;
        }
      }
    }
  }
  EquivReport r;
  for (CheckResult* c : {&identity, &one_param, &iterate, &inverse, &additive, &action}) {
    c->tolerance = 0.0;
    r.checks.push_back(*c);
  }
  return r;
}

EquivReport check_theorem_a1(const RecurrenceOptions& opts) {
  if (opts.window != opts.world) {
    throw ConfigError("theorem check requires full observability (window == world)");
  }
  const model::FloWMConfig cfg = recurrence_config(opts);
  CheckResult pos{"theorem: h[psi f](v) = psi h[f](v - v^)"};
  CheckResult neg{"theorem: zero-padded encoder (control)"};
  neg.negative_control = true;
  neg.tolerance = kControlThreshold;
  const flow::VelocitySet& V = cfg.velocities;

  for (int trial = 0; trial < opts.trials; ++trial) {
    std::mt19937_64 rng(opts.seed * 1000003 + trial);
    const model::Params params = model::init_params(cfg, rng());
    std::vector<Field> frames;
    for (int t = 0; t < opts.steps; ++t) {
      frames.push_back(random_field(rng, 1, opts.world, opts.world));
    }
    for (const auto& [padding, result] :
         {std::pair{grid::Padding::kCircular, &pos}, std::pair{grid::Padding::kZero, &neg}}) {
      const model::AbstractOps ops = model::simple_ops(cfg, params, padding);
      for (const Velocity& nu_hat : V) {
        model::HiddenState a = model::init_hidden(cfg);
        model::HiddenState b = a;
        for (int t = 0; t < opts.steps; ++t) {
          const Field moved =
              flow::act_on_field(flow::flow_at(nu_hat, t, opts.world), frames[t]);
          a = model::step_generalized(a, &frames[t], ops, V, opts.world);
          b = model::step_generalized(b, &moved, ops, V, opts.world);
          const flow::StackAction expected = flow::act_on_stack(
              flow::flow_at(nu_hat, t + 1, opts.world), nu_hat, V, a.stack);
          for (std::size_t i = 0; i < V.size(); ++i) {
            if (!expected.valid[i]) {
              ++result->skipped;
              continue;
            }
            ++result->covered;
            note(*result, max_diff(b.stack[i], expected.stack[i]));
          }
        }
      }
    }
  }
  return EquivReport{{pos, neg}};
}

EquivReport check_self_motion_closure(const RecurrenceOptions& opts) {
  model::FloWMConfig cfg = recurrence_config(opts);
  cfg.activation = grid::Activation::kIdentity;
  CheckResult pos{"closure: loop states stay world-consistent"};
  CheckResult fin{"closure: loop returns to pure flow"};
  CheckResult two{"closure: (1,0),(-1,0) equals zero actions"};
  CheckResult neg{"closure: no-SME ablation (control)"};
  neg.negative_control = true;
  neg.tolerance = kControlThreshold;
  fin.covered = 0;
  const int range = std::max(1, opts.world / 2 - 1);

  for (int trial = 0; trial < opts.trials; ++trial) {
    std::mt19937_64 rng(opts.seed * 1000003 + trial + 17);
    std::uniform_int_distribution<int> u(-range, range);
    const Field f = random_field(rng, 1, opts.window, opts.window);
    const env::Action first{u(rng), u(rng)};
    std::vector<env::Action> loop(opts.steps);
    env::Action total{0, 0};
    for (int k = 0; k + 1 < opts.steps; ++k) {
      loop[k] = {u(rng), u(rng)};
      total.ax += loop[k].ax;
      total.ay += loop[k].ay;
    }
    loop.back() = {-total.ax, -total.ay};

    for (const bool sme : {true, false}) {
      model::FloWMConfig c = cfg;
      if (!sme) c.apply_ablation(model::Ablation::kNoSme);
      model::Params p = model::init_params(c, rng());
      p.W = grid::Kernel::delta(c.hidden_channels, c.kernel_size, c.kernel_size);
      const model::HiddenState h1 = model::step(model::init_hidden(c), &f, first, c, p);
      model::HiddenState h = h1;
      Velocity moved{0, 0};
      CheckResult& r = sme ? pos : neg;
      for (int k = 0; k < opts.steps; ++k) {
        h = model::step(h, nullptr, loop[k], c, p);
        moved = moved + loop[k].as_velocity();
        for (std::size_t i = 0; i < c.velocities.size(); ++i) {
          const Velocity v = c.velocities[i];
          const Velocity d{(k + 1) * v.vx - moved.vx, (k + 1) * v.vy - moved.vy};
          note(r, max_diff(h.stack[i], grid::roll(h1.stack[i], d.vx, d.vy)));
          ++r.covered;
        }
      }
      if (sme) {
        for (std::size_t i = 0; i < c.velocities.size(); ++i) {
          const Velocity v = c.velocities[i];
          note(fin, max_diff(h.stack[i],
                             grid::roll(h1.stack[i], opts.steps * v.vx, opts.steps * v.vy)));
          ++fin.covered;
        }
        model::HiddenState x = model::step(h1, nullptr, {1, 0}, c, p);
        x = model::step(x, nullptr, {-1, 0}, c, p);
        model::HiddenState y = model::step(h1, nullptr, {0, 0}, c, p);
        y = model::step(y, nullptr, {0, 0}, c, p);
        for (std::size_t i = 0; i < c.velocities.size(); ++i) {
          note(two, max_diff(x.stack[i], y.stack[i]));
          ++two.covered;
        }
      }
    }
  }
  return EquivReport{{pos, fin, two, neg}};
}

EquivReport check_relative_motion(const RecurrenceOptions& opts) {
  CheckResult frames_rc{"relative: frames identical"};
  CheckResult single{"relative: sprite (-1,0) vs actions (1,0)x5"};
  CheckResult model_rc{"relative: model slice v vs v - a"};
  CheckResult neg{"relative: no-SME model (control)"};
  neg.negative_control = true;
  neg.tolerance = kControlThreshold;

  // The documented single-sprite example.
  {
    env::WorldState w;
    w.world_size = opts.world;
    env::Sprite s;
    s.bitmap = Field(1, 2, 2, 1.0);
    s.bitmap.at(0, 0, 1) = 0.5;
    s.y = 1;
    s.x = 2;
    w.sprites.push_back(s);
    env::AgentState agent{0, 0, opts.world};
    env::WorldState counter = w;
    counter.sprites[0].velocity = {-1, 0};
    const env::AgentState still = agent;
    for (int t = 0; t < 6; ++t) {
      note(single, max_diff(env::observe(w, agent), env::observe(counter, still)));
      ++single.covered;
      agent = env::move_agent(agent, {1, 0}, opts.world);
      counter = env::step_world(counter);
    }
  }

  const model::FloWMConfig cfg = recurrence_config(opts);
  env::DatasetConfig dc = env::DatasetConfig::for_subset(env::Subset::kDynamicFo);
  dc.world_size = opts.world;
  dc.window_size = opts.window;
  dc.n_sprites = 2;
  dc.sprite_size = std::max(2, opts.world / 3);
  dc.velocity_range = 1;
  dc.self_motion_range = opts.radius;
  const env::SpriteBank bank(dc.sprite_size);

  for (int trial = 0; trial < opts.trials; ++trial) {
    env::Rng rng(opts.seed * 1000003 + trial + 31);
    const env::World start = env::init_world(dc, rng, bank);
    std::uniform_int_distribution<int> u(-opts.radius, opts.radius);
    const env::Action a{u(rng), u(rng)};
    env::World moving = start;
    env::World fixed = start;
    for (env::Sprite& s : fixed.world.sprites) s.velocity = s.velocity - a.as_velocity();
    std::vector<Field> fa, fb;
    for (int t = 0; t < opts.steps; ++t) {
      fa.push_back(env::observe(moving.world, moving.agent));
      fb.push_back(env::observe(fixed.world, fixed.agent));
      note(frames_rc, max_diff(fa.back(), fb.back()));
      ++frames_rc.covered;
      moving.agent = env::move_agent(moving.agent, a, opts.world);
      moving.world = env::step_world(moving.world);
      fixed.world = env::step_world(fixed.world);
    }

    for (const bool sme : {true, false}) {
      model::FloWMConfig c = cfg;
      if (!sme) c.apply_ablation(model::Ablation::kNoSme);
      const model::Params p = model::init_params(c, rng());
      model::HiddenState ha = model::init_hidden(c), hb = ha;
      CheckResult& r = sme ? model_rc : neg;
      for (int t = 0; t < opts.steps; ++t) {
        ha = model::step(ha, &fa[t], a, c, p);
        hb = model::step(hb, &fb[t], {0, 0}, c, p);
        for (std::size_t i = 0; i < c.velocities.size(); ++i) {
          const auto j = c.velocities.index_of(c.velocities[i] - a.as_velocity());
          if (!j) {
            ++r.skipped;
            continue;
          }
          ++r.covered;
          note(r, max_diff(grid::window(ha.stack[i], c.window_size),
                           grid::window(hb.stack[*j], c.window_size)));
        }
      }
    }
  }
  return EquivReport{{frames_rc, single, model_rc, neg}};
}

EquivReport run_suite(const std::string& suite, std::uint64_t seed, int trials) {
  if (trials < 1) throw ConfigError("verify: trials must be >= 1");
  const bool all = suite == "all";
  if (!all && suite != "flow" && suite != "theorem" && suite != "closure" &&
      suite != "relative") {
    throw ConfigError("unknown suite '" + suite +
                      "' (expected flow, theorem, closure, relative, all)");
  }
  EquivReport report;
  RecurrenceOptions opts;
  opts.seed = seed;
  opts.trials = trials;
  if (all || suite == "flow") {
    report.append(check_flow_laws({5, 8, 16}, flow::VelocitySet::square(2), 10, seed));
  }
  if (all || suite == "theorem") report.append(check_theorem_a1(opts));
  if (all || suite == "closure") {
    RecurrenceOptions o = opts;
    o.window = 6;
    report.append(check_self_motion_closure(o));
  }
  if (all || suite == "relative") report.append(check_relative_motion(opts));
  return report;
}

}  // namespace flowm::equiv
