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

// Runs the flowm executable and checks exit codes and outputs.

#include <sys/wait.h>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;

// A fresh directory per test, so tests may run in parallel processes.
fs::path work() {
  const std::string name = ::testing::UnitTest::GetInstance()->current_test_info()->name();
  const fs::path d = fs::temp_directory_path() / ("flowm_cli_" + name);
  static std::string prepared;
  if (prepared != name) {
    fs::remove_all(d);
    fs::create_directories(d);
    prepared = name;
  }
  return d;
}

int run(const std::string& args) {
  const std::string cmd = "cd '" + work().string() + "' && '" FLOWM_CLI "' " + args +
                          " > last.out 2> last.err";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

void write_tiny_config() {
  std::ofstream(work() / "tiny.cfg") << "# small enough for a unit test\n"
                                        "[env]\nworld_size = 12\nwindow_size = 8\n"
                                        "n_sprites = 1\nsprite_size = 4\nn_frames = 9\n"
                                        "self_motion_range = 2\nvelocity_range = 1\n"
                                        "[model]\nhidden_channels = 3\nvelocity_radius = 1\n"
                                        "[train]\nbatch_size = 2\nepochs = 1\nobs_len = 4\n"
                                        "pred_len = 2\nlong_horizon = 5\n"
                                        "[eval]\nhorizons = 2,5\n";
}

TEST(Cli, VerifyAllPasses) {
  EXPECT_EQ(run("verify --suite all --seed 7"), 0);
  const std::string out = slurp(work() / "last.out");
  EXPECT_NE(out.find("theorem"), std::string::npos);
  EXPECT_EQ(out.find("FAIL"), std::string::npos);
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("gen-data --out x --bogus"), 1);
  EXPECT_NE(slurp(work() / "last.err").find("Usage"), std::string::npos);
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("verify --suite nope"), 1);
  EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, ConfigErrorsExitOne) {
  std::ofstream(work() / "bad.cfg") << "[train]\nlearnig_rate = 1\n";
  EXPECT_EQ(run("gen-data --config bad.cfg --out x"), 1);
  EXPECT_NE(slurp(work() / "last.err").find("did you mean 'train.learning_rate'"),
            std::string::npos);
  EXPECT_EQ(run("gen-data --set env.n_sprites=-1 --out x"), 1);
  EXPECT_EQ(run("gen-data --set oops --out x"), 1);
}

TEST(Cli, IoErrorsExitThree) {
  EXPECT_EQ(run("train --data missing_dir --out x"), 3);
  std::ofstream(work() / "junk.ckpt") << "junk";
  EXPECT_EQ(run("render --checkpoint junk.ckpt --data missing_dir --out x"), 3);
}

TEST(Cli, GenDataIsByteIdentical) {
  ASSERT_EQ(run("gen-data --subset dynamic_po --episodes 10 --seed 1 --out d1/"), 0);
  ASSERT_EQ(run("gen-data --subset dynamic_po --episodes 10 --seed 1 --out d2/"), 0);
  for (const char* f : {"train.fwm", "val.fwm"}) {
    const std::string a = slurp(work() / "d1" / f);
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(work() / "d2" / f)) << f;
  }
  ASSERT_EQ(run("gen-data --subset dynamic_po --episodes 10 --seed 2 --out d3/"), 0);
  EXPECT_NE(slurp(work() / "d1/train.fwm"), slurp(work() / "d3/train.fwm"));
  const std::string manifest = slurp(work() / "d1/manifest.json");
  for (const char* key : {"\"subcommand\": \"gen-data\"", "\"seed\": 1", "\"version\"",
                          "\"started\"", "\"finished\"", "episodes = 10"}) {
    EXPECT_NE(manifest.find(key), std::string::npos) << key;
  }
}

TEST(Cli, TrainEvalRenderPipeline) {
  write_tiny_config();
  ASSERT_EQ(run("gen-data --config tiny.cfg --episodes 6 --val-episodes 3 --seed 4 --out data"),
            0);
  ASSERT_EQ(run("train --config tiny.cfg --data data --out full --deterministic"), 0);
  ASSERT_EQ(run("train --config tiny.cfg --data data --out full2 --deterministic"), 0);
  ASSERT_EQ(run("train --config tiny.cfg --data data --out novc --ablation no-vc --seed 3"), 0);
  for (const char* f : {"metrics.csv", "best.ckpt", "final.ckpt"}) {
    EXPECT_EQ(slurp(work() / "full" / f), slurp(work() / "full2" / f)) << f;
  }
  EXPECT_EQ(lines(work() / "full/metrics.csv").front(), "step,epoch,train_loss,val_mse_20,val_mse_150");

  ASSERT_EQ(run("eval --config tiny.cfg --checkpoint full/best.ckpt --checkpoint novc/best.ckpt "
                "--data data --horizons 2,5 --out ev"),
            0);
  const std::vector<std::string> rows = lines(work() / "ev/summary.csv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], "model,mse_2,mse_5,psnr_2,psnr_5,ssim_2,ssim_5");
  EXPECT_EQ(rows[1].substr(0, 5), "full,");
  EXPECT_EQ(rows[2].substr(0, 6), "no-vc,");
  EXPECT_EQ(rows[3].substr(0, 10), "all-black,");
  // Header plus one row per (model, timestep) for three models over 5 steps.
  EXPECT_EQ(lines(work() / "ev/metrics.csv").size(), 1u + 3 * 5);
  EXPECT_EQ(run("eval --config tiny.cfg --checkpoint full/best.ckpt --data data --horizons 50 "
                "--out ev2"),
            1);

  ASSERT_EQ(run("render --config tiny.cfg --checkpoint full/best.ckpt --data data --episode 2 "
                "--out r1"),
            0);
  ASSERT_EQ(run("render --config tiny.cfg --checkpoint full/best.ckpt --data data --episode 2 "
                "--out r2"),
            0);
  EXPECT_EQ(slurp(work() / "r1/strip.pgm"), slurp(work() / "r2/strip.pgm"));
  EXPECT_TRUE(fs::exists(work() / "r1/pred_001.pgm"));
  EXPECT_FALSE(fs::exists(work() / "r1/pred_002.pgm"));
  EXPECT_EQ(run("render --config tiny.cfg --checkpoint full/best.ckpt --data data --episode 3 "
                "--out r3"),
            1);
}

}  // namespace
