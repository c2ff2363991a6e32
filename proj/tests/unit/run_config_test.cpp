// Copyright 2026 The gradbid Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <sstream>

#include "gradbid/train/run_config.hpp"

namespace gradbid::train {
namespace {

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_run_config(in, "test.cfg");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const std::invalid_argument& e) {
    return e.what();
  }
  return "";
}

TEST(RunConfigFile, EmptyFileGivesDeskDefaults) {
  const auto c = parse("# nothing\n\n");
  EXPECT_EQ(to_json(c.train), to_json(TrainConfig::desk()));
  EXPECT_EQ(model::to_json(c.model), model::to_json(model::ModelConfig::desk()));
  EXPECT_EQ(to_json(c.behavior), to_json(BehaviorConfig{}));
}

TEST(RunConfigFile, OverridesEverySection) {
  const auto c = parse(
      "train.lr = 3e-4\n"
      "train.use_action_moe = false\n"
      "train.num_steps=250\n"
      "model.num_experts = 8\n"
      "model.time_mode = raw\n"
      "env.budget = 150\n"
      "env.competitor_distribution = uniform(0.1, 0.9)\n"
      "behavior.num_episodes = 40\n"
      "pid.kp = 0.25   \n");
  EXPECT_EQ(c.train.lr, 3e-4);
  EXPECT_FALSE(c.train.use_action_moe);
  EXPECT_EQ(c.train.num_steps, 250u);
  EXPECT_EQ(c.model.num_experts, 8u);
  EXPECT_EQ(c.model.time_mode, model::TimeMode::kRawStep);
  EXPECT_EQ(c.behavior.env.budget, 150.0);
  EXPECT_EQ(c.behavior.env.competitor_distribution.name(), "uniform");
  EXPECT_EQ(c.behavior.env.competitor_distribution.b, 0.9);
  EXPECT_EQ(c.behavior.num_episodes, 40u);
  EXPECT_EQ(c.behavior.pid.kp, 0.25);
}

TEST(RunConfigFile, LargeProfileThenOverrides) {
  const auto c = parse("model.num_layers = 3\nprofile = large\n");
  EXPECT_EQ(c.train.batch_size, 128u);
  EXPECT_EQ(c.train.lr, 1e-5);
  EXPECT_EQ(c.model.hidden_size, 512u);
  EXPECT_EQ(c.model.num_layers, 3u);
}

TEST(RunConfigFile, ActionScaleFollowsEnvironment) {
  EXPECT_EQ(parse("env.action_scale = 4\n").model.action_scale, 4.0);
  EXPECT_NE(error_of("env.action_scale = 4\nmodel.action_scale = 5\n").find("must equal"), std::string::npos);
}

TEST(RunConfigFile, ErrorsNameTheLine) {
  EXPECT_EQ(error_of("train.lr = 1e-3\ntrain.bogus = 1\n"), "test.cfg:2: unknown key 'train.bogus'");
  EXPECT_EQ(error_of("lr = 1\n"), "test.cfg:1: unknown key 'lr'");
  EXPECT_EQ(error_of("train.batch_size = -3\n"), "test.cfg:1: train.batch_size: expected an integer");
  EXPECT_EQ(error_of("train.use_action_moe = maybe\n"), "test.cfg:1: train.use_action_moe: expected true or false");
  EXPECT_EQ(error_of("train.lr\n"), "test.cfg:1: expected key = value");
  EXPECT_EQ(error_of("train.lr = 1\ntrain.lr = 2\n"), "test.cfg:2: duplicate key 'train.lr'");
  EXPECT_EQ(error_of("behavior.env = 1\n"), "test.cfg:1: unknown key 'behavior.env'");
  EXPECT_NE(error_of("env.value_distribution = beta 2 5\n").find("name(a, b)"), std::string::npos);
  EXPECT_FALSE(error_of("model.time_mode = weekly\n").empty());
  EXPECT_FALSE(error_of("train.lr = -1\n").empty());
}

TEST(RunConfigFile, JsonRoundTrip) {
  const auto c = parse("train.seed = 9\nenv.cpc_limit = 1.1\npid.ki = 0.1\nbehavior.perturb = false\n");
  const auto back = run_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back), to_json(c));
}

}  // namespace
}  // namespace gradbid::train
