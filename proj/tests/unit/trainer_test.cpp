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


#include "gradbid/train/trainer.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "../support/fixtures.hpp"

namespace gradbid::train {
namespace {

using testing::small_dataset;
using testing::tiny_config;

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("gradbid_trainer_" + name);
  std::filesystem::remove_all(p);
  return p;
}

TrainConfig small_train_config() {
  TrainConfig c;
  c.batch_size = 4;
  c.num_steps = 10;
  return c;
}

// ---- behavior data ------------------------------------------------------------

TEST(Behavior, UnperturbedPidSpendsNearBudget) {
  BehaviorConfig bc;
  bc.num_episodes = 20;
  bc.perturb = false;
  bc.budget_jitter_low = bc.budget_jitter_high = 1.0;
  bc.coef_jitter_low = bc.coef_jitter_high = 1.0;
  const auto ds = generate_behavior_data(bc);
  for (const auto& tr : ds.trajectories) {
    const double spent = tr.totals->total_cost;
    EXPECT_GE(spent, 0.9 * bc.env.budget) << "episode " << tr.episode_id;
    EXPECT_LE(spent, 1.1 * bc.env.budget) << "episode " << tr.episode_id;
  }
}

TEST(Behavior, PerturbationStaysWithinTwentyPercent) {
  const auto ds = small_dataset(10);
  bool varied = false;
  for (std::size_t e = 0; e < ds.trajectories.size(); ++e) {
    const auto& steps = ds.trajectories[e].steps;
    ASSERT_EQ(steps.size(), ds.base_actions[e].size());
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const double r = steps[t].action / ds.base_actions[e][t];
      EXPECT_GE(r, 0.8);
      EXPECT_LT(r, 1.2);
      varied |= r != 1.0;
    }
  }
  EXPECT_TRUE(varied);
}

TEST(Behavior, DatasetInvariantsAndDeterminism) {
  const auto a = small_dataset(6, 3);
  const auto b = small_dataset(6, 3);
  a.validate(48);
  ASSERT_EQ(a.trajectories.size(), 6u);
  for (std::size_t e = 0; e < 6; ++e) {
    EXPECT_EQ(env::trajectory_to_line(a.trajectories[e]), env::trajectory_to_line(b.trajectories[e]));
  }
  auto broken = a;
  broken.trajectories[2].steps[5].rtg += 1e-9;
  EXPECT_THROW(broken.validate(48), std::invalid_argument);
  EXPECT_THROW(a.validate(47), std::invalid_argument);
  BehaviorConfig none;
  none.num_episodes = 0;
  EXPECT_THROW(generate_behavior_data(none), std::invalid_argument);
}

TEST(Behavior, NormalizationStats) {
  const auto ds = small_dataset(5);
  // The bias feature is constant, so its deviation falls back to 1.
  EXPECT_EQ(ds.state_mean[env::kBias], 1.0);
  EXPECT_EQ(ds.state_std[env::kBias], 1.0);
  const auto z = ds.normalize(ds.trajectories[0].steps[3].state);
  EXPECT_EQ(z[env::kBias], 0.0);
}

// ---- batches ---------------------------------------------------------------

TEST(Batches, PaddingArithmetic) {
  const auto ds = small_dataset(2);
  model::ModelConfig cfg;  // seq_len 20
  BatchSampler s(ds, cfg, 1, 1);
  auto b = s.make_batch(1);
  s.fill_window(b, 0, 1, 5);
  std::size_t pads = 0;
  for (std::size_t k = 0; k < cfg.seq_len; ++k) pads += b.tokens.valid[k] == 0;
  EXPECT_EQ(pads, 15u);
  // The last slot holds step 4, the first valid slot step 0.
  EXPECT_EQ(b.step_index[19], 4u);
  EXPECT_EQ(b.step_index[15], 0u);
  EXPECT_EQ(b.tokens.prev_action[15], 0.0);
  EXPECT_EQ(b.tokens.prev_action[16], ds.trajectories[1].steps[0].action);
  EXPECT_EQ(b.target_action[19], ds.trajectories[1].steps[4].action);
  EXPECT_DOUBLE_EQ(b.tokens.rtg[19], ds.trajectories[1].steps[4].rtg / cfg.rtg_scale);
  const auto z = ds.normalize(ds.trajectories[1].steps[4].state);
  for (std::size_t d = 0; d < env::kStateDim; ++d) EXPECT_EQ(b.tokens.states[19 * env::kStateDim + d], z[d]);
  // A window ending at 48 is full.
  s.fill_window(b, 0, 0, 48);
  EXPECT_TRUE(std::all_of(b.tokens.valid.begin(), b.tokens.valid.end(), [](auto v) { return v == 1; }));
  EXPECT_EQ(b.step_index[0], 28u);
  EXPECT_THROW(s.fill_window(b, 0, 0, 0), std::out_of_range);
}

TEST(Batches, SameSeedSameStream) {
  const auto ds = small_dataset(5);
  const auto cfg = tiny_config();
  BatchSampler a(ds, cfg, 8, 42), b(ds, cfg, 8, 42), c(ds, cfg, 8, 43);
  for (std::uint64_t i = 0; i < 5; ++i) {
    const auto x = a.sample(i), y = b.sample(i);
    EXPECT_EQ(x.tokens.states, y.tokens.states);
    EXPECT_EQ(x.target_action, y.target_action);
    EXPECT_EQ(x.tokens.valid, y.tokens.valid);
  }
  EXPECT_NE(a.sample(0).target_action, c.sample(0).target_action);
}

TEST(Batches, DiscountedReturnsToGo) {
  const auto ds = small_dataset(1);
  model::ModelConfig cfg;
  BatchSampler s(ds, cfg, 1, 1, true, 0.5);
  auto b = s.make_batch(1);
  s.fill_window(b, 0, 0, 48);
  const auto& steps = ds.trajectories[0].steps;
  EXPECT_EQ(b.rtg[19], steps[47].reward);
  EXPECT_DOUBLE_EQ(b.rtg[18], steps[46].reward + 0.5 * steps[47].reward);
}

TEST(Batches, PaddingContributesNothing) {
  const auto ds = small_dataset(4);
  Trainer tr(small_train_config(), tiny_config(), ds);
  auto batch = tr.sampler().make_batch(2);
  tr.sampler().fill_window(batch, 0, 0, 2);
  tr.sampler().fill_window(batch, 1, 1, 3);
  const auto base = tr.evaluate(batch, 0, false).losses;
  for (std::size_t i = 0; i < batch.tokens.tokens(); ++i) {
    if (batch.tokens.valid[i]) continue;
    batch.tokens.rtg[i] = 99.0;
    batch.tokens.prev_action[i] = 3.0;
    batch.target_action[i] = 4.0;
    batch.rtg[i] = 1e4;
    batch.raw_states[i].fill(0.7);
    for (std::size_t d = 0; d < env::kStateDim; ++d) batch.tokens.states[i * env::kStateDim + d] = -5.0;
  }
  const auto again = tr.evaluate(batch, 0, false).losses;
  EXPECT_EQ(base.policy, again.policy);
  EXPECT_EQ(base.value, again.value);
  EXPECT_EQ(base.balance, again.balance);
  EXPECT_EQ(base.diversity, again.diversity);
  EXPECT_EQ(base.total, again.total);
}

// ---- training step ----------------------------------------------------------

TEST(TrainStep, TotalIsTheWeightedSumEveryStep) {
  const auto ds = small_dataset(6);
  auto tc = small_train_config();
  tc.lambda_b = 0.3;
  tc.lambda_d = 0.7;
  Trainer tr(tc, tiny_config(), ds);
  for (int i = 0; i < 20; ++i) {
    const auto l = tr.train_step().losses;
    EXPECT_NEAR(l.total, l.policy + l.value + 0.3 * l.balance + 0.7 * l.diversity, 1e-12);
  }
}

TEST(TrainStep, AblationFlagsZeroTheirComponents) {
  const auto ds = small_dataset(4);
  auto tc = small_train_config();
  tc.use_action_moe = false;
  tc.use_value_estimator = false;
  Trainer bc(tc, tiny_config(), ds);
  const auto l = bc.train_step().losses;
  EXPECT_EQ(l.value, 0.0);
  EXPECT_EQ(l.balance, 0.0);
  EXPECT_EQ(l.diversity, 0.0);
  EXPECT_EQ(l.total, l.policy);

  auto tc2 = small_train_config();
  tc2.lambda_b = tc2.lambda_d = 0.0;
  Trainer pv(tc2, tiny_config(), ds);
  const auto l2 = pv.train_step().losses;
  EXPECT_GT(l2.balance, 0.0);
  EXPECT_EQ(l2.total, l2.policy + l2.value);
}

std::map<std::string, std::vector<double>> snapshot(const model::GradModel& m) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [p, t] : m.params().all()) out[p] = {t.value().begin(), t.value().end()};
  return out;
}

bool group_changed(const std::map<std::string, std::vector<double>>& before, const model::GradModel& m,
                   const std::string& prefix) {
  for (const auto& [p, t] : m.params().all()) {
    if (!p.starts_with(prefix)) continue;
    if (before.at(p) != std::vector<double>(t.value().begin(), t.value().end())) return true;
  }
  return false;
}

struct Isolation {
  bool moe, value;
};

class AblationIsolation : public ::testing::TestWithParam<Isolation> {};

TEST_P(AblationIsolation, OnlyEnabledGroupsMove) {
  const auto flags = GetParam();
  const auto ds = small_dataset(4);
  auto tc = small_train_config();
  tc.use_action_moe = flags.moe;
  tc.use_value_estimator = flags.value;
  Trainer tr(tc, tiny_config(), ds);
  const auto before = snapshot(tr.model());
  for (int i = 0; i < 3; ++i) tr.train_step();
  EXPECT_TRUE(group_changed(before, tr.model(), "ct/"));
  EXPECT_EQ(group_changed(before, tr.model(), "moe/"), flags.moe);
  EXPECT_EQ(group_changed(before, tr.model(), "value/"), flags.value);
  const auto prefixes = tr.trainable_prefixes();
  EXPECT_EQ(std::count(prefixes.begin(), prefixes.end(), "moe/"), flags.moe ? 1 : 0);
}

INSTANTIATE_TEST_SUITE_P(Flags, AblationIsolation,
                         ::testing::Values(Isolation{true, true}, Isolation{true, false}, Isolation{false, true},
                                           Isolation{false, false}),
                         [](const auto& info) {
                           return std::string(info.param.moe ? "moe" : "no_moe") +
                                  (info.param.value ? "_value" : "_no_value");
                         });

TEST(TrainStep, OverfitsAFixedBatch) {
  const auto ds = small_dataset(4);
  auto tc = small_train_config();
  tc.lr = 3e-3;
  auto cfg = tiny_config();
  cfg.hidden_size = 16;
  Trainer tr(tc, cfg, ds);
  const auto batch = tr.sampler().sample(0);
  const double first = tr.evaluate(batch, 0, false).losses.total;
  for (int i = 0; i < 100; ++i) tr.train_on(batch);
  const double last = tr.evaluate(batch, 0, false).losses.total;
  EXPECT_LE(last, 0.5 * first) << first << " -> " << last;
}

TEST(TrainStep, NonFiniteLossNamesTheComponent) {
  const auto ds = small_dataset(2);
  Trainer tr(small_train_config(), tiny_config(), ds);
  auto v = tr.model().params().get("value/head/fc2/b").value_mut();
  v[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    tr.train_step();
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("value"), std::string::npos) << e.what();
  }
}

TEST(TrainStep, IdenticalConfigsGiveIdenticalTraces) {
  const auto ds = small_dataset(4);
  Trainer a(small_train_config(), tiny_config(), ds), b(small_train_config(), tiny_config(), ds);
  for (int i = 0; i < 10; ++i) {
    const auto x = a.train_step().losses, y = b.train_step().losses;
    ASSERT_EQ(x.total, y.total) << "step " << i;
    ASSERT_EQ(x.policy, y.policy);
    ASSERT_EQ(x.value, y.value);
  }
}

// ---- checkpoints -------------------------------------------------------------

TEST(Checkpoint, ResumeReproducesTheTrace) {
  const auto ds = small_dataset(4);
  const auto dir = temp_dir("resume");
  Trainer a(small_train_config(), tiny_config(), ds);
  for (int i = 0; i < 5; ++i) a.train_step();
  a.save_checkpoint(dir);
  std::vector<double> expected;
  for (int i = 0; i < 5; ++i) expected.push_back(a.train_step().losses.total);

  Trainer b(small_train_config(), tiny_config(), ds);
  b.load_checkpoint(dir);
  EXPECT_EQ(b.step(), 5u);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(b.train_step().losses.total, expected[static_cast<std::size_t>(i)]);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, ForwardIsBitIdenticalAfterRoundTrip) {
  const auto ds = small_dataset(4);
  const auto dir = temp_dir("forward");
  Trainer a(small_train_config(), tiny_config(), ds);
  for (int i = 0; i < 3; ++i) a.train_step();
  a.save_checkpoint(dir);
  Trainer b(small_train_config(), tiny_config(), ds);
  b.load_checkpoint(dir);
  const auto batch = a.sampler().sample(77);
  const auto x = a.model().backbone().forward(batch.tokens).action;
  const auto y = b.model().backbone().forward(batch.tokens).action;
  EXPECT_TRUE(std::equal(x.value().begin(), x.value().end(), y.value().begin(), y.value().end()));
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, MismatchedShapesNameTheParameter) {
  const auto ds = small_dataset(2);
  const auto dir = temp_dir("mismatch");
  Trainer a(small_train_config(), tiny_config(), ds);
  a.save_checkpoint(dir);
  auto wide = tiny_config();
  wide.hidden_size = 16;
  model::GradModel m(wide, 1);
  try {
    ad::load_parameters(m.params(), ad::read_checkpoint(dir));
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("ct/"), std::string::npos) << e.what();
  }
  Trainer b(small_train_config(), wide, ds);
  EXPECT_THROW(b.load_checkpoint(dir), std::runtime_error);
  EXPECT_THROW(b.load_checkpoint(temp_dir("missing")), std::runtime_error);
  std::filesystem::remove_all(dir);
}

// ---- bundle and reports --------------------------------------------------------

TEST(Bundle, TargetsFollowTheLoggedReturns) {
  const auto ds = small_dataset(30);
  auto returns = ds.episode_returns();
  std::sort(returns.begin(), returns.end());
  const double q90 = target_return(ds);
  EXPECT_GE(q90, returns[25]);
  EXPECT_LE(q90, returns[27]);
  EXPECT_EQ(target_return(ds, 1.0), returns.back());
  EXPECT_EQ(target_return(ds, 0.0), returns.front());

  PolicyBundle b;
  b.target_return = 5.0;
  EXPECT_EQ(b.target_for(100.0), 5.0);
  for (int i = 0; i < 20; ++i) b.budget_returns.emplace_back(100.0 + i, 10.0 + i);
  for (int i = 0; i < 20; ++i) b.budget_returns.emplace_back(300.0 + i, 50.0 + i);
  EXPECT_GE(b.target_for(110.0), 10.0);
  EXPECT_LE(b.target_for(110.0), 29.0);
  EXPECT_GE(b.target_for(310.0), 50.0);
  // Sparse neighbourhoods widen to the nearest episodes.
  EXPECT_LE(b.target_for(60.0), 29.0);
}

TEST(Bundle, JsonRoundTrip) {
  const auto ds = small_dataset(3);
  Trainer tr(small_train_config(), tiny_config(), ds);
  const auto b = tr.bundle();
  const auto back = policy_bundle_from_json(nlohmann::json::parse(to_json(b).dump()));
  EXPECT_EQ(back.state_mean, b.state_mean);
  EXPECT_EQ(back.state_std, b.state_std);
  EXPECT_EQ(back.target_return, b.target_return);
  EXPECT_EQ(back.budget_returns, b.budget_returns);
  EXPECT_EQ(model::to_json(back.model), model::to_json(b.model));
}

TEST(TrainConfigs, JsonRoundTripAndValidation) {
  TrainConfig c = TrainConfig::large();
  c.use_action_moe = false;
  const auto back = train_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.batch_size, 128u);
  EXPECT_EQ(back.lr, 1e-5);
  TrainConfig bad;
  bad.lr = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Reports, LossCsv) {
  std::ostringstream os;
  write_loss_header(os);
  write_loss_row(os, 3, {0.5, 0.25, 1.0, -0.5, 0.875});
  EXPECT_EQ(os.str(), "step,policy,value,balance,diversity,total\n3,0.5,0.25,1,-0.5,0.875\n");
}

}  // namespace
}  // namespace gradbid::train
