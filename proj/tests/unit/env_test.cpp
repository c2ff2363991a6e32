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

#include "gradbid/env/auction.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

namespace gradbid::env {
namespace {

Policy constant(double c) {
  return [c](const StepState&, std::span<const StepRecord>) { return c; };
}

TEST(ComputeBid, Examples) {
  EXPECT_EQ(compute_bid(1.0, {0.5, 0.5, 0.1, 0}), 0.5);
  EXPECT_DOUBLE_EQ(compute_bid(2.5, {0.4, 0.4, 0.1, 0}), 1.0);
  EXPECT_LT(compute_bid(1e-12, {1.0, 1.0, 0.1, 0}), 1e-11);
  EXPECT_THROW(compute_bid(0.0, {0.5, 0.5, 0.1, 0}), std::invalid_argument);
  EXPECT_THROW(compute_bid(std::nan(""), {0.5, 0.5, 0.1, 0}), std::invalid_argument);
  try {
    compute_bid(std::numeric_limits<double>::infinity(), {});
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "invalid coefficient");
  }
}

TEST(RunStep, SecondPriceAndBudgetGate) {
  Rng rng(1);
  const std::vector<ImpressionOpportunity> one{{0.6, 0.0, 0.5, 0}};
  BudgetAccount rich(10.0);
  auto s = run_step(1.0, one, rich, rng);
  EXPECT_TRUE(s.outcomes[0].won);
  EXPECT_EQ(s.outcomes[0].cost, 0.5);
  EXPECT_EQ(rich.spent(), 0.5);

  BudgetAccount poor(0.3);
  s = run_step(1.0, one, poor, rng);
  EXPECT_FALSE(s.outcomes[0].won);
  EXPECT_EQ(s.outcomes[0].cost, 0.0);
  EXPECT_FALSE(s.outcomes[0].clicked);
  EXPECT_EQ(poor.spent(), 0.0);
}

TEST(RunStep, RewardIsSumOfWonValues) {
  Rng rng(2);
  const std::vector<ImpressionOpportunity> opps{{0.2, 0.1, 0.01, 0}, {0.3, 0.1, 0.01, 0}, {0.1, 0.1, 0.01, 0}};
  BudgetAccount acct(10.0);
  const auto s = run_step(10.0, opps, acct, rng);
  EXPECT_EQ(s.wins, 3u);
  EXPECT_DOUBLE_EQ(s.reward, 0.6);
}

TEST(RunStep, HigherBidNeverLosesAndNeverPaysMore) {
  Rng gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const std::vector<ImpressionOpportunity> opp{{u(gen), 0.5, u(gen), 0}};
    const double lo = 0.1 + 3.0 * u(gen), hi = lo + u(gen);
    Rng r1(9), r2(9);
    BudgetAccount a1(100.0), a2(100.0);
    const auto o1 = run_step(lo, opp, a1, r1).outcomes[0];
    const auto o2 = run_step(hi, opp, a2, r2).outcomes[0];
    EXPECT_GE(o2.won, o1.won);
    if (o1.won) EXPECT_EQ(o1.cost, o2.cost);
  }
}

TEST(Featurize, EpisodeStartAndPacing) {
  const FeatureScales sc{48, 5.0, 500.0};
  auto f = featurize_state({0, 300.0, 0.0, 0, 0.0, 0.9}, {}, sc);
  EXPECT_EQ(f[0], 0.0);
  EXPECT_EQ(f[1], 1.0);
  EXPECT_EQ(f[2], 1.0);
  EXPECT_EQ(f[4], 0.0);
  EXPECT_EQ(f[15], 1.0);
  f = featurize_state({24, 300.0, 150.0, 10, 0.0, 0.9}, {}, sc);
  EXPECT_DOUBLE_EQ(f[3], 1.0);
  EXPECT_THROW(featurize_state({48, 300.0, 0.0, 0, 0.0, 0.9}, {}, sc), std::out_of_range);
  EXPECT_THROW(featurize_state({1, 300.0, 301.0, 0, 0.0, 0.9}, {}, sc), std::invalid_argument);
}

TEST(Featurize, MidEpisodeSnapshotMatchesHandComputation) {
  EpisodeConfig cfg;
  cfg.seed = 77;
  const auto res = run_episode(constant(1.3), cfg);
  const std::size_t t = 20;
  // Recompute every feature of state t from the raw outcome log.
  double spent = 0, value = 0;
  std::size_t clicks = 0;
  struct Agg {
    double n = 0, wins = 0, cost = 0, value = 0;
  };
  std::vector<Agg> per(t);
  for (std::size_t s = 0; s < t; ++s) {
    for (std::size_t i = 0; i < res.outcomes[s].size(); ++i) {
      const auto& o = res.outcomes[s][i];
      per[s].n += 1;
      if (!o.won) continue;
      per[s].wins += 1;
      per[s].cost += o.cost;
      per[s].value += res.opportunities[s][i].value;
      spent += o.cost;
      clicks += o.clicked;
    }
    value += per[s].value;
  }
  const double T = 48;
  const auto& f = res.trajectory.steps[t].state;
  EXPECT_DOUBLE_EQ(f[0], t / T);
  EXPECT_DOUBLE_EQ(f[1], 1 - t / T);
  EXPECT_NEAR(f[2], (300 - spent) / 300, 1e-12);
  EXPECT_NEAR(f[3], std::min(1.5, spent / (300 * t / T)), 1e-12);
  EXPECT_NEAR(f[4], std::min(1.5, spent / clicks / 0.9), 1e-12);
  const Agg& last = per[t - 1];
  EXPECT_DOUBLE_EQ(f[5], last.wins / last.n);
  EXPECT_NEAR(f[6], last.cost / last.wins, 1e-12);
  EXPECT_NEAR(f[7], last.value / last.wins, 1e-12);
  EXPECT_NEAR(f[8], last.value * T / 500, 1e-12);
  Agg w;
  for (std::size_t s = t - 3; s < t; ++s) {
    w.n += per[s].n;
    w.wins += per[s].wins;
    w.cost += per[s].cost;
    w.value += per[s].value;
  }
  EXPECT_DOUBLE_EQ(f[9], w.wins / w.n);
  EXPECT_NEAR(f[10], w.cost / w.wins, 1e-12);
  EXPECT_NEAR(f[11], w.value / w.wins, 1e-12);
  EXPECT_NEAR(f[12], w.value / 3 * T / 500, 1e-12);
  EXPECT_DOUBLE_EQ(f[13], 1.3 / 5.0);
  EXPECT_NEAR(f[14], value / 500, 1e-12);
  EXPECT_EQ(f[15], 1.0);
}

TEST(RunEpisode, TinyCoefficientNeverWins) {
  EpisodeConfig cfg;
  for (double c : {0.0, 1e-9}) {
    const auto r = run_episode(constant(c), cfg);
    EXPECT_EQ(r.total_value, 0.0);
    EXPECT_EQ(r.total_cost, 0.0);
  }
}

TEST(RunEpisode, HugeCoefficientStopsAtBudget) {
  EpisodeConfig cfg;
  cfg.budget = 20.0;
  const auto r = run_episode(constant(1e9), cfg);
  EXPECT_LE(r.total_cost, cfg.budget);
  EXPECT_GT(r.total_cost, cfg.budget - 1.0);
}

TEST(RunEpisode, InvalidActionAborts) {
  EpisodeConfig cfg;
  for (double bad : {-0.1, std::nan(""), std::numeric_limits<double>::infinity()}) {
    try {
      run_episode(constant(bad), cfg);
      FAIL();
    } catch (const std::invalid_argument& e) {
      EXPECT_STREQ(e.what(), "invalid action");
    }
  }
}

TEST(RunEpisode, DeterministicByteForByte) {
  EpisodeConfig cfg;
  cfg.seed = 4242;
  auto pol = [](const StepState& s, std::span<const StepRecord> h) {
    return 0.5 + s[kBudgetRemaining] + 0.01 * static_cast<double>(h.size());
  };
  const auto a = run_episode(pol, cfg, 3);
  const auto b = run_episode(pol, cfg, 3);
  EXPECT_EQ(trajectory_to_line(a.trajectory), trajectory_to_line(b.trajectory));
  EXPECT_EQ(a.total_clicks, b.total_clicks);
  cfg.seed = 4243;
  EXPECT_NE(trajectory_to_line(run_episode(pol, cfg, 3).trajectory), trajectory_to_line(a.trajectory));
}

TEST(RunEpisode, RandomEpisodesRespectInvariants) {
  // Budget safety, reward telescoping and state well-formedness over 10^4
  // episodes with random configs and random (history-dependent) policies.
  Rng gen(20260101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int ep = 0; ep < 10000; ++ep) {
    EpisodeConfig cfg;
    cfg.seed = gen();
    cfg.budget = 1.0 + 400.0 * u(gen);
    cfg.cpc_limit = 0.1 + 2.0 * u(gen);
    cfg.num_steps = 48;
    cfg.impressions_per_step = 1 + static_cast<std::size_t>(u(gen) * 20);
    const double base = 4.0 * u(gen);
    const std::uint64_t pseed = gen();
    Policy pol = [base, pseed](const StepState& s, std::span<const StepRecord> h) {
      Rng r(pseed + h.size());
      return base * std::uniform_real_distribution<double>(0.0, 2.0)(r) * (0.5 + s[kBudgetRemaining]);
    };
    const auto res = run_episode(pol, cfg, static_cast<std::uint64_t>(ep));
    ASSERT_LE(res.total_cost, cfg.budget) << "episode " << ep;

    double telescoped = 0.0, cost = 0.0;
    for (std::size_t t = 0; t < cfg.num_steps; ++t) {
      double step_value = 0.0;
      for (std::size_t i = 0; i < res.outcomes[t].size(); ++i) {
        const auto& o = res.outcomes[t][i];
        if (o.won) {
          step_value += res.opportunities[t][i].value;
          cost += o.cost;
          ASSERT_LE(o.cost, compute_bid(res.trajectory.steps[t].action, res.opportunities[t][i]));
        } else {
          ASSERT_EQ(o.cost, 0.0);
          ASSERT_FALSE(o.clicked);
        }
      }
      ASSERT_EQ(step_value, res.per_step_rewards[t]);
      telescoped += step_value;
    }
    ASSERT_EQ(telescoped, res.total_value);
    double reward_sum = 0.0;
    for (double r : res.per_step_rewards) reward_sum += r;
    ASSERT_EQ(reward_sum, res.total_value);
    ASSERT_EQ(cost, res.total_cost);

    ASSERT_EQ(res.trajectory.steps.size(), 48u);
    for (const auto& s : res.trajectory.steps) {
      for (std::size_t i = 0; i < kStateDim; ++i) ASSERT_TRUE(std::isfinite(s.state[i]));
      for (std::size_t i = 0; i <= kCpcRatio; ++i) {
        ASSERT_GE(s.state[i], 0.0);
        ASSERT_LE(s.state[i], 1.5);
      }
    }
  }
}

TEST(Trajectory, RoundTripsThroughFile) {
  EpisodeConfig cfg;
  cfg.seed = 5;
  std::vector<Trajectory> trajs;
  for (std::uint64_t e = 0; e < 3; ++e) {
    cfg.seed = e + 10;
    trajs.push_back(run_episode(constant(1.1 + 0.1 * e), cfg, e).trajectory);
  }
  trajs[1].totals.reset();
  const auto path = (std::filesystem::temp_directory_path() / "gradbid_traj_test.jsonl").string();
  write_trajectories(path, trajs);
  const auto back = read_trajectories(path);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(trajectory_to_line(back[i]), trajectory_to_line(trajs[i]));
  EXPECT_FALSE(back[1].totals.has_value());
  const auto line = trajectory_to_line(trajs[0]);
  EXPECT_LT(line.find("\"episode_id\""), line.find("\"config\""));
  EXPECT_LT(line.find("\"config\""), line.find("\"steps\""));
  EXPECT_LT(line.find("\"state\""), line.find("\"action\""));
  EXPECT_LT(line.find("\"reward\""), line.find("\"rtg\""));
  // rtg at t=0 equals the episode's total value.
  EXPECT_NEAR(back[0].steps[0].rtg, back[0].totals->total_value, 1e-9);
  std::filesystem::remove(path);
  EXPECT_THROW(read_trajectories(path), std::runtime_error);
}

}  // namespace
}  // namespace gradbid::env
