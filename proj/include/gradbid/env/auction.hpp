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

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradbid/util/rng.hpp"

namespace gradbid::env {

inline constexpr std::size_t kStateDim = 16;
using StepState = std::array<double, kStateDim>;

// Feature slots of StepState.
enum Feature : std::size_t {
  kTimeElapsed = 0,
  kTimeRemaining = 1,
  kBudgetRemaining = 2,
  kSpendVelocity = 3,
  kCpcRatio = 4,
  kLastWinRate = 5,
  kLastMeanCost = 6,
  kLastMeanValue = 7,
  kLastReward = 8,
  kWindowWinRate = 9,
  kWindowMeanCost = 10,
  kWindowMeanValue = 11,
  kWindowReward = 12,
  kPrevAction = 13,
  kCumValue = 14,
  kBias = 15,
};

// Ratio features are clipped to this ceiling.
inline constexpr double kRatioCeiling = 1.5;
inline constexpr std::size_t kRecentWindow = 3;

struct ImpressionOpportunity {
  double value = 0.0;
  double pctr = 0.0;
  double competitor_bid = 0.0;
  std::size_t step_index = 0;
};

struct AuctionOutcome {
  bool won = false;
  double cost = 0.0;
  bool clicked = false;
};

struct Distribution {
  enum class Kind { kBeta, kLogNormal, kUniform };
  Kind kind = Kind::kBeta;
  double a = 2.0;  // beta: alpha, lognormal: mu, uniform: low
  double b = 5.0;  // beta: beta, lognormal: sigma, uniform: high

  static Distribution beta(double alpha, double beta) { return {Kind::kBeta, alpha, beta}; }
  static Distribution lognormal(double mu, double sigma) { return {Kind::kLogNormal, mu, sigma}; }
  static Distribution uniform(double lo, double hi) { return {Kind::kUniform, lo, hi}; }

  double sample(Rng& rng) const;
  std::string name() const;
  void validate() const;
};

struct EpisodeConfig {
  double budget = 300.0;
  double cpc_limit = 0.9;
  std::size_t num_steps = 48;
  std::size_t impressions_per_step = 50;
  Distribution value_distribution = Distribution::beta(2.0, 5.0);
  Distribution competitor_distribution = Distribution::lognormal(-1.0, 0.5);
  // pctr = min(1, value * ctr_scale).
  double ctr_scale = 1.0;
  // Ceiling of the bid coefficient; normalizes the previous-action feature.
  double action_scale = 5.0;
  // Normalizer for the cumulative-value feature and per-step reward features.
  double value_scale = 500.0;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::ordered_json to_json(const EpisodeConfig& c);
EpisodeConfig episode_config_from_json(const nlohmann::json& j);

// Budget account with exact accounting: a charge is admitted only if
// spent + cost <= budget, and `spent` is the running sum of admitted charges,
// so the reported total never exceeds the budget.
class BudgetAccount {
 public:
  explicit BudgetAccount(double budget) : budget_(budget) {}
  bool try_charge(double cost) {
    if (spent_ + cost > budget_) return false;
    spent_ += cost;
    return true;
  }
  double budget() const { return budget_; }
  double spent() const { return spent_; }
  double remaining() const { return budget_ - spent_; }

 private:
  double budget_;
  double spent_ = 0.0;
};

// Bid for one opportunity. Throws std::invalid_argument("invalid coefficient")
// for coef <= 0 or non-finite coef.
double compute_bid(double coef, const ImpressionOpportunity& opp);

struct StepOutcome {
  std::vector<AuctionOutcome> outcomes;
  double reward = 0.0;
  double cost = 0.0;
  std::size_t wins = 0;
  std::size_t clicks = 0;
};

// Runs one decision step. coef == 0 is accepted and loses every auction.
// One uniform click draw is consumed per opportunity whether won or not, so
// the click stream stays aligned across policies.
StepOutcome run_step(double coef, std::span<const ImpressionOpportunity> opportunities,
                     BudgetAccount& account, Rng& click_rng);

struct StepAggregate {
  std::size_t opportunities = 0;
  std::size_t wins = 0;
  double cost = 0.0;
  double value = 0.0;
  double action = 0.0;
};

struct PacingSnapshot {
  std::size_t t = 0;
  double budget = 0.0;
  double spent = 0.0;
  std::size_t clicks = 0;
  double value_so_far = 0.0;
  double cpc_limit = 0.0;
};

struct FeatureScales {
  std::size_t num_steps = 48;
  double action_scale = 5.0;
  double value_scale = 500.0;
};

FeatureScales feature_scales(const EpisodeConfig& c);

// Builds the 16-feature state. `history` holds the aggregates of all steps
// before t (only the last kRecentWindow are read).
//
//   [0] t/T                      [8]  last reward * T / value_scale
//   [1] 1 - t/T                  [9..12] same as [5..8] over the last 3 steps
//   [2] remaining budget share   [13] previous action / action_scale
//   [3] spend velocity (clipped) [14] cumulative value / value_scale
//   [4] CPC / cpc_limit (clipped)[15] 1
//   [5] last win rate
//   [6] last mean cost per win
//   [7] last mean value per win
StepState featurize_state(const PacingSnapshot& snap, std::span<const StepAggregate> history,
                          const FeatureScales& scales);

struct StepRecord {
  std::size_t t = 0;
  StepState state{};
  double action = 0.0;
  double reward = 0.0;
  double rtg = 0.0;
};

struct EpisodeTotals {
  double total_value = 0.0;
  double total_cost = 0.0;
  std::size_t total_clicks = 0;
};

struct Trajectory {
  std::uint64_t episode_id = 0;
  EpisodeConfig config;
  std::vector<StepRecord> steps;
  // Absent in files that carry only the step records.
  std::optional<EpisodeTotals> totals;
};

struct EpisodeResult {
  double total_value = 0.0;
  double total_cost = 0.0;
  std::size_t total_clicks = 0;
  std::vector<double> per_step_rewards;
  double realized_cpc = 0.0;
  Trajectory trajectory;
  // Per-step opportunities and outcomes, in auction order.
  std::vector<std::vector<ImpressionOpportunity>> opportunities;
  std::vector<std::vector<AuctionOutcome>> outcomes;
};

// Everything a policy may look at: the steps already taken this episode.
using Policy = std::function<double(const StepState&, std::span<const StepRecord>)>;

// Draws all opportunities of an episode from the config's seed. Independent
// of the policy, so two policies on the same config face identical auctions.
std::vector<std::vector<ImpressionOpportunity>> sample_opportunities(const EpisodeConfig& config);

// Incremental episode driver for callers that interleave many episodes
// (batched policies). run_episode is a loop over this class.
class EpisodeStepper {
 public:
  EpisodeStepper(const EpisodeConfig& config, std::uint64_t episode_id);

  bool done() const { return t_ >= config_.num_steps; }
  std::size_t t() const { return t_; }
  // State for the current step.
  const StepState& state() const { return state_; }
  const EpisodeConfig& config() const { return config_; }
  std::span<const StepRecord> history() const { return result_.trajectory.steps; }
  double spent() const { return account_.spent(); }
  // Applies `action` to the current step. Throws "invalid action".
  void step(double action);
  // Finalizes returns-to-go and totals. Only valid once done().
  EpisodeResult finish() &&;

 private:
  void refresh_state();

  EpisodeConfig config_;
  FeatureScales scales_;
  BudgetAccount account_;
  Rng click_rng_;
  std::vector<StepAggregate> history_;
  EpisodeResult result_;
  StepState state_{};
  std::size_t t_ = 0;
};

// Throws std::invalid_argument("invalid action") if the policy returns a
// negative or non-finite action.
EpisodeResult run_episode(const Policy& policy, const EpisodeConfig& config,
                          std::uint64_t episode_id = 0);

// Fills rtg[t] = sum of rewards from t to the end.
void fill_returns_to_go(std::vector<StepRecord>& steps);

// Line-delimited trajectory files, one episode per line.
std::string trajectory_to_line(const Trajectory& traj);
Trajectory trajectory_from_line(std::string_view line);
void write_trajectories(const std::string& path, std::span<const Trajectory> trajs);
std::vector<Trajectory> read_trajectories(const std::string& path);

// Totals if present. Otherwise value is the reward sum, cost is the spend
// recorded in the final state (the last step's charges are not observable
// from states) and clicks are 0.
EpisodeTotals totals_of(const Trajectory& traj);

}  // namespace gradbid::env
