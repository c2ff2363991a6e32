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

#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradbid/eval/metrics.hpp"
#include "gradbid/eval/rollout.hpp"
#include "gradbid/train/trainer.hpp"

namespace gradbid::eval {

// Evaluation episodes for a (level, seed) pair share their auction draws
// across levels; only the budget changes.
struct EvalProtocol {
  env::EpisodeConfig env;  // budget here is the 100% reference
  std::vector<double> levels{0.5, 0.75, 1.0, 1.25, 1.5};
  std::size_t episodes = 20;
  ConstraintSpec constraint;
  RolloutOptions rollout;

  static EvalProtocol for_env(const env::EpisodeConfig& env);
};

std::vector<env::EpisodeConfig> eval_episodes(const EvalProtocol& p, double level, std::uint64_t seed);

// Fractional-knapsack bound on the value any bidder could collect from the
// episode's opportunities, where winning costs the competing bid.
double oracle_bound(const env::EpisodeResult& episode);

struct LevelEvaluation {
  double level = 0.0;
  double budget = 0.0;
  std::vector<EpisodeSummary> episodes;
  std::vector<double> scores;         // per episode
  std::vector<double> oracle_bounds;  // per episode
  double mean_score = 0.0;
  double mean_value = 0.0;
  double cpc_cr = 0.0;  // episodes as days, tolerance 1.2
  double exceed_rate = 0.0;
  double cpc_ratio = 0.0;  // pooled realized CPC over the limit
};

LevelEvaluation evaluate_level(const BiddingAgent& agent, const EvalProtocol& p, double level, std::uint64_t seed);

struct LevelStats {
  double level = 0.0;
  double budget = 0.0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over seeds
  std::vector<double> per_seed;
  double oracle_bound = 0.0;  // mean per-episode bound
  bool oracle_dominates = true;  // bound >= score on every episode
  double cpc_cr = 0.0;
  double exceed_rate = 0.0;
};

struct SweepResult {
  std::vector<LevelStats> levels;
  std::string fingerprint;
};

struct SweepEntry {
  const BiddingAgent* agent = nullptr;
  std::uint64_t seed = 0;
};

SweepResult run_sweep(std::span<const SweepEntry> entries, const EvalProtocol& p);

enum class Variant { kFull, kNoMoe, kNoValue, kNoBoth };
std::string variant_name(Variant v);
train::TrainConfig apply_variant(train::TrainConfig c, Variant v);

struct TrainedPolicy {
  std::unique_ptr<model::GradModel> model;
  train::PolicyBundle bundle;

  BiddingAgent agent() const { return BiddingAgent(*model, bundle); }
};

using StepHook = std::function<void(std::uint64_t step, const train::StepTelemetry&)>;

TrainedPolicy train_policy(const train::TrajectoryDataset& data, const train::TrainConfig& tcfg,
                           const model::ModelConfig& mcfg, const StepHook& on_step = {});

struct ExperimentSetup {
  train::TrainConfig train;
  model::ModelConfig model;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  EvalProtocol protocol;
};

struct AblationRow {
  Variant variant = Variant::kFull;
  std::vector<double> mean;   // per level
  std::vector<double> std;    // per level
  std::vector<double> delta;  // mean minus the full model's mean
  std::vector<std::vector<double>> per_seed;  // [seed][level]
};

struct AblationResult {
  std::vector<double> levels;
  std::vector<AblationRow> rows;
};

struct AblationHooks {
  std::function<void(Variant, std::uint64_t seed, std::uint64_t step, const train::StepTelemetry&)> on_step;
  std::function<void(Variant, std::uint64_t seed, const TrainedPolicy&)> on_trained;
};

// Trains every variant once per seed and scores it at the protocol's levels.
// The full model is always trained, since deltas are taken against it.
AblationResult run_ablation(const train::TrajectoryDataset& data, const ExperimentSetup& setup,
                            std::span<const Variant> variants, const AblationHooks& hooks = {});

struct ExpertSweepRow {
  std::size_t experts = 0;
  double score = 0.0;
  double total_reward = 0.0;
  double exceed_rate = 0.0;
  double cpc_ratio = 0.0;
  std::vector<EpisodeSummary> episodes;  // every evaluated episode, all seeds
};

// Trains the full model per expert count and evaluates at the 100% budget.
std::vector<ExpertSweepRow> run_expert_sweep(const train::TrajectoryDataset& data, const ExperimentSetup& setup,
                                             std::span<const std::size_t> expert_counts);

// Recomputes an expert-sweep row from its episode summaries.
ExpertSweepRow summarize_expert_row(std::size_t experts, std::vector<EpisodeSummary> episodes,
                                    const ConstraintSpec& c);

nlohmann::ordered_json to_json(const ScoreReport& r);
nlohmann::ordered_json to_json(const SweepResult& r);
nlohmann::ordered_json to_json(const AblationResult& r);
nlohmann::ordered_json to_json(std::span<const ExpertSweepRow> rows);
void write_csv(std::ostream& os, const SweepResult& r);
void write_csv(std::ostream& os, const AblationResult& r);
void write_csv(std::ostream& os, std::span<const ExpertSweepRow> rows);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace gradbid::eval
