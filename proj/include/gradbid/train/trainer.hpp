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
#include <filesystem>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gradbid/ad/params.hpp"
#include "gradbid/model/grad_model.hpp"
#include "gradbid/train/behavior.hpp"

namespace gradbid::train {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t num_steps = 3000;
  double lr = 1e-3;
  double weight_decay = 1e-2;
  double adam_eps = 1e-8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double grad_clip = 1.0;
  double lambda_b = 0.1;
  double lambda_d = 0.1;
  bool use_action_moe = true;
  bool use_value_estimator = true;
  // Value-target noise as a fraction of rtg_scale.
  double sigma_frac = 0.01;
  // Returns-to-go are undiscounted unless discounted_rtg is set.
  bool discounted_rtg = false;
  double discount = 0.99;
  // Accepted for config compatibility; no loss reads them.
  double tau = 0.01;
  double expectile = 0.7;
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 0;

  static TrainConfig desk() { return {}; }
  static TrainConfig large() {
    TrainConfig c;
    c.batch_size = 128;
    c.num_steps = 400000;
    c.lr = 1e-5;
    return c;
  }
  void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainBatch {
  model::TokenBatch tokens;
  std::vector<double> target_action;           // [tokens]
  std::vector<env::StepState> raw_states;      // [tokens]
  std::vector<double> rtg;                     // [tokens], unscaled
  std::vector<double> cpc_limit;               // [tokens]
  std::vector<std::size_t> episode_steps;      // T of the source episode, per token
  std::vector<std::size_t> step_index;         // t, per token
};

// Uniform (trajectory, end step) sampling of left-padded windows. Batch k
// depends only on (seed, k), so a resumed run sees the same stream.
class BatchSampler {
 public:
  BatchSampler(const TrajectoryDataset& data, const model::ModelConfig& cfg, std::size_t batch_size,
               std::uint64_t seed, bool discounted = false, double discount = 1.0);

  TrainBatch sample(std::uint64_t index) const;
  // Window of `traj` covering steps [end - len, end) with len = min(seq_len,
  // end), right-aligned so the last step sits in the final slot.
  void fill_window(TrainBatch& out, std::size_t row, std::size_t traj, std::size_t end) const;
  TrainBatch make_batch(std::size_t rows) const;

 private:
  const TrajectoryDataset& data_;
  model::ModelConfig cfg_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::vector<std::vector<double>> rtg_;
};

struct LossBreakdown {
  double policy = 0.0;
  double value = 0.0;
  double balance = 0.0;
  double diversity = 0.0;
  double total = 0.0;
};

struct StepTelemetry {
  LossBreakdown losses;
  double grad_norm = 0.0;
  std::vector<double> expert_usage;
};

struct LossGraph {
  ad::Tensor total;
  StepTelemetry telemetry;
};

// Model-side metadata stored with every checkpoint: configs and the state
// normalization, enough to rebuild a policy without the dataset.
struct PolicyBundle {
  model::ModelConfig model;
  std::array<double, env::kStateDim> state_mean{};
  std::array<double, env::kStateDim> state_std{};
  double target_return = 0.0;  // conditioning return used at evaluation
  // (budget, return) of every logged episode, for budget-matched targets.
  std::vector<std::pair<double, double>> budget_returns;

  // Quantile of the returns of logged episodes whose budget lies within
  // `tolerance` (relative) of `budget`, widened to the `min_count` nearest
  // episodes when the band is too sparse. Falls back to target_return when
  // no table is stored.
  double target_for(double budget, double quantile = 0.9, double tolerance = 0.1,
                    std::size_t min_count = 10) const;
};

nlohmann::ordered_json to_json(const PolicyBundle& b);
PolicyBundle policy_bundle_from_json(const nlohmann::json& j);

// 90th percentile of the dataset's episode returns.
double target_return(const TrajectoryDataset& data, double quantile = 0.9);

class Trainer {
 public:
  Trainer(const TrainConfig& tcfg, const model::ModelConfig& mcfg, const TrajectoryDataset& data);

  // One optimizer update on batch `step()`.
  StepTelemetry train_step();
  // One optimizer update on a caller-supplied batch.
  StepTelemetry train_on(const TrainBatch& batch);
  // Losses of a batch without updating parameters (gradients are left
  // zeroed). `noise_index` selects the value-noise and perturbation streams.
  StepTelemetry evaluate(const TrainBatch& batch, std::uint64_t noise_index, bool with_noise = true);

  // Builds the weighted training loss of `batch` without touching gradients.
  // Throws if any component is non-finite. The diversity term compares
  // against the detached policy output unless `nominal` supplies fixed
  // per-token actions.
  LossGraph build_loss(const TrainBatch& batch, std::uint64_t noise_index, bool with_noise = true,
                       std::span<const double> nominal = {}) const;

  // Prefixes the optimizer updates under the current ablation flags.
  std::vector<std::string> trainable_prefixes() const;

  void save_checkpoint(const std::filesystem::path& dir) const;
  // Restores parameters, optimizer moments and the step counter.
  void load_checkpoint(const std::filesystem::path& dir);

  // Bundle describing the current model and dataset.
  PolicyBundle bundle() const;
  // Hands the trained model to the caller; the trainer is unusable afterwards.
  std::unique_ptr<model::GradModel> release_model() &&;

  model::GradModel& model() { return *model_; }
  const model::GradModel& model() const { return *model_; }
  const TrainConfig& config() const { return tcfg_; }
  const TrajectoryDataset& data() const { return data_; }
  const BatchSampler& sampler() const { return sampler_; }
  std::uint64_t step() const { return step_; }

 private:
  StepTelemetry run(const TrainBatch& batch, std::uint64_t index, bool update, bool with_noise);

  TrainConfig tcfg_;
  model::ModelConfig mcfg_;
  const TrajectoryDataset& data_;
  std::unique_ptr<model::GradModel> model_;
  ad::AdamW opt_;
  BatchSampler sampler_;
  std::uint64_t step_ = 0;
};

void write_loss_header(std::ostream& os);
void write_loss_row(std::ostream& os, std::uint64_t step, const LossBreakdown& l);


}  // namespace gradbid::train
