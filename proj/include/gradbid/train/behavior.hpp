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
#include <vector>

#include "gradbid/env/auction.hpp"

namespace gradbid::train {

struct PidConfig {
  double kp = 0.5;
  double ki = 0.05;
  double kd = 0.0;
  double base_coef = 1.25;
  double min_coef = 0.05;
  // 0 means action_scale / perturb_high, so perturbed actions stay in range.
  double max_coef = 0.0;
  double integral_limit = 10.0;
};

// Pacing controller on the bid coefficient. The error is the planned minus
// actual spend in units of one step's budget share; the output adjusts the
// coefficient multiplicatively (in log space) around base_coef.
class PidPacer {
 public:
  PidPacer(const PidConfig& cfg, const env::EpisodeConfig& episode, double perturb_high = 1.2);

  // Unperturbed coefficient for the current state.
  double act(const env::StepState& state);
  void reset();

 private:
  PidConfig cfg_;
  double budget_;
  double steps_;
  double max_coef_;
  double integral_ = 0.0;
  double prev_error_ = 0.0;
  bool first_ = true;
};

struct BehaviorConfig {
  std::size_t num_episodes = 500;
  env::EpisodeConfig env;
  PidConfig pid;
  bool perturb = true;
  double perturb_low = 0.8;
  double perturb_high = 1.2;
  // Per-episode jitter on the budget and on the controller's base coefficient.
  double budget_jitter_low = 0.5;
  double budget_jitter_high = 1.5;
  double coef_jitter_low = 0.8;
  double coef_jitter_high = 1.25;
  std::uint64_t seed = 1;
};

struct TrajectoryDataset {
  std::vector<env::Trajectory> trajectories;
  // PID output before perturbation, per trajectory and step (generated data only).
  std::vector<std::vector<double>> base_actions;
  std::array<double, env::kStateDim> state_mean{};
  std::array<double, env::kStateDim> state_std{};

  void compute_stats();
  // Throws if a trajectory is not exactly `num_steps` long or breaks the
  // return-to-go recursion.
  void validate(std::size_t num_steps = 48) const;
  std::vector<double> episode_returns() const;
  env::StepState normalize(const env::StepState& raw) const;
};

TrajectoryDataset generate_behavior_data(const BehaviorConfig& cfg);

}  // namespace gradbid::train
