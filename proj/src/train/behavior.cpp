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

#include "gradbid/train/behavior.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gradbid::train {

PidPacer::PidPacer(const PidConfig& cfg, const env::EpisodeConfig& episode, double perturb_high)
    : cfg_(cfg),
      budget_(episode.budget),
      steps_(static_cast<double>(episode.num_steps)),
      max_coef_(cfg.max_coef > 0.0 ? cfg.max_coef : episode.action_scale / perturb_high) {}

void PidPacer::reset() {
  integral_ = 0.0;
  prev_error_ = 0.0;
  first_ = true;
}

double PidPacer::act(const env::StepState& s) {
  const double t = s[env::kTimeElapsed] * steps_;
  const double spent = (1.0 - s[env::kBudgetRemaining]) * budget_;
  const double per_step = budget_ / steps_;
  const double error = (budget_ * t / steps_ - spent) / per_step;
  const double deriv = first_ ? 0.0 : error - prev_error_;
  first_ = false;
  prev_error_ = error;

  const double lo = std::log(cfg_.min_coef / cfg_.base_coef);
  const double hi = std::log(max_coef_ / cfg_.base_coef);
  const double trial = cfg_.kp * error + cfg_.ki * (integral_ + error) + cfg_.kd * deriv;
  // Anti-windup: stop integrating while the output is saturated in the
  // direction the error pushes.
  const bool saturated = (trial > hi && error > 0) || (trial < lo && error < 0);
  if (!saturated) integral_ = std::clamp(integral_ + error, -cfg_.integral_limit, cfg_.integral_limit);
  const double u = std::clamp(cfg_.kp * error + cfg_.ki * integral_ + cfg_.kd * deriv, lo, hi);
  return cfg_.base_coef * std::exp(u);
}

TrajectoryDataset generate_behavior_data(const BehaviorConfig& cfg) {
  if (cfg.num_episodes < 1) throw std::invalid_argument("num_episodes must be >= 1");
  TrajectoryDataset ds;
  ds.trajectories.reserve(cfg.num_episodes);
  ds.base_actions.reserve(cfg.num_episodes);
  for (std::size_t e = 0; e < cfg.num_episodes; ++e) {
    Rng rng = make_rng(cfg.seed, "behavior-episode", e);
    std::uniform_real_distribution<double> budget_jit(cfg.budget_jitter_low, cfg.budget_jitter_high);
    std::uniform_real_distribution<double> coef_jit(cfg.coef_jitter_low, cfg.coef_jitter_high);
    std::uniform_real_distribution<double> perturb(cfg.perturb_low, cfg.perturb_high);

    env::EpisodeConfig ec = cfg.env;
    ec.seed = derive_seed(cfg.seed, "behavior-env", e);
    ec.budget = cfg.env.budget * budget_jit(rng);
    PidConfig pc = cfg.pid;
    pc.base_coef = cfg.pid.base_coef * coef_jit(rng);
    PidPacer pid(pc, ec, cfg.perturb_high);

    std::vector<double> base;
    base.reserve(ec.num_steps);
    env::Policy policy = [&](const env::StepState& s, std::span<const env::StepRecord>) {
      const double a = pid.act(s);
      base.push_back(a);
      return cfg.perturb ? a * perturb(rng) : a;
    };
    ds.trajectories.push_back(env::run_episode(policy, ec, e).trajectory);
    ds.base_actions.push_back(std::move(base));
  }
  ds.compute_stats();
  return ds;
}

void TrajectoryDataset::compute_stats() {
  std::array<double, env::kStateDim> sum{}, sq{};
  double n = 0.0;
  for (const auto& tr : trajectories) {
    for (const auto& s : tr.steps) {
      for (std::size_t i = 0; i < env::kStateDim; ++i) {
        sum[i] += s.state[i];
        sq[i] += s.state[i] * s.state[i];
      }
      n += 1.0;
    }
  }
  if (n == 0.0) throw std::invalid_argument("dataset has no steps");
  for (std::size_t i = 0; i < env::kStateDim; ++i) {
    state_mean[i] = sum[i] / n;
    const double var = std::max(0.0, sq[i] / n - state_mean[i] * state_mean[i]);
    // Constant features map to zero instead of blowing up.
    state_std[i] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
}

void TrajectoryDataset::validate(std::size_t num_steps) const {
  if (trajectories.empty()) throw std::invalid_argument("dataset is empty");
  for (const auto& tr : trajectories) {
    const std::string id = "episode " + std::to_string(tr.episode_id);
    if (tr.steps.size() != num_steps) {
      throw std::invalid_argument(id + " has " + std::to_string(tr.steps.size()) + " steps, expected " +
                                  std::to_string(num_steps));
    }
    for (std::size_t t = 0; t < tr.steps.size(); ++t) {
      const double next = t + 1 < tr.steps.size() ? tr.steps[t + 1].rtg : 0.0;
      if (tr.steps[t].rtg != next + tr.steps[t].reward) {
        throw std::invalid_argument(id + " breaks the return-to-go recursion at t=" + std::to_string(t));
      }
    }
  }
}

std::vector<double> TrajectoryDataset::episode_returns() const {
  std::vector<double> r;
  r.reserve(trajectories.size());
  for (const auto& tr : trajectories) r.push_back(tr.steps.empty() ? 0.0 : tr.steps.front().rtg);
  return r;
}

env::StepState TrajectoryDataset::normalize(const env::StepState& raw) const {
  env::StepState out;
  for (std::size_t i = 0; i < env::kStateDim; ++i) out[i] = (raw[i] - state_mean[i]) / state_std[i];
  return out;
}

}  // namespace gradbid::train
