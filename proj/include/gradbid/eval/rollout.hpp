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
#include <span>
#include <vector>

#include "gradbid/env/auction.hpp"
#include "gradbid/model/grad_model.hpp"
#include "gradbid/train/trainer.hpp"

namespace gradbid::eval {

// kExploit executes the policy head's action; kExplore executes the
// mixture-of-experts aggregate built around the previous action.
enum class ActionMode { kExploit, kExplore };

// How the conditioning return is chosen for each episode.
enum class TargetMode {
  kBudgetMatched,  // quantile of logged returns at a similar budget
  kGlobal,         // the bundle's single dataset-wide target
};

struct RolloutOptions {
  ActionMode mode = ActionMode::kExploit;
  TargetMode target = TargetMode::kBudgetMatched;
  double quantile = 0.9;
  std::uint64_t seed = 0;  // perturbation stream for kExplore
};

// Return-conditioned bidder over a trained model. Episodes run in lockstep
// so every decision step is one batched forward pass.
class BiddingAgent {
 public:
  BiddingAgent(const model::GradModel& model, train::PolicyBundle bundle);

  std::vector<env::EpisodeResult> rollout(std::span<const env::EpisodeConfig> episodes,
                                          const RolloutOptions& opts = {}) const;
  const train::PolicyBundle& bundle() const { return bundle_; }
  const model::GradModel& model() const { return model_; }

 private:
  const model::GradModel& model_;
  train::PolicyBundle bundle_;
};

// A model and its bundle restored from a checkpoint directory.
struct LoadedPolicy {
  std::unique_ptr<model::GradModel> model;
  train::PolicyBundle bundle;

  BiddingAgent agent() const { return BiddingAgent(*model, bundle); }
};

LoadedPolicy load_policy(const std::filesystem::path& checkpoint_dir);

}  // namespace gradbid::eval
