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

#include <random>

#include "gradbid/model/config.hpp"
#include "gradbid/train/behavior.hpp"
#include "gradbid/util/rng.hpp"

namespace gradbid::testing {

// One attention block, two experts, context of four tokens.
inline model::ModelConfig tiny_config() {
  model::ModelConfig c;
  c.hidden_size = 8;
  c.num_layers = 1;
  c.num_heads = 2;
  c.seq_len = 4;
  c.num_experts = 2;
  return c;
}

inline model::TokenBatch random_batch(const model::ModelConfig& cfg, std::size_t batch, std::size_t seq, Rng& rng) {
  model::TokenBatch b;
  b.resize(batch, seq, cfg.state_dim);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> a(0.1, cfg.action_scale);
  for (auto& x : b.rtg) x = std::abs(n(rng));
  for (auto& x : b.states) x = n(rng);
  for (auto& x : b.prev_action) x = a(rng);
  for (auto& v : b.valid) v = 1;
  return b;
}

// A small logged dataset from the pacing controller.
inline train::TrajectoryDataset small_dataset(std::size_t episodes, std::uint64_t seed = 7) {
  train::BehaviorConfig bc;
  bc.num_episodes = episodes;
  bc.seed = seed;
  return train::generate_behavior_data(bc);
}

}  // namespace gradbid::testing
