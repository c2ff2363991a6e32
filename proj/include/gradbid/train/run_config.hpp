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

#include <filesystem>
#include <istream>
#include <string_view>

#include "gradbid/model/config.hpp"
#include "gradbid/train/behavior.hpp"
#include "gradbid/train/trainer.hpp"

namespace gradbid::train {

// Everything a training run needs: optimizer, model and the behavior
// data generator (whose `env` is the episode configuration).
struct RunConfig {
  TrainConfig train = TrainConfig::desk();
  model::ModelConfig model = model::ModelConfig::desk();
  BehaviorConfig behavior;

  void validate() const;
};

// Flat `key = value` text. Keys are `section.field` with sections train,
// model, env, behavior and pid; `profile = desk|large` picks the base
// before other keys apply. Distributions are written as `beta(2, 5)`.
// Lines starting with '#' are comments. Unknown keys and malformed values
// throw std::invalid_argument naming the source and line.
RunConfig parse_run_config(std::istream& in, std::string_view source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const BehaviorConfig& c);
BehaviorConfig behavior_config_from_json(const nlohmann::json& j);

}  // namespace gradbid::train
