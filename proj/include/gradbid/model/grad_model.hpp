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

#include "gradbid/ad/params.hpp"
#include "gradbid/model/config.hpp"
#include "gradbid/model/moe.hpp"
#include "gradbid/model/transformer.hpp"
#include "gradbid/model/value.hpp"

namespace gradbid::model {

// Backbone plus both auxiliary heads over one parameter store. Every head
// is always built so checkpoints share a layout across ablations; the
// trainer decides which parameter groups it updates.
class GradModel {
 public:
  static constexpr const char* kBackbonePrefix = "ct/";
  static constexpr const char* kValuePrefix = "value/";
  static constexpr const char* kMoePrefix = "moe/";

  GradModel(const ModelConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), store_(seed), backbone_(cfg_, store_), value_(cfg_, store_), moe_(cfg_, store_) {}

  GradModel(const GradModel&) = delete;
  GradModel& operator=(const GradModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ad::ParameterStore& params() { return store_; }
  const ad::ParameterStore& params() const { return store_; }
  const CausalTransformer& backbone() const { return backbone_; }
  const ValueEstimator& value() const { return value_; }
  const ActionMoE& moe() const { return moe_; }

 private:
  ModelConfig cfg_;
  ad::ParameterStore store_;
  CausalTransformer backbone_;
  ValueEstimator value_;
  ActionMoE moe_;
};

}  // namespace gradbid::model
