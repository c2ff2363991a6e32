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

#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradbid/env/auction.hpp"

namespace gradbid::model {

enum class TimeMode { kFraction, kRawStep };

struct ModelConfig {
  std::size_t hidden_size = 64;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t seq_len = 20;
  std::size_t state_dim = env::kStateDim;
  double action_scale = 5.0;
  double rtg_scale = 500.0;

  // Action MoE.
  std::size_t num_experts = 6;
  double lambda_aux = 0.2;
  double perturb_low = 0.8;
  double perturb_high = 1.2;
  // Refined actions are clamped to [action_floor, action_scale].
  double action_floor = 1e-6;

  // Value estimator.
  double gamma_pen = 2.0;
  TimeMode time_mode = TimeMode::kFraction;
  double time_sign = 1.0;  // Gamma(t) = exp(time_sign * t)
  bool value_weight_ramp = false;

  // Stop gradients from the auxiliary heads into the backbone.
  bool value_stop_grad = false;
  bool moe_stop_grad = false;

  static ModelConfig desk() { return {}; }
  static ModelConfig large() {
    ModelConfig c;
    c.hidden_size = 512;
    c.num_layers = 8;
    c.num_heads = 16;
    c.rtg_scale = 2000.0;
    return c;
  }

  std::size_t embed_width() const { return hidden_size / 4; }
  void validate() const;
};

nlohmann::ordered_json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// A batch of left-aligned token windows, row-major [batch * seq]. Row
// b * seq + k holds window slot k; windows shorter than the model context
// are treated as the tail of a left-padded window, so slot k maps to
// positional index seq_len - seq + k.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<double> rtg;          // already divided by rtg_scale
  std::vector<double> states;       // [tokens x state_dim], normalized
  std::vector<double> prev_action;  // raw bid coefficients, 0 at episode start
  std::vector<std::uint8_t> valid;  // 0 on padding

  std::size_t tokens() const { return batch * seq; }
  void resize(std::size_t b, std::size_t s, std::size_t state_dim);
  void validate(const ModelConfig& cfg) const;
};

}  // namespace gradbid::model
