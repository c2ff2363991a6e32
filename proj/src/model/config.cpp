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

#include "gradbid/model/config.hpp"

#include <stdexcept>
#include <string>

namespace gradbid::model {

void ModelConfig::validate() const {
  if (hidden_size == 0 || num_heads == 0 || hidden_size % num_heads != 0) {
    throw std::invalid_argument("hidden_size must be a positive multiple of num_heads");
  }
  if (hidden_size % 4 != 0) throw std::invalid_argument("hidden_size must be divisible by 4");
  if (seq_len == 0) throw std::invalid_argument("seq_len must be at least 1");
  if (num_layers == 0) throw std::invalid_argument("num_layers must be at least 1");
  if (num_experts == 0) throw std::invalid_argument("num_experts must be at least 1");
  if (!(action_scale > 0) || !(rtg_scale > 0)) throw std::invalid_argument("scales must be positive");
  if (!(lambda_aux >= 0 && lambda_aux <= 1)) throw std::invalid_argument("lambda_aux must lie in [0, 1]");
  if (!(perturb_low > 0 && perturb_high > perturb_low)) throw std::invalid_argument("invalid perturbation range");
  if (!(gamma_pen >= 1)) throw std::invalid_argument("gamma_pen must be >= 1");
  if (!(action_floor > 0 && action_floor < action_scale)) throw std::invalid_argument("invalid action_floor");
}

nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["hidden_size"] = c.hidden_size;
  j["num_layers"] = c.num_layers;
  j["num_heads"] = c.num_heads;
  j["seq_len"] = c.seq_len;
  j["state_dim"] = c.state_dim;
  j["action_scale"] = c.action_scale;
  j["rtg_scale"] = c.rtg_scale;
  j["num_experts"] = c.num_experts;
  j["lambda_aux"] = c.lambda_aux;
  j["perturb_low"] = c.perturb_low;
  j["perturb_high"] = c.perturb_high;
  j["action_floor"] = c.action_floor;
  j["gamma_pen"] = c.gamma_pen;
  j["time_mode"] = c.time_mode == TimeMode::kFraction ? "fraction" : "raw";
  j["time_sign"] = c.time_sign;
  j["value_weight_ramp"] = c.value_weight_ramp;
  j["value_stop_grad"] = c.value_stop_grad;
  j["moe_stop_grad"] = c.moe_stop_grad;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.hidden_size = j.at("hidden_size").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.seq_len = j.at("seq_len").get<std::size_t>();
  c.state_dim = j.value("state_dim", c.state_dim);
  c.action_scale = j.at("action_scale").get<double>();
  c.rtg_scale = j.at("rtg_scale").get<double>();
  c.num_experts = j.value("num_experts", c.num_experts);
  c.lambda_aux = j.value("lambda_aux", c.lambda_aux);
  c.perturb_low = j.value("perturb_low", c.perturb_low);
  c.perturb_high = j.value("perturb_high", c.perturb_high);
  c.action_floor = j.value("action_floor", c.action_floor);
  c.gamma_pen = j.value("gamma_pen", c.gamma_pen);
  const auto mode = j.value("time_mode", std::string("fraction"));
  if (mode != "fraction" && mode != "raw") throw std::invalid_argument("time_mode must be fraction or raw");
  c.time_mode = mode == "raw" ? TimeMode::kRawStep : TimeMode::kFraction;
  c.time_sign = j.value("time_sign", c.time_sign);
  c.value_weight_ramp = j.value("value_weight_ramp", c.value_weight_ramp);
  c.value_stop_grad = j.value("value_stop_grad", c.value_stop_grad);
  c.moe_stop_grad = j.value("moe_stop_grad", c.moe_stop_grad);
  c.validate();
  return c;
}

void TokenBatch::resize(std::size_t b, std::size_t s, std::size_t state_dim) {
  batch = b;
  seq = s;
  rtg.assign(b * s, 0.0);
  states.assign(b * s * state_dim, 0.0);
  prev_action.assign(b * s, 0.0);
  valid.assign(b * s, 0);
}

void TokenBatch::validate(const ModelConfig& cfg) const {
  if (seq == 0 || batch == 0) throw std::invalid_argument("empty token batch");
  if (seq > cfg.seq_len) {
    throw std::invalid_argument("sequence length " + std::to_string(seq) + " exceeds context window " +
                                std::to_string(cfg.seq_len));
  }
  const std::size_t n = tokens();
  if (rtg.size() != n || prev_action.size() != n || valid.size() != n || states.size() != n * cfg.state_dim) {
    throw std::invalid_argument("token batch buffers do not match batch x seq");
  }
}

}  // namespace gradbid::model
