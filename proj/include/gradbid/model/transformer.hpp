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

#include <span>
#include <vector>

#include "gradbid/model/config.hpp"
#include "gradbid/model/layers.hpp"

namespace gradbid::model {

// g_t = sum of rewards from t to the end, optionally divided by `scale`.
std::vector<double> compute_rtg(std::span<const double> rewards, double scale = 1.0);

class CausalTransformer {
 public:
  struct Output {
    ad::Tensor hidden;  // [tokens x hidden], after the final layernorm
    ad::Tensor action;  // [tokens x 1], in (0, action_scale)
  };

  CausalTransformer(const ModelConfig& cfg, ad::ParameterStore& store);

  // Level-0 hidden states: layernorm of the concatenated embeddings.
  ad::Tensor embed(const TokenBatch& batch) const;
  Output forward(const TokenBatch& batch) const;
  ad::Tensor policy_head(const ad::Tensor& hidden) const;

 private:
  struct Block {
    Linear qkv, out, ffn1, ffn2;
  };

  ModelConfig cfg_;
  Linear embed_rtg_, embed_state_, embed_action_;
  ad::Tensor position_;  // [seq_len x hidden/4]
  std::vector<Block> blocks_;
  Mlp2 policy_;
};

// Mean squared error over valid tokens.
ad::Tensor policy_loss(const ad::Tensor& predicted, const ad::Tensor& target, const ad::Tensor& mask);

}  // namespace gradbid::model
