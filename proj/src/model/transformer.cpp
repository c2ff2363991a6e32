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

#include "gradbid/model/transformer.hpp"

#include <numeric>

namespace gradbid::model {

using ad::Tensor;

Tensor masked_mse(const Tensor& pred, const Tensor& target, const Tensor& mask) {
  double denom = 0.0;
  for (double m : mask.value()) denom += m != 0.0 ? 1.0 : 0.0;
  if (denom == 0.0) throw std::invalid_argument("masked_mse: no valid rows");
  return ad::scale(ad::sum(ad::mul(ad::square(ad::sub(pred, target)), mask)), 1.0 / denom);
}

std::vector<double> compute_rtg(std::span<const double> rewards, double scale) {
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc += rewards[i];
    g[i] = acc;
  }
  if (scale != 1.0) {
    for (double& x : g) x /= scale;
  }
  return g;
}

CausalTransformer::CausalTransformer(const ModelConfig& cfg, ad::ParameterStore& store) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t H = cfg_.hidden_size, E = cfg_.embed_width();
  embed_rtg_ = Linear(store, "ct/embed/rtg", 1, E);
  embed_state_ = Linear(store, "ct/embed/state", cfg_.state_dim, E);
  embed_action_ = Linear(store, "ct/embed/action", 1, E);
  position_ = store.create("ct/embed/position", {cfg_.seq_len, E}, ad::Init::kUniformFanIn);
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
    const std::string p = "ct/block" + std::to_string(l);
    blocks_.push_back({Linear(store, p + "/qkv", H, 3 * H), Linear(store, p + "/out", H, H),
                       Linear(store, p + "/ffn1", H, 4 * H), Linear(store, p + "/ffn2", 4 * H, H)});
  }
  policy_ = Mlp2(store, "ct/policy", H, H, 1);
}

Tensor CausalTransformer::embed(const TokenBatch& batch) const {
  batch.validate(cfg_);
  const std::size_t n = batch.tokens();
  std::vector<double> actions(n);
  for (std::size_t i = 0; i < n; ++i) actions[i] = batch.prev_action[i] / cfg_.action_scale;
  std::vector<std::size_t> slots(n);
  const std::size_t offset = cfg_.seq_len - batch.seq;
  for (std::size_t i = 0; i < n; ++i) slots[i] = offset + i % batch.seq;

  const Tensor g = embed_rtg_(Tensor::constant({n, 1}, batch.rtg));
  const Tensor s = embed_state_(Tensor::constant({n, cfg_.state_dim}, batch.states));
  const Tensor a = embed_action_(Tensor::constant({n, 1}, std::move(actions)));
  const Tensor pe = ad::index_rows(position_, slots);
  return ad::layernorm(ad::concat({g, s, a, pe}, 1));
}

CausalTransformer::Output CausalTransformer::forward(const TokenBatch& batch) const {
  const std::size_t H = cfg_.hidden_size;
  const ad::AttentionLayout layout{batch.batch, batch.seq, cfg_.num_heads};
  Tensor x = embed(batch);
  for (const auto& blk : blocks_) {
    const Tensor qkv = blk.qkv(ad::layernorm(x));
    const Tensor att = ad::causal_attention(ad::slice_cols(qkv, 0, H), ad::slice_cols(qkv, H, 2 * H),
                                            ad::slice_cols(qkv, 2 * H, 3 * H), layout, batch.valid);
    x = ad::add(x, blk.out(att));
    x = ad::add(x, blk.ffn2(ad::relu(blk.ffn1(ad::layernorm(x)))));
  }
  Output out;
  out.hidden = ad::layernorm(x);
  out.action = policy_head(out.hidden);
  return out;
}

Tensor CausalTransformer::policy_head(const Tensor& hidden) const {
  const double half = 0.5 * cfg_.action_scale;
  return ad::add_scalar(ad::scale(ad::tanh(policy_(hidden)), half), half);
}

Tensor policy_loss(const Tensor& predicted, const Tensor& target, const Tensor& mask) {
  return masked_mse(predicted, target, mask);
}

}  // namespace gradbid::model
