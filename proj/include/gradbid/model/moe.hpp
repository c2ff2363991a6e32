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
#include <span>
#include <vector>

#include "gradbid/model/config.hpp"
#include "gradbid/model/layers.hpp"
#include "gradbid/util/rng.hpp"

namespace gradbid::model {

struct CandidateActionSet {
  std::vector<double> candidates;
  std::vector<double> factors;
};

// candidates[m] = prev_action * factors[m], factors ~ U[low, high).
CandidateActionSet perturb_candidates(double prev_action, std::size_t num_candidates, Rng& rng,
                                      double low = 0.8, double high = 1.2);

struct RoutingDecision {
  std::vector<double> probabilities;
  std::size_t chosen = 0;
  std::vector<double> gate;
};

// Softmax over dot(h, e_m); argmax with lowest-index tie-break.
RoutingDecision route(std::span<const double> h, const std::vector<std::vector<double>>& expert_embeddings);
// Row-wise variant over logits [rows x M].
std::vector<RoutingDecision> route_logits(std::span<const double> logits, std::size_t rows, std::size_t experts);

struct MoEOutput {
  ad::Tensor input;            // hidden states as seen by the head (detached under stop-grad)
  ad::Tensor shared;           // [tokens x H]
  ad::Tensor routed;           // [tokens x H], zero on padding
  ad::Tensor fused;            // layernorm(shared + routed)
  ad::Tensor residual;         // U, [tokens x 1]
  ad::Tensor refined;          // [tokens x M], clamped
  ad::Tensor aggregate;        // [tokens x 1], clamped
  ad::Tensor mixture_weights;  // [1 x M]
  ad::Tensor probabilities;    // [tokens x M]
  std::vector<RoutingDecision> decisions;  // per token; default for padding
  std::vector<double> candidates;          // [tokens x M]
};

class ActionMoE {
 public:
  ActionMoE(const ModelConfig& cfg, ad::ParameterStore& store);

  // Routes valid tokens only. Candidates are perturbed from `prev_action`
  // with one factor per (token, expert) drawn from `rng`.
  MoEOutput operator()(const ad::Tensor& hidden, std::span<const double> prev_action,
                       std::span<const std::uint8_t> valid, Rng& rng) const;

  std::size_t num_experts() const { return cfg_.num_experts; }

 private:
  ModelConfig cfg_;
  ad::Tensor router_;  // [H x M]
  Mlp2 shared_;
  std::vector<Mlp2> experts_;
  Mlp2 residual_;
  ad::Tensor omega_logits_;  // [1 x M]
};

// lambda_aux * M * sum_m u_m p_m + (1 - lambda_aux) * mean_t |h_t - shared_t|^2,
// averaged over valid tokens. Throws on an empty batch.
ad::Tensor balance_loss(const MoEOutput& out, const ad::Tensor& hidden, std::span<const std::uint8_t> valid,
                        double lambda_aux);
// The auxiliary load-balancing term alone.
double aux_balance(std::span<const RoutingDecision> decisions, std::span<const std::uint8_t> valid,
                   std::size_t experts);

// Mean over sequences and ensemble members of cos(refined_m, nominal) on
// valid tokens. `nominal` is used as given (callers detach it).
ad::Tensor diversity_loss(const ad::Tensor& refined, const ad::Tensor& nominal, const ad::Tensor& mask,
                          std::size_t sequences);

// Share of valid tokens routed to each expert.
std::vector<double> expert_usage(std::span<const RoutingDecision> decisions, std::span<const std::uint8_t> valid,
                                 std::size_t experts);

}  // namespace gradbid::model
