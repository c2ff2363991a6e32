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
#include "gradbid/util/rng.hpp"

namespace gradbid::model {

class CausalTransformer;

struct ValueContext {
  double t_frac = 0.0;       // elapsed share of the episode, or the raw step in kRawStep mode
  double cpc_t = 0.0;        // realized CPC so far, 0 before the first click
  double cpc_limit = 1.0;
  double budget_frac = 1.0;  // remaining budget share
  double rtg = 0.0;
  double gamma_pen = 2.0;
  double sigma = 0.0;
};

// exp(sign * t).
double temporal_factor(double t, double sign = 1.0);
// min(1, (C / cpc)^gamma); 1 when cpc == 0.
double cost_factor(double cpc_t, double cpc_limit, double gamma_pen);

// Gamma * Omega * Pi * g + N(0, sigma^2). No draw is made when sigma == 0.
double dynamic_target(const ValueContext& ctx, Rng& rng, double time_sign = 1.0);

// Context of a logged step, reading time, budget and CPC from the raw
// (unnormalized) state.
ValueContext value_context(const env::StepState& raw_state, double rtg, double cpc_limit,
                           std::size_t num_steps, const ModelConfig& cfg, double sigma);

class ValueEstimator {
 public:
  ValueEstimator(const ModelConfig& cfg, ad::ParameterStore& store);

  // [tokens x 1], unbounded.
  ad::Tensor operator()(const ad::Tensor& hidden) const;

  // Value of the last valid token of `window` (batch 1) with its previous
  // action replaced by each candidate. All candidates run as one batch.
  std::vector<double> score_candidates(const CausalTransformer& backbone, const TokenBatch& window,
                                       std::span<const double> candidates) const;

 private:
  ModelConfig cfg_;
  Mlp2 head_;
};

// Weighted mean of (pred - target)^2. `mask` is [tokens x 1]: 0 on padding,
// otherwise the per-token weight (1, or 1 + t/T with the ramp).
ad::Tensor value_loss(const ad::Tensor& predicted, const ad::Tensor& target, const ad::Tensor& mask);

}  // namespace gradbid::model
