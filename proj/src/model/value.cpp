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

#include "gradbid/model/value.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gradbid/model/transformer.hpp"

namespace gradbid::model {

using ad::Tensor;

double temporal_factor(double t, double sign) { return std::exp(sign * t); }

double cost_factor(double cpc_t, double cpc_limit, double gamma_pen) {
  if (cpc_t <= cpc_limit) return 1.0;
  return std::min(1.0, std::pow(cpc_limit / cpc_t, gamma_pen));
}

double dynamic_target(const ValueContext& ctx, Rng& rng, double time_sign) {
  const double gamma = temporal_factor(ctx.t_frac, time_sign);
  const double omega = cost_factor(ctx.cpc_t, ctx.cpc_limit, ctx.gamma_pen);
  const double r = gamma * omega * ctx.budget_frac * ctx.rtg;
  if (ctx.sigma == 0.0) return r;
  return r + std::normal_distribution<double>(0.0, ctx.sigma)(rng);
}

ValueContext value_context(const env::StepState& raw, double rtg, double cpc_limit, std::size_t num_steps,
                           const ModelConfig& cfg, double sigma) {
  ValueContext c;
  c.t_frac = cfg.time_mode == TimeMode::kFraction ? raw[env::kTimeElapsed]
                                                   : raw[env::kTimeElapsed] * static_cast<double>(num_steps);
  c.cpc_limit = cpc_limit;
  c.cpc_t = raw[env::kCpcRatio] * cpc_limit;
  c.budget_frac = std::clamp(raw[env::kBudgetRemaining], 0.0, 1.0);
  c.rtg = rtg;
  c.gamma_pen = cfg.gamma_pen;
  c.sigma = sigma;
  return c;
}

ValueEstimator::ValueEstimator(const ModelConfig& cfg, ad::ParameterStore& store)
    : cfg_(cfg), head_(store, "value/head", cfg.hidden_size, cfg.hidden_size, 1) {}

Tensor ValueEstimator::operator()(const Tensor& hidden) const {
  return head_(cfg_.value_stop_grad ? ad::detach(hidden) : hidden);
}

std::vector<double> ValueEstimator::score_candidates(const CausalTransformer& backbone, const TokenBatch& window,
                                                     std::span<const double> candidates) const {
  if (window.batch != 1) throw std::invalid_argument("score_candidates expects a single window");
  const std::size_t M = candidates.size();
  if (M == 0) return {};
  const std::size_t L = window.seq, D = cfg_.state_dim;
  TokenBatch tiled;
  tiled.resize(M, L, D);
  for (std::size_t m = 0; m < M; ++m) {
    std::copy(window.rtg.begin(), window.rtg.end(), tiled.rtg.begin() + m * L);
    std::copy(window.states.begin(), window.states.end(), tiled.states.begin() + m * L * D);
    std::copy(window.prev_action.begin(), window.prev_action.end(), tiled.prev_action.begin() + m * L);
    std::copy(window.valid.begin(), window.valid.end(), tiled.valid.begin() + m * L);
    tiled.prev_action[m * L + L - 1] = candidates[m];
  }
  const Tensor v = (*this)(backbone.forward(tiled).hidden);
  std::vector<double> out(M);
  for (std::size_t m = 0; m < M; ++m) out[m] = v.value()[m * L + L - 1];
  return out;
}

Tensor value_loss(const Tensor& predicted, const Tensor& target, const Tensor& mask) {
  return masked_mse(predicted, target, mask);
}

}  // namespace gradbid::model
