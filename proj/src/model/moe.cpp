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

#include "gradbid/model/moe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gradbid::model {

using ad::Tensor;

CandidateActionSet perturb_candidates(double prev_action, std::size_t num_candidates, Rng& rng, double low,
                                      double high) {
  if (num_candidates < 1) throw std::invalid_argument("need at least one candidate");
  std::uniform_real_distribution<double> f(low, high);
  CandidateActionSet set;
  set.factors.resize(num_candidates);
  set.candidates.resize(num_candidates);
  for (std::size_t m = 0; m < num_candidates; ++m) {
    set.factors[m] = f(rng);
    set.candidates[m] = prev_action * set.factors[m];
  }
  return set;
}

namespace {

RoutingDecision decide(std::span<const double> logits) {
  const std::size_t M = logits.size();
  RoutingDecision d;
  d.probabilities.resize(M);
  d.gate.assign(M, 0.0);
  std::size_t best = 0;
  for (std::size_t m = 1; m < M; ++m) {
    if (logits[m] > logits[best]) best = m;
  }
  double z = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    d.probabilities[m] = std::exp(logits[m] - logits[best]);
    z += d.probabilities[m];
  }
  for (double& p : d.probabilities) p /= z;
  d.chosen = best;
  d.gate[best] = 1.0;
  return d;
}

}  // namespace

RoutingDecision route(std::span<const double> h, const std::vector<std::vector<double>>& expert_embeddings) {
  std::vector<double> logits;
  logits.reserve(expert_embeddings.size());
  for (const auto& e : expert_embeddings) {
    if (e.size() != h.size()) throw std::invalid_argument("expert embedding width does not match hidden width");
    double s = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) s += h[i] * e[i];
    logits.push_back(s);
  }
  if (logits.empty()) throw std::invalid_argument("no experts to route to");
  return decide(logits);
}

std::vector<RoutingDecision> route_logits(std::span<const double> logits, std::size_t rows, std::size_t experts) {
  std::vector<RoutingDecision> out;
  out.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) out.push_back(decide(logits.subspan(r * experts, experts)));
  return out;
}

ActionMoE::ActionMoE(const ModelConfig& cfg, ad::ParameterStore& store) : cfg_(cfg) {
  const std::size_t H = cfg_.hidden_size, M = cfg_.num_experts;
  router_ = store.create("moe/router", {H, M}, ad::Init::kUniformFanIn);
  shared_ = Mlp2(store, "moe/shared", H, H, H);
  for (std::size_t m = 0; m < M; ++m) experts_.emplace_back(store, "moe/expert" + std::to_string(m), H, H, H);
  residual_ = Mlp2(store, "moe/residual", H, H, 1);
  omega_logits_ = store.create("moe/omega", {1, M}, ad::Init::kZeros);
}

MoEOutput ActionMoE::operator()(const Tensor& hidden, std::span<const double> prev_action,
                                std::span<const std::uint8_t> valid, Rng& rng) const {
  const std::size_t N = hidden.rows(), M = cfg_.num_experts;
  if (prev_action.size() != N || valid.size() != N) {
    throw std::invalid_argument("ActionMoE: prev_action/valid length does not match token count");
  }
  MoEOutput out;
  const Tensor h = cfg_.moe_stop_grad ? ad::detach(hidden) : hidden;
  out.input = h;

  std::uniform_real_distribution<double> factor(cfg_.perturb_low, cfg_.perturb_high);
  out.candidates.resize(N * M);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t m = 0; m < M; ++m) out.candidates[i * M + m] = prev_action[i] * factor(rng);
  }

  const Tensor logits = ad::matmul(h, router_);
  out.probabilities = ad::softmax(logits, 1);
  out.decisions.resize(N);
  std::vector<std::vector<std::size_t>> rows(M);
  for (std::size_t i = 0; i < N; ++i) {
    if (!valid[i]) continue;
    out.decisions[i] = decide(logits.value().subspan(i * M, M));
    rows[out.decisions[i].chosen].push_back(i);
  }

  // Top-1 dispatch: each expert only sees its own tokens.
  std::vector<Tensor> parts;
  std::vector<std::vector<std::size_t>> part_rows;
  for (std::size_t m = 0; m < M; ++m) {
    if (rows[m].empty()) continue;
    parts.push_back(experts_[m](ad::index_rows(h, rows[m])));
    part_rows.push_back(std::move(rows[m]));
  }
  out.shared = shared_(h);
  out.routed = parts.empty() ? Tensor::constant({N, cfg_.hidden_size}, 0.0) : ad::merge_rows(parts, part_rows, N);
  out.fused = ad::layernorm(ad::add(out.shared, out.routed));
  out.residual = residual_(out.fused);

  out.mixture_weights = ad::softmax(omega_logits_, 1);
  const Tensor weighted = ad::mul(Tensor::constant({N, M}, out.candidates), out.mixture_weights);
  out.refined = ad::clamp(ad::add(weighted, out.residual), cfg_.action_floor, cfg_.action_scale);
  const Tensor mix = ad::matmul(weighted, Tensor::constant({M, 1}, 1.0));
  out.aggregate = ad::clamp(ad::add(mix, out.residual), cfg_.action_floor, cfg_.action_scale);
  return out;
}

namespace {

std::size_t count_valid(std::span<const std::uint8_t> valid) {
  return static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](auto v) { return v != 0; }));
}

}  // namespace

std::vector<double> expert_usage(std::span<const RoutingDecision> decisions, std::span<const std::uint8_t> valid,
                                 std::size_t experts) {
  std::vector<double> u(experts, 0.0);
  const std::size_t n = count_valid(valid);
  if (n == 0) return u;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (valid[i]) u[decisions[i].chosen] += 1.0;
  }
  for (double& x : u) x /= static_cast<double>(n);
  return u;
}

double aux_balance(std::span<const RoutingDecision> decisions, std::span<const std::uint8_t> valid,
                   std::size_t experts) {
  const auto u = expert_usage(decisions, valid, experts);
  std::vector<double> p(experts, 0.0);
  const double n = static_cast<double>(count_valid(valid));
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (!valid[i]) continue;
    for (std::size_t m = 0; m < experts; ++m) p[m] += decisions[i].probabilities[m] / n;
  }
  double s = 0.0;
  for (std::size_t m = 0; m < experts; ++m) s += u[m] * p[m];
  return static_cast<double>(experts) * s;
}

Tensor balance_loss(const MoEOutput& out, const Tensor& hidden, std::span<const std::uint8_t> valid,
                    double lambda_aux) {
  const std::size_t N = hidden.rows(), M = out.probabilities.cols();
  const std::size_t n = count_valid(valid);
  if (n == 0) throw std::invalid_argument("balance_loss: empty batch");
  std::vector<double> mask(N);
  for (std::size_t i = 0; i < N; ++i) mask[i] = valid[i] ? 1.0 : 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);

  const Tensor usage = Tensor::constant({1, M}, expert_usage(out.decisions, valid, M));
  const Tensor mean_prob = ad::scale(ad::matmul(Tensor::constant({1, N}, mask), out.probabilities), inv_n);
  const Tensor aux = ad::scale(ad::sum(ad::mul(usage, mean_prob)), static_cast<double>(M));

  const Tensor diff = ad::sub(hidden, out.shared);
  const Tensor anchor = ad::scale(ad::sum(ad::mul(ad::square(diff), Tensor::constant({N, 1}, std::move(mask)))),
                                  inv_n);
  return ad::add(ad::scale(aux, lambda_aux), ad::scale(anchor, 1.0 - lambda_aux));
}

Tensor diversity_loss(const Tensor& refined, const Tensor& nominal, const Tensor& mask, std::size_t sequences) {
  const Tensor cos = ad::segment_cosine(ad::mul(refined, mask), ad::mul(nominal, mask), sequences);
  return ad::mean(cos);
}

}  // namespace gradbid::model
