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


#include "gradbid/eval/rollout.hpp"

#include <algorithm>
#include <stdexcept>

#include "gradbid/ad/params.hpp"

namespace gradbid::eval {

BiddingAgent::BiddingAgent(const model::GradModel& model, train::PolicyBundle bundle)
    : model_(model), bundle_(std::move(bundle)) {}

std::vector<env::EpisodeResult> BiddingAgent::rollout(std::span<const env::EpisodeConfig> episodes,
                                                      const RolloutOptions& opts) const {
  const auto& cfg = model_.config();
  const std::size_t E = episodes.size(), L = cfg.seq_len, D = cfg.state_dim;
  if (E == 0) return {};
  const std::size_t T = episodes.front().num_steps;
  for (const auto& ec : episodes) {
    if (ec.num_steps != T) throw std::invalid_argument("lockstep rollout needs equal episode lengths");
    if (ec.action_scale != cfg.action_scale) {
      throw std::invalid_argument("episode action_scale does not match the checkpoint");
    }
  }

  std::vector<env::EpisodeStepper> steppers;
  steppers.reserve(E);
  // Per episode and step: conditioning return, normalized state, action.
  std::vector<std::vector<double>> rtg(E), actions(E);
  std::vector<std::vector<env::StepState>> states(E);
  for (std::size_t e = 0; e < E; ++e) {
    steppers.emplace_back(episodes[e], e);
    const double g0 = opts.target == TargetMode::kBudgetMatched
                          ? bundle_.target_for(episodes[e].budget, opts.quantile)
                          : bundle_.target_return;
    rtg[e].push_back(g0);
  }
  Rng perturb = make_rng(opts.seed, "rollout-perturb");

  auto normalize = [&](const env::StepState& raw) {
    env::StepState out;
    for (std::size_t i = 0; i < env::kStateDim; ++i) out[i] = (raw[i] - bundle_.state_mean[i]) / bundle_.state_std[i];
    return out;
  };

  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t len = std::min(L, t + 1), first = t + 1 - len;
    model::TokenBatch batch;
    batch.resize(E, len, D);
    for (std::size_t e = 0; e < E; ++e) {
      states[e].push_back(normalize(steppers[e].state()));
      for (std::size_t k = 0; k < len; ++k) {
        const std::size_t tau = first + k, r = e * len + k;
        batch.valid[r] = 1;
        batch.rtg[r] = rtg[e][tau] / cfg.rtg_scale;
        batch.prev_action[r] = tau > 0 ? actions[e][tau - 1] : 0.0;
        std::copy(states[e][tau].begin(), states[e][tau].end(), batch.states.begin() + static_cast<std::ptrdiff_t>(r * D));
      }
    }
    const auto fwd = model_.backbone().forward(batch);
    std::vector<double> chosen(E);
    if (opts.mode == ActionMode::kExploit) {
      for (std::size_t e = 0; e < E; ++e) chosen[e] = fwd.action.value()[e * len + len - 1];
    } else {
      const auto out = model_.moe()(fwd.hidden, batch.prev_action, batch.valid, perturb);
      for (std::size_t e = 0; e < E; ++e) chosen[e] = out.aggregate.value()[e * len + len - 1];
    }
    for (std::size_t e = 0; e < E; ++e) {
      const double a = std::max(chosen[e], 0.0);
      steppers[e].step(a);
      actions[e].push_back(a);
      rtg[e].push_back(rtg[e].back() - steppers[e].history().back().reward);
    }
  }

  std::vector<env::EpisodeResult> results;
  results.reserve(E);
  for (auto& s : steppers) results.push_back(std::move(s).finish());
  return results;
}

LoadedPolicy load_policy(const std::filesystem::path& checkpoint_dir) {
  const auto ck = ad::read_checkpoint(checkpoint_dir);
  if (!ck.meta.contains("policy")) throw std::runtime_error("checkpoint has no policy metadata");
  LoadedPolicy p;
  p.bundle = train::policy_bundle_from_json(ck.meta.at("policy"));
  p.model = std::make_unique<model::GradModel>(p.bundle.model, 0);
  ad::load_parameters(p.model->params(), ck);
  return p;
}

}  // namespace gradbid::eval
