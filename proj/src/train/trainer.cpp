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

#include "gradbid/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <stdexcept>

#include <fmt/format.h>

namespace gradbid::train {

using ad::Tensor;

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (!(lr > 0)) throw std::invalid_argument("lr must be positive");
  if (!(weight_decay >= 0) || !(adam_eps > 0)) throw std::invalid_argument("invalid optimizer settings");
  if (!(lambda_b >= 0) || !(lambda_d >= 0)) throw std::invalid_argument("loss weights must be nonnegative");
  if (!(sigma_frac >= 0)) throw std::invalid_argument("sigma_frac must be nonnegative");
  if (!(discount > 0 && discount <= 1)) throw std::invalid_argument("discount must lie in (0, 1]");
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["batch_size"] = c.batch_size;
  j["num_steps"] = c.num_steps;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["adam_eps"] = c.adam_eps;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["grad_clip"] = c.grad_clip;
  j["lambda_b"] = c.lambda_b;
  j["lambda_d"] = c.lambda_d;
  j["use_action_moe"] = c.use_action_moe;
  j["use_value_estimator"] = c.use_value_estimator;
  j["sigma_frac"] = c.sigma_frac;
  j["discounted_rtg"] = c.discounted_rtg;
  j["discount"] = c.discount;
  j["tau"] = c.tau;
  j["expectile"] = c.expectile;
  j["seed"] = c.seed;
  j["checkpoint_every"] = c.checkpoint_every;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.num_steps = j.value("num_steps", c.num_steps);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.lambda_b = j.value("lambda_b", c.lambda_b);
  c.lambda_d = j.value("lambda_d", c.lambda_d);
  c.use_action_moe = j.value("use_action_moe", c.use_action_moe);
  c.use_value_estimator = j.value("use_value_estimator", c.use_value_estimator);
  c.sigma_frac = j.value("sigma_frac", c.sigma_frac);
  c.discounted_rtg = j.value("discounted_rtg", c.discounted_rtg);
  c.discount = j.value("discount", c.discount);
  c.tau = j.value("tau", c.tau);
  c.expectile = j.value("expectile", c.expectile);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.validate();
  return c;
}

// --- batches -------------------------------------------------------------------

BatchSampler::BatchSampler(const TrajectoryDataset& data, const model::ModelConfig& cfg, std::size_t batch_size,
                           std::uint64_t seed, bool discounted, double discount)
    : data_(data), cfg_(cfg), batch_size_(batch_size), seed_(seed) {
  if (data_.trajectories.empty()) throw std::invalid_argument("cannot sample from an empty dataset");
  rtg_.reserve(data_.trajectories.size());
  for (const auto& tr : data_.trajectories) {
    if (tr.steps.empty()) throw std::invalid_argument("episode " + std::to_string(tr.episode_id) + " has no steps");
    std::vector<double> g(tr.steps.size());
    if (discounted) {
      double acc = 0.0;
      for (std::size_t t = tr.steps.size(); t-- > 0;) {
        acc = tr.steps[t].reward + discount * acc;
        g[t] = acc;
      }
    } else {
      for (std::size_t t = 0; t < tr.steps.size(); ++t) g[t] = tr.steps[t].rtg;
    }
    rtg_.push_back(std::move(g));
  }
}

TrainBatch BatchSampler::make_batch(std::size_t rows) const {
  TrainBatch b;
  const std::size_t n = rows * cfg_.seq_len;
  b.tokens.resize(rows, cfg_.seq_len, cfg_.state_dim);
  b.target_action.assign(n, 0.0);
  b.raw_states.assign(n, env::StepState{});
  b.rtg.assign(n, 0.0);
  b.cpc_limit.assign(n, 1.0);
  b.episode_steps.assign(n, 1);
  b.step_index.assign(n, 0);
  return b;
}

void BatchSampler::fill_window(TrainBatch& out, std::size_t row, std::size_t traj, std::size_t end) const {
  const auto& tr = data_.trajectories[traj];
  const std::size_t L = cfg_.seq_len, D = cfg_.state_dim;
  if (end == 0 || end > tr.steps.size()) throw std::out_of_range("window end outside the trajectory");
  const std::size_t len = std::min(L, end);
  const std::size_t first = end - len;
  for (std::size_t k = 0; k < len; ++k) {
    const std::size_t t = first + k;
    const std::size_t r = row * L + (L - len) + k;
    const auto& st = tr.steps[t];
    out.tokens.valid[r] = 1;
    out.tokens.rtg[r] = rtg_[traj][t] / cfg_.rtg_scale;
    out.tokens.prev_action[r] = t > 0 ? tr.steps[t - 1].action : 0.0;
    const auto norm = data_.normalize(st.state);
    std::copy(norm.begin(), norm.end(), out.tokens.states.begin() + static_cast<std::ptrdiff_t>(r * D));
    out.target_action[r] = st.action;
    out.raw_states[r] = st.state;
    out.rtg[r] = rtg_[traj][t];
    out.cpc_limit[r] = tr.config.cpc_limit;
    out.episode_steps[r] = tr.steps.size();
    out.step_index[r] = t;
  }
}

TrainBatch BatchSampler::sample(std::uint64_t index) const {
  Rng rng = make_rng(seed_, "batch", index);
  std::uniform_int_distribution<std::size_t> pick(0, data_.trajectories.size() - 1);
  TrainBatch b = make_batch(batch_size_);
  for (std::size_t row = 0; row < batch_size_; ++row) {
    const std::size_t traj = pick(rng);
    std::uniform_int_distribution<std::size_t> end(1, data_.trajectories[traj].steps.size());
    fill_window(b, row, traj, end(rng));
  }
  return b;
}

// --- trainer -------------------------------------------------------------------

Trainer::Trainer(const TrainConfig& tcfg, const model::ModelConfig& mcfg, const TrajectoryDataset& data)
    : tcfg_(tcfg),
      mcfg_(mcfg),
      data_(data),
      model_(std::make_unique<model::GradModel>(mcfg, tcfg.seed)),
      opt_(ad::AdamWConfig{tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.adam_eps, tcfg.weight_decay}),
      sampler_(data, mcfg, tcfg.batch_size, tcfg.seed, tcfg.discounted_rtg, tcfg.discount) {
  tcfg_.validate();
  mcfg_.validate();
}

std::vector<std::string> Trainer::trainable_prefixes() const {
  std::vector<std::string> p{model::GradModel::kBackbonePrefix};
  if (tcfg_.use_value_estimator) p.emplace_back(model::GradModel::kValuePrefix);
  if (tcfg_.use_action_moe) p.emplace_back(model::GradModel::kMoePrefix);
  return p;
}

namespace {

double checked(const Tensor& t, const char* component, std::uint64_t step) {
  const double v = t.item();
  if (!std::isfinite(v)) {
    throw std::runtime_error(fmt::format("non-finite {} loss at step {}", component, step));
  }
  return v;
}

}  // namespace

LossGraph Trainer::build_loss(const TrainBatch& batch, std::uint64_t index, bool with_noise,
                              std::span<const double> nominal) const {
  const std::size_t N = batch.tokens.tokens();
  std::vector<double> mask(N);
  for (std::size_t i = 0; i < N; ++i) mask[i] = batch.tokens.valid[i] ? 1.0 : 0.0;
  const Tensor mask_t = Tensor::constant({N, 1}, mask);

  const auto fwd = model_->backbone().forward(batch.tokens);
  StepTelemetry tel;
  const Tensor lp = model::policy_loss(fwd.action, Tensor::constant({N, 1}, batch.target_action), mask_t);
  tel.losses.policy = checked(lp, "policy", index);
  Tensor total = lp;

  if (tcfg_.use_value_estimator) {
    Rng noise = make_rng(tcfg_.seed, "value-noise", index);
    const double sigma = with_noise ? tcfg_.sigma_frac : 0.0;
    std::vector<double> target(N, 0.0), weight(mask);
    for (std::size_t i = 0; i < N; ++i) {
      if (!batch.tokens.valid[i]) continue;
      // Targets live on the rtg_scale-normalized scale, noise included.
      const auto ctx = model::value_context(batch.raw_states[i], batch.rtg[i] / mcfg_.rtg_scale, batch.cpc_limit[i],
                                            batch.episode_steps[i], mcfg_, sigma);
      target[i] = model::dynamic_target(ctx, noise, mcfg_.time_sign);
      if (mcfg_.value_weight_ramp) {
        weight[i] = 1.0 + static_cast<double>(batch.step_index[i]) / static_cast<double>(batch.episode_steps[i]);
      }
    }
    const Tensor pred = model_->value()(fwd.hidden);
    const Tensor lv = model::value_loss(pred, Tensor::constant({N, 1}, std::move(target)),
                                        Tensor::constant({N, 1}, std::move(weight)));
    tel.losses.value = checked(lv, "value", index);
    total = ad::add(total, lv);
  }

  if (tcfg_.use_action_moe) {
    Rng perturb = make_rng(tcfg_.seed, "moe-perturb", index);
    const auto out = model_->moe()(fwd.hidden, batch.tokens.prev_action, batch.tokens.valid, perturb);
    const Tensor lb = model::balance_loss(out, out.input, batch.tokens.valid, mcfg_.lambda_aux);
    if (!nominal.empty() && nominal.size() != N) throw std::invalid_argument("nominal actions do not match the batch");
    const Tensor nominal_t = nominal.empty() ? ad::detach(fwd.action)
                                             : Tensor::constant({N, 1}, {nominal.begin(), nominal.end()});
    const Tensor ld = model::diversity_loss(out.refined, nominal_t, mask_t, batch.tokens.batch);
    tel.losses.balance = checked(lb, "balance", index);
    tel.losses.diversity = checked(ld, "diversity", index);
    tel.expert_usage = model::expert_usage(out.decisions, batch.tokens.valid, mcfg_.num_experts);
    total = ad::add(total, ad::add(ad::scale(lb, tcfg_.lambda_b), ad::scale(ld, tcfg_.lambda_d)));
  }
  tel.losses.total = checked(total, "total", index);
  return {total, std::move(tel)};
}

StepTelemetry Trainer::run(const TrainBatch& batch, std::uint64_t index, bool update, bool with_noise) {
  auto& store = model_->params();
  store.zero_grad();
  auto [total, tel] = build_loss(batch, index, with_noise);
  if (update) {
    ad::backward(total);
    const auto prefixes = trainable_prefixes();
    tel.grad_norm = ad::clip_grad_norm(store, prefixes, tcfg_.grad_clip);
    if (!std::isfinite(tel.grad_norm)) {
      throw std::runtime_error(fmt::format("non-finite gradient norm at step {}", index));
    }
    opt_.step(store, prefixes);
  }
  return tel;
}

StepTelemetry Trainer::train_step() { return train_on(sampler_.sample(step_)); }

StepTelemetry Trainer::train_on(const TrainBatch& batch) {
  StepTelemetry tel = run(batch, step_, true, true);
  ++step_;
  return tel;
}

StepTelemetry Trainer::evaluate(const TrainBatch& batch, std::uint64_t noise_index, bool with_noise) {
  return run(batch, noise_index, false, with_noise);
}

nlohmann::ordered_json to_json(const PolicyBundle& b) {
  nlohmann::ordered_json j;
  j["model"] = model::to_json(b.model);
  j["state_mean"] = b.state_mean;
  j["state_std"] = b.state_std;
  j["target_return"] = b.target_return;
  j["budget_returns"] = b.budget_returns;
  return j;
}

PolicyBundle policy_bundle_from_json(const nlohmann::json& j) {
  PolicyBundle b;
  b.model = model::model_config_from_json(j.at("model"));
  const auto mean = j.at("state_mean").get<std::vector<double>>();
  const auto sd = j.at("state_std").get<std::vector<double>>();
  if (mean.size() != env::kStateDim || sd.size() != env::kStateDim) {
    throw std::runtime_error("checkpoint normalization has the wrong width");
  }
  std::copy(mean.begin(), mean.end(), b.state_mean.begin());
  std::copy(sd.begin(), sd.end(), b.state_std.begin());
  b.target_return = j.at("target_return").get<double>();
  if (j.contains("budget_returns")) {
    b.budget_returns = j.at("budget_returns").get<std::vector<std::pair<double, double>>>();
  }
  return b;
}

namespace {

// Linear interpolation between order statistics.
double quantile_of(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile of an empty set");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

double target_return(const TrajectoryDataset& data, double quantile) {
  if (data.trajectories.empty()) throw std::invalid_argument("dataset is empty");
  return quantile_of(data.episode_returns(), quantile);
}

double PolicyBundle::target_for(double budget, double quantile, double tolerance, std::size_t min_count) const {
  if (budget_returns.empty()) return target_return;
  std::vector<std::pair<double, double>> by_distance;
  by_distance.reserve(budget_returns.size());
  for (const auto& [b, r] : budget_returns) by_distance.emplace_back(std::abs(std::log(b / budget)), r);
  std::stable_sort(by_distance.begin(), by_distance.end(),
                   [](const auto& x, const auto& y) { return x.first < y.first; });
  const double band = std::log1p(tolerance);
  std::vector<double> picked;
  for (const auto& [d, r] : by_distance) {
    if (d > band && picked.size() >= min_count) break;
    picked.push_back(r);
  }
  return quantile_of(std::move(picked), quantile);
}

PolicyBundle Trainer::bundle() const {
  PolicyBundle b{mcfg_, data_.state_mean, data_.state_std, target_return(data_), {}};
  for (const auto& tr : data_.trajectories) {
    b.budget_returns.emplace_back(tr.config.budget, tr.steps.empty() ? 0.0 : tr.steps.front().rtg);
  }
  return b;
}

std::unique_ptr<model::GradModel> Trainer::release_model() && { return std::move(model_); }

void Trainer::save_checkpoint(const std::filesystem::path& dir) const {
  auto tensors = ad::snapshot_parameters(model_->params());
  for (const auto& [path, mom] : opt_.moments()) {
    const auto shape = model_->params().get(path).shape();
    tensors.push_back({"adam.m/" + path, shape, mom.m});
    tensors.push_back({"adam.v/" + path, shape, mom.v});
  }
  const PolicyBundle bundle = this->bundle();
  nlohmann::ordered_json meta;
  meta["policy"] = to_json(bundle);
  meta["train"] = to_json(tcfg_);
  meta["step"] = step_;
  meta["adam_step"] = opt_.step_count();
  ad::write_checkpoint(dir, tensors, nlohmann::json::parse(meta.dump()));
}

void Trainer::load_checkpoint(const std::filesystem::path& dir) {
  const auto ck = ad::read_checkpoint(dir);
  const auto bundle = policy_bundle_from_json(ck.meta.at("policy"));
  if (model::to_json(bundle.model) != model::to_json(mcfg_)) {
    throw std::runtime_error("checkpoint model config does not match the trainer's");
  }
  ad::load_parameters(model_->params(), ck);
  std::map<std::string, ad::AdamW::Moments, std::less<>> moments;
  for (const auto& [path, t] : ck.tensors) {
    if (path.starts_with("adam.m/")) moments[path.substr(7)].m = t.values;
    if (path.starts_with("adam.v/")) moments[path.substr(7)].v = t.values;
  }
  opt_.restore(ck.meta.at("adam_step").get<std::uint64_t>(), std::move(moments));
  step_ = ck.meta.at("step").get<std::uint64_t>();
}

void write_loss_header(std::ostream& os) { os << "step,policy,value,balance,diversity,total\n"; }

void write_loss_row(std::ostream& os, std::uint64_t step, const LossBreakdown& l) {
  os << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", step, l.policy, l.value, l.balance, l.diversity,
                    l.total);
}

}  // namespace gradbid::train
