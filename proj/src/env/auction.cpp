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

#include "gradbid/env/auction.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace gradbid::env {

double Distribution::sample(Rng& rng) const {
  switch (kind) {
    case Kind::kBeta: {
      std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
      const double x = ga(rng);
      const double y = gb(rng);
      return x + y > 0.0 ? std::clamp(x / (x + y), 0.0, 1.0) : 0.0;
    }
    case Kind::kLogNormal:
      return std::lognormal_distribution<double>(a, b)(rng);
    case Kind::kUniform:
      return std::uniform_real_distribution<double>(a, b)(rng);
  }
  return 0.0;
}

std::string Distribution::name() const {
  switch (kind) {
    case Kind::kBeta:
      return "beta";
    case Kind::kLogNormal:
      return "lognormal";
    case Kind::kUniform:
      return "uniform";
  }
  return "unknown";
}

void Distribution::validate() const {
  const bool ok = std::isfinite(a) && std::isfinite(b) &&
                  (kind == Kind::kBeta ? (a > 0 && b > 0)
                   : kind == Kind::kLogNormal ? b > 0
                                              : (a >= 0 && b > a));
  if (!ok) throw std::invalid_argument("invalid " + name() + " distribution parameters");
}

void EpisodeConfig::validate() const {
  if (!(budget > 0) || !std::isfinite(budget)) throw std::invalid_argument("budget must be positive");
  if (!(cpc_limit > 0) || !std::isfinite(cpc_limit)) throw std::invalid_argument("cpc_limit must be positive");
  if (num_steps == 0) throw std::invalid_argument("num_steps must be positive");
  if (impressions_per_step == 0) throw std::invalid_argument("impressions_per_step must be positive");
  if (!(ctr_scale >= 0)) throw std::invalid_argument("ctr_scale must be nonnegative");
  if (!(action_scale > 0) || !(value_scale > 0)) throw std::invalid_argument("feature scales must be positive");
  value_distribution.validate();
  competitor_distribution.validate();
}

namespace {

nlohmann::ordered_json dist_json(const Distribution& d) {
  nlohmann::ordered_json j;
  j["name"] = d.name();
  j["params"] = {d.a, d.b};
  return j;
}

Distribution dist_from_json(const nlohmann::json& j) {
  const auto name = j.at("name").get<std::string>();
  const auto p = j.at("params");
  const double a = p.at(0).get<double>(), b = p.at(1).get<double>();
  if (name == "beta") return Distribution::beta(a, b);
  if (name == "lognormal") return Distribution::lognormal(a, b);
  if (name == "uniform") return Distribution::uniform(a, b);
  throw std::invalid_argument("unknown distribution: " + name);
}

}  // namespace

nlohmann::ordered_json to_json(const EpisodeConfig& c) {
  nlohmann::ordered_json j;
  j["budget"] = c.budget;
  j["cpc_limit"] = c.cpc_limit;
  j["num_steps"] = c.num_steps;
  j["impressions_per_step"] = c.impressions_per_step;
  j["value_distribution"] = dist_json(c.value_distribution);
  j["competitor_distribution"] = dist_json(c.competitor_distribution);
  j["ctr_scale"] = c.ctr_scale;
  j["action_scale"] = c.action_scale;
  j["value_scale"] = c.value_scale;
  j["seed"] = c.seed;
  return j;
}

EpisodeConfig episode_config_from_json(const nlohmann::json& j) {
  EpisodeConfig c;
  c.budget = j.at("budget").get<double>();
  c.cpc_limit = j.at("cpc_limit").get<double>();
  c.num_steps = j.at("num_steps").get<std::size_t>();
  c.impressions_per_step = j.at("impressions_per_step").get<std::size_t>();
  c.value_distribution = dist_from_json(j.at("value_distribution"));
  c.competitor_distribution = dist_from_json(j.at("competitor_distribution"));
  c.ctr_scale = j.value("ctr_scale", c.ctr_scale);
  c.action_scale = j.value("action_scale", c.action_scale);
  c.value_scale = j.value("value_scale", c.value_scale);
  c.seed = j.value("seed", std::uint64_t{0});
  c.validate();
  return c;
}

double compute_bid(double coef, const ImpressionOpportunity& opp) {
  if (!std::isfinite(coef) || coef <= 0.0) throw std::invalid_argument("invalid coefficient");
  return coef * opp.value;
}

StepOutcome run_step(double coef, std::span<const ImpressionOpportunity> opportunities,
                     BudgetAccount& account, Rng& click_rng) {
  if (!std::isfinite(coef) || coef < 0.0) throw std::invalid_argument("invalid coefficient");
  StepOutcome out;
  out.outcomes.resize(opportunities.size());
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::size_t i = 0; i < opportunities.size(); ++i) {
    const auto& opp = opportunities[i];
    const double click_draw = u01(click_rng);
    if (coef == 0.0) continue;
    const double bid = compute_bid(coef, opp);
    if (!(bid > opp.competitor_bid)) continue;
    const double cost = opp.competitor_bid;
    if (!account.try_charge(cost)) continue;
    auto& o = out.outcomes[i];
    o.won = true;
    o.cost = cost;
    o.clicked = click_draw < opp.pctr;
    out.reward += opp.value;
    out.cost += cost;
    ++out.wins;
    out.clicks += o.clicked ? 1 : 0;
  }
  return out;
}

FeatureScales feature_scales(const EpisodeConfig& c) { return {c.num_steps, c.action_scale, c.value_scale}; }

StepState featurize_state(const PacingSnapshot& s, std::span<const StepAggregate> history,
                          const FeatureScales& scales) {
  const double T = static_cast<double>(scales.num_steps);
  if (s.t >= scales.num_steps) throw std::out_of_range("step index out of range");
  if (!(s.budget > 0) || s.spent < 0 || s.spent > s.budget) {
    throw std::invalid_argument("spent must lie in [0, budget]");
  }
  const double t = static_cast<double>(s.t);
  StepState f{};
  f[kTimeElapsed] = t / T;
  f[kTimeRemaining] = 1.0 - t / T;
  f[kBudgetRemaining] = (s.budget - s.spent) / s.budget;
  f[kSpendVelocity] = std::min(kRatioCeiling, s.spent / (s.budget * std::max(t, 1.0) / T));
  f[kCpcRatio] = s.clicks > 0 ? std::min(kRatioCeiling, (s.spent / static_cast<double>(s.clicks)) / s.cpc_limit)
                              : 0.0;

  const double reward_norm = T / scales.value_scale;
  auto fill = [&](std::span<const StepAggregate> win, std::size_t base) {
    StepAggregate sum;
    for (const auto& a : win) {
      sum.opportunities += a.opportunities;
      sum.wins += a.wins;
      sum.cost += a.cost;
      sum.value += a.value;
    }
    if (win.empty()) return;
    const double wins = static_cast<double>(sum.wins);
    f[base + 0] = sum.opportunities > 0 ? wins / static_cast<double>(sum.opportunities) : 0.0;
    f[base + 1] = sum.wins > 0 ? sum.cost / wins : 0.0;
    f[base + 2] = sum.wins > 0 ? sum.value / wins : 0.0;
    f[base + 3] = sum.value / static_cast<double>(win.size()) * reward_norm;
  };
  if (!history.empty()) {
    fill(history.last(1), kLastWinRate);
    fill(history.last(std::min(kRecentWindow, history.size())), kWindowWinRate);
    f[kPrevAction] = history.back().action / scales.action_scale;
  }
  f[kCumValue] = s.value_so_far / scales.value_scale;
  f[kBias] = 1.0;
  return f;
}

std::vector<std::vector<ImpressionOpportunity>> sample_opportunities(const EpisodeConfig& config) {
  config.validate();
  Rng rng = make_rng(config.seed, "impressions");
  std::vector<std::vector<ImpressionOpportunity>> out(config.num_steps);
  for (std::size_t t = 0; t < config.num_steps; ++t) {
    out[t].resize(config.impressions_per_step);
    for (auto& o : out[t]) {
      o.value = std::clamp(config.value_distribution.sample(rng), 0.0, 1.0);
      o.pctr = std::min(1.0, o.value * config.ctr_scale);
      o.competitor_bid = std::max(0.0, config.competitor_distribution.sample(rng));
      o.step_index = t;
    }
  }
  return out;
}

void fill_returns_to_go(std::vector<StepRecord>& steps) {
  double acc = 0.0;
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
    acc += it->reward;
    it->rtg = acc;
  }
}

EpisodeStepper::EpisodeStepper(const EpisodeConfig& config, std::uint64_t episode_id)
    : config_(config),
      scales_(feature_scales(config)),
      account_(config.budget),
      click_rng_(make_rng(config.seed, "clicks")) {
  result_.opportunities = sample_opportunities(config_);
  result_.trajectory.episode_id = episode_id;
  result_.trajectory.config = config_;
  result_.trajectory.steps.reserve(config_.num_steps);
  history_.reserve(config_.num_steps);
  refresh_state();
}

void EpisodeStepper::refresh_state() {
  if (done()) return;
  const PacingSnapshot snap{t_, config_.budget, account_.spent(), result_.total_clicks, result_.total_value,
                            config_.cpc_limit};
  state_ = featurize_state(snap, history_, scales_);
}

void EpisodeStepper::step(double action) {
  if (done()) throw std::logic_error("episode already finished");
  if (!std::isfinite(action) || action < 0.0) throw std::invalid_argument("invalid action");
  StepOutcome out = run_step(action, result_.opportunities[t_], account_, click_rng_);
  StepRecord rec;
  rec.t = t_;
  rec.state = state_;
  rec.action = action;
  rec.reward = out.reward;
  result_.total_value += out.reward;
  result_.total_clicks += out.clicks;
  result_.per_step_rewards.push_back(out.reward);
  history_.push_back({result_.opportunities[t_].size(), out.wins, out.cost, out.reward, action});
  result_.outcomes.push_back(std::move(out.outcomes));
  result_.trajectory.steps.push_back(rec);
  ++t_;
  refresh_state();
}

EpisodeResult EpisodeStepper::finish() && {
  if (!done()) throw std::logic_error("episode not finished");
  result_.total_cost = account_.spent();
  result_.realized_cpc =
      result_.total_cost / static_cast<double>(std::max<std::size_t>(result_.total_clicks, 1));
  fill_returns_to_go(result_.trajectory.steps);
  result_.trajectory.totals = EpisodeTotals{result_.total_value, result_.total_cost, result_.total_clicks};
  return std::move(result_);
}

EpisodeResult run_episode(const Policy& policy, const EpisodeConfig& config, std::uint64_t episode_id) {
  EpisodeStepper ep(config, episode_id);
  while (!ep.done()) ep.step(policy(ep.state(), ep.history()));
  return std::move(ep).finish();
}

std::string trajectory_to_line(const Trajectory& traj) {
  nlohmann::ordered_json j;
  j["episode_id"] = traj.episode_id;
  j["config"] = to_json(traj.config);
  auto steps = nlohmann::ordered_json::array();
  for (const auto& s : traj.steps) {
    nlohmann::ordered_json r;
    r["t"] = s.t;
    r["state"] = s.state;
    r["action"] = s.action;
    r["reward"] = s.reward;
    r["rtg"] = s.rtg;
    steps.push_back(std::move(r));
  }
  j["steps"] = std::move(steps);
  if (traj.totals) {
    j["totals"] = {{"total_value", traj.totals->total_value},
                   {"total_cost", traj.totals->total_cost},
                   {"total_clicks", traj.totals->total_clicks}};
  }
  return j.dump();
}

Trajectory trajectory_from_line(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  Trajectory traj;
  traj.episode_id = j.at("episode_id").get<std::uint64_t>();
  traj.config = episode_config_from_json(j.at("config"));
  for (const auto& r : j.at("steps")) {
    StepRecord s;
    s.t = r.at("t").get<std::size_t>();
    const auto& st = r.at("state");
    if (st.size() != kStateDim) {
      throw std::invalid_argument("state must have " + std::to_string(kStateDim) + " features, got " +
                                  std::to_string(st.size()));
    }
    for (std::size_t i = 0; i < kStateDim; ++i) s.state[i] = st[i].get<double>();
    s.action = r.at("action").get<double>();
    s.reward = r.at("reward").get<double>();
    s.rtg = r.at("rtg").get<double>();
    traj.steps.push_back(s);
  }
  if (j.contains("totals")) {
    const auto& t = j["totals"];
    traj.totals = EpisodeTotals{t.at("total_value").get<double>(), t.at("total_cost").get<double>(),
                                t.at("total_clicks").get<std::size_t>()};
  }
  return traj;
}

void write_trajectories(const std::string& path, std::span<const Trajectory> trajs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& t : trajs) out << trajectory_to_line(t) << '\n';
  if (!out) throw std::runtime_error("short write to " + path);
}

std::vector<Trajectory> read_trajectories(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory file " + path);
  std::vector<Trajectory> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(trajectory_from_line(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

EpisodeTotals totals_of(const Trajectory& traj) {
  if (traj.totals) return *traj.totals;
  EpisodeTotals t;
  for (const auto& s : traj.steps) t.total_value += s.reward;
  if (!traj.steps.empty()) {
    t.total_cost = (1.0 - traj.steps.back().state[kBudgetRemaining]) * traj.config.budget;
  }
  return t;
}

}  // namespace gradbid::env
