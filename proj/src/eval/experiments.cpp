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


#include "gradbid/eval/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "gradbid/oracle/oracle.hpp"
#include "gradbid/util/rng.hpp"

namespace gradbid::eval {

EvalProtocol EvalProtocol::for_env(const env::EpisodeConfig& env) {
  EvalProtocol p;
  p.env = env;
  p.constraint.kind = ConstraintKind::kCpc;
  p.constraint.limit = env.cpc_limit;
  return p;
}

std::vector<env::EpisodeConfig> eval_episodes(const EvalProtocol& p, double level, std::uint64_t seed) {
  std::vector<env::EpisodeConfig> out(p.episodes, p.env);
  for (std::size_t e = 0; e < p.episodes; ++e) {
    out[e].budget = p.env.budget * level;
    out[e].seed = derive_seed(seed, "eval-episode", e);
  }
  return out;
}

double oracle_bound(const env::EpisodeResult& episode) {
  oracle::BiddingInstance inst;
  inst.budget = episode.trajectory.config.budget;
  for (const auto& step : episode.opportunities) {
    for (const auto& o : step) inst.impressions.push_back({o.value, o.pctr, o.competitor_bid});
  }
  if (inst.impressions.empty()) return 0.0;
  return oracle::solve_threshold(inst).lp_relaxation_value.value_or(0.0);
}

namespace {

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double pooled_ratio(std::span<const EpisodeSummary> eps, const ConstraintSpec& c) {
  double cost = 0.0, outcomes = 0.0;
  for (const auto& e : eps) {
    cost += e.cost;
    outcomes += e.outcomes(c.kind);
  }
  return realized_ratio(cost, outcomes) / c.limit;
}

std::string hex(std::uint64_t x) { return fmt::format("{:016x}", x); }

}  // namespace

LevelEvaluation evaluate_level(const BiddingAgent& agent, const EvalProtocol& p, double level, std::uint64_t seed) {
  const auto configs = eval_episodes(p, level, seed);
  RolloutOptions opts = p.rollout;
  opts.seed = derive_seed(seed, "eval-rollout", static_cast<std::uint64_t>(std::llround(level * 1e6)));
  const auto results = agent.rollout(configs, opts);

  LevelEvaluation ev;
  ev.level = level;
  ev.budget = p.env.budget * level;
  const std::array<ConstraintSpec, 1> cons{p.constraint};
  std::vector<double> cpcs;
  for (const auto& r : results) {
    ev.episodes.push_back(summarize(r));
    ev.scores.push_back(score(ev.episodes.back(), cons).score);
    ev.oracle_bounds.push_back(oracle_bound(r));
    cpcs.push_back(realized_ratio(ev.episodes.back().cost, ev.episodes.back().clicks));
  }
  ev.mean_score = mean_of(ev.scores);
  double v = 0.0;
  for (const auto& e : ev.episodes) v += e.value;
  ev.mean_value = v / static_cast<double>(ev.episodes.size());
  ev.cpc_cr = cpc_cr(cpcs, p.constraint.limit);
  ev.exceed_rate = exceed_rate(ev.episodes, p.constraint);
  ev.cpc_ratio = pooled_ratio(ev.episodes, p.constraint);
  return ev;
}

SweepResult run_sweep(std::span<const SweepEntry> entries, const EvalProtocol& p) {
  if (entries.empty()) throw std::invalid_argument("run_sweep: no policies");
  SweepResult res;
  nlohmann::ordered_json fp;
  fp["env"] = env::to_json(p.env);
  fp["levels"] = p.levels;
  fp["episodes"] = p.episodes;
  fp["constraint"] = to_string(p.constraint);
  fp["mode"] = p.rollout.mode == ActionMode::kExploit ? "exploit" : "explore";
  for (const auto& e : entries) {
    if (e.agent == nullptr) throw std::invalid_argument("run_sweep: null policy");
    if (e.agent->model().config().action_scale != p.env.action_scale) {
      throw std::invalid_argument("checkpoint and environment disagree on action_scale");
    }
    fp["policies"].push_back({{"model", model::to_json(e.agent->model().config())}, {"seed", e.seed}});
  }
  res.fingerprint = hex(fnv1a(fp.dump()));

  for (double level : p.levels) {
    LevelStats st;
    st.level = level;
    st.budget = p.env.budget * level;
    std::vector<double> bounds, crs, exceed;
    for (const auto& e : entries) {
      const auto ev = evaluate_level(*e.agent, p, level, e.seed);
      st.per_seed.push_back(ev.mean_score);
      bounds.insert(bounds.end(), ev.oracle_bounds.begin(), ev.oracle_bounds.end());
      for (std::size_t i = 0; i < ev.scores.size(); ++i) {
        if (ev.scores[i] > ev.oracle_bounds[i]) st.oracle_dominates = false;
      }
      crs.push_back(ev.cpc_cr);
      exceed.push_back(ev.exceed_rate);
    }
    st.mean = mean_of(st.per_seed);
    st.std = sample_std(st.per_seed);
    st.oracle_bound = mean_of(bounds);
    st.cpc_cr = mean_of(crs);
    st.exceed_rate = mean_of(exceed);
    res.levels.push_back(std::move(st));
  }
  return res;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoMoe: return "w/o A";
    case Variant::kNoValue: return "w/o V";
    case Variant::kNoBoth: return "w/o A&V";
  }
  return "unknown";
}

train::TrainConfig apply_variant(train::TrainConfig c, Variant v) {
  c.use_action_moe = v == Variant::kFull || v == Variant::kNoValue;
  c.use_value_estimator = v == Variant::kFull || v == Variant::kNoMoe;
  return c;
}

TrainedPolicy train_policy(const train::TrajectoryDataset& data, const train::TrainConfig& tcfg,
                           const model::ModelConfig& mcfg, const StepHook& on_step) {
  train::Trainer trainer(tcfg, mcfg, data);
  for (std::size_t i = 0; i < tcfg.num_steps; ++i) {
    const auto tel = trainer.train_step();
    if (on_step) on_step(trainer.step() - 1, tel);
  }
  TrainedPolicy out;
  out.bundle = trainer.bundle();
  out.model = std::move(trainer).release_model();
  return out;
}

AblationResult run_ablation(const train::TrajectoryDataset& data, const ExperimentSetup& setup,
                            std::span<const Variant> variants, const AblationHooks& hooks) {
  std::vector<Variant> order{Variant::kFull};
  for (Variant v : variants) {
    if (std::find(order.begin(), order.end(), v) == order.end()) order.push_back(v);
  }
  AblationResult res;
  res.levels = setup.protocol.levels;
  for (Variant v : order) {
    AblationRow row;
    row.variant = v;
    for (std::uint64_t seed : setup.seeds) {
      train::TrainConfig tc = apply_variant(setup.train, v);
      tc.seed = seed;
      StepHook step_hook;
      if (hooks.on_step) {
        step_hook = [&](std::uint64_t step, const train::StepTelemetry& tel) { hooks.on_step(v, seed, step, tel); };
      }
      const auto trained = train_policy(data, tc, setup.model, step_hook);
      if (hooks.on_trained) hooks.on_trained(v, seed, trained);
      const auto agent = trained.agent();
      std::vector<double> scores;
      for (double level : res.levels) scores.push_back(evaluate_level(agent, setup.protocol, level, seed).mean_score);
      row.per_seed.push_back(std::move(scores));
    }
    for (std::size_t l = 0; l < res.levels.size(); ++l) {
      std::vector<double> col;
      for (const auto& s : row.per_seed) col.push_back(s[l]);
      row.mean.push_back(mean_of(col));
      row.std.push_back(sample_std(col));
    }
    res.rows.push_back(std::move(row));
  }
  for (auto& row : res.rows) {
    for (std::size_t l = 0; l < res.levels.size(); ++l) row.delta.push_back(row.mean[l] - res.rows.front().mean[l]);
  }
  return res;
}

ExpertSweepRow summarize_expert_row(std::size_t experts, std::vector<EpisodeSummary> episodes,
                                    const ConstraintSpec& c) {
  ExpertSweepRow row;
  row.experts = experts;
  const std::array<ConstraintSpec, 1> cons{c};
  double s = 0.0, v = 0.0;
  for (const auto& e : episodes) {
    s += score(e, cons).score;
    v += e.value;
  }
  const auto n = static_cast<double>(std::max<std::size_t>(episodes.size(), 1));
  row.score = s / n;
  row.total_reward = v / n;
  row.exceed_rate = exceed_rate(episodes, c);
  row.cpc_ratio = pooled_ratio(episodes, c);
  row.episodes = std::move(episodes);
  return row;
}

std::vector<ExpertSweepRow> run_expert_sweep(const train::TrajectoryDataset& data, const ExperimentSetup& setup,
                                             std::span<const std::size_t> expert_counts) {
  std::vector<ExpertSweepRow> rows;
  for (std::size_t m : expert_counts) {
    model::ModelConfig mc = setup.model;
    mc.num_experts = m;
    mc.validate();
    std::vector<EpisodeSummary> all;
    for (std::uint64_t seed : setup.seeds) {
      train::TrainConfig tc = apply_variant(setup.train, Variant::kFull);
      tc.seed = seed;
      const auto trained = train_policy(data, tc, mc);
      const auto ev = evaluate_level(trained.agent(), setup.protocol, 1.0, seed);
      all.insert(all.end(), ev.episodes.begin(), ev.episodes.end());
    }
    rows.push_back(summarize_expert_row(m, std::move(all), setup.protocol.constraint));
  }
  return rows;
}

nlohmann::ordered_json to_json(const ScoreReport& r) {
  nlohmann::ordered_json j;
  j["episodes"] = r.episodes;
  j["total_value"] = r.total_value;
  j["total_cost"] = r.total_cost;
  j["realized_ratios"] = r.ratios;
  j["penalties"] = r.penalties;
  j["score"] = r.score;
  return j;
}

nlohmann::ordered_json to_json(const SweepResult& r) {
  nlohmann::ordered_json j;
  j["fingerprint"] = r.fingerprint;
  for (const auto& l : r.levels) {
    j["levels"].push_back({{"level", l.level},
                           {"budget", l.budget},
                           {"mean_score", l.mean},
                           {"std_score", l.std},
                           {"per_seed", l.per_seed},
                           {"oracle_bound", l.oracle_bound},
                           {"oracle_dominates", l.oracle_dominates},
                           {"cpc_cr", l.cpc_cr},
                           {"exceed_rate", l.exceed_rate}});
  }
  return j;
}

nlohmann::ordered_json to_json(const AblationResult& r) {
  nlohmann::ordered_json j;
  j["levels"] = r.levels;
  for (const auto& row : r.rows) {
    j["rows"].push_back({{"variant", variant_name(row.variant)},
                         {"mean", row.mean},
                         {"std", row.std},
                         {"delta", row.delta},
                         {"per_seed", row.per_seed}});
  }
  return j;
}

nlohmann::ordered_json to_json(std::span<const ExpertSweepRow> rows) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    // Exceed rate and ratio follow this tool's own definitions.
    j.push_back({{"experts", r.experts},
                 {"score", r.score},
                 {"total_reward", r.total_reward},
                 {"exceed_rate", r.exceed_rate},
                 {"cpc_ratio", r.cpc_ratio},
                 {"episodes", r.episodes.size()},
                 {"definitions", "exceed_rate: share of episodes with CPC above the limit; "
                                 "cpc_ratio: pooled CPC divided by the limit"}});
  }
  return j;
}

void write_csv(std::ostream& os, const SweepResult& r) {
  os << "level,budget,mean_score,std_score,oracle_bound,oracle_dominates,cpc_cr,exceed_rate\n";
  for (const auto& l : r.levels) {
    os << fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g},{},{:.10g},{:.10g}\n", l.level, l.budget, l.mean, l.std,
                      l.oracle_bound, l.oracle_dominates ? 1 : 0, l.cpc_cr, l.exceed_rate);
  }
}

void write_csv(std::ostream& os, const AblationResult& r) {
  os << "variant";
  for (double l : r.levels) os << fmt::format(",mean_{0:g},std_{0:g},delta_{0:g}", l * 100.0);
  os << '\n';
  for (const auto& row : r.rows) {
    os << '"' << variant_name(row.variant) << '"';
    for (std::size_t i = 0; i < r.levels.size(); ++i) {
      os << fmt::format(",{:.10g},{:.10g},{:.10g}", row.mean[i], row.std[i], row.delta[i]);
    }
    os << '\n';
  }
}

void write_csv(std::ostream& os, std::span<const ExpertSweepRow> rows) {
  os << "experts,score,total_reward,exceed_rate,cpc_ratio\n";
  for (const auto& r : rows) {
    os << fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g}\n", r.experts, r.score, r.total_reward, r.exceed_rate,
                      r.cpc_ratio);
  }
}

namespace {

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: need two equal-length series");
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = mean_of(rx), my = mean_of(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace gradbid::eval
