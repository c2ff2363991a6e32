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


// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. `--only <id>` (repeatable) restricts the run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "../support/fixtures.hpp"
#include "../support/primitive_cases.hpp"
#include "gradbid/ad/gradcheck.hpp"
#include "gradbid/eval/experiments.hpp"
#include "gradbid/model/grad_model.hpp"
#include "gradbid/oracle/oracle.hpp"
#include "gradbid/train/trainer.hpp"

namespace {

using namespace gradbid;
using ad::Tensor;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Desk-scale logged data shared by every training criterion.
const train::TrajectoryDataset& desk_data() {
  static const train::TrajectoryDataset data = [] {
    train::BehaviorConfig bc;
    bc.num_episodes = 500;
    return train::generate_behavior_data(bc);
  }();
  return data;
}

// ---- C1 -----------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  const auto cases = testing::grad_cases();
  double prim = 0.0;
  std::string worst = "-";
  for (std::size_t i = 0; i < cases.size(); ++i) {
    std::mt19937_64 rng(1000 + i);
    std::vector<Tensor> inputs;
    for (const auto& s : cases[i].inputs) inputs.push_back(testing::rand_param(s, rng));
    const auto rep = ad::check_gradients([&] { return cases[i].build(inputs); }, inputs, 1e-6);
    if (rep.max_rel_error >= prim) {
      prim = rep.max_rel_error;
      worst = cases[i].name;
    }
  }

  // Full one-block model: every parameter, every loss component.
  auto cfg = testing::tiny_config();
  const auto data = testing::small_dataset(4);
  train::TrainConfig tc;
  tc.batch_size = 2;
  train::Trainer trainer(tc, cfg, data);
  const auto batch = trainer.sampler().sample(0);
  std::vector<Tensor> params;
  for (const auto& [path, t] : trainer.model().params().all()) params.push_back(t);
  const Tensor nominal = trainer.model().backbone().forward(batch.tokens).action;
  const std::vector<double> frozen(nominal.value().begin(), nominal.value().end());
  const auto comp =
      ad::check_gradients([&] { return trainer.build_loss(batch, 0, false, frozen).total; }, params, 1e-6);

  const double secs = seconds_since(t0);
  return {prim < 1e-4 && comp.max_rel_error < 1e-3 && secs < 60.0,
          fmt::format("primitives max rel err {:.2e} over {} ops (worst {}), composite {:.2e} over {} entries, {:.1f} s",
                      prim, cases.size(), worst, comp.max_rel_error, comp.entries_checked, secs)};
}

// ---- C2 -----------------------------------------------------------------------------

Outcome causality() {
  const auto cfg = model::ModelConfig::desk();
  model::GradModel m(cfg, 5);
  Rng rng(2024);
  std::normal_distribution<double> n(0.0, 3.0);
  std::size_t compared = 0, mismatched = 0;
  for (int probe = 0; probe < 100; ++probe) {
    auto batch = testing::random_batch(cfg, 2, cfg.seq_len, rng);
    const std::size_t t = std::uniform_int_distribution<std::size_t>(0, cfg.seq_len - 2)(rng);
    const auto base = m.backbone().forward(batch);
    for (std::size_t b = 0; b < batch.batch; ++b) {
      for (std::size_t k = t + 1; k < cfg.seq_len; ++k) {
        const std::size_t r = b * cfg.seq_len + k;
        batch.rtg[r] += n(rng);
        batch.prev_action[r] = std::abs(n(rng));
        for (std::size_t d = 0; d < cfg.state_dim; ++d) batch.states[r * cfg.state_dim + d] = n(rng);
      }
    }
    const auto pert = m.backbone().forward(batch);
    for (std::size_t b = 0; b < batch.batch; ++b) {
      for (std::size_t k = 0; k <= t; ++k) {
        const std::size_t r = b * cfg.seq_len + k;
        ++compared;
        if (base.action.value()[r] != pert.action.value()[r]) ++mismatched;
      }
    }
  }
  return {mismatched == 0, fmt::format("100 probes, {} prefix outputs compared, {} differ", compared, mismatched)};
}

// ---- C3 -----------------------------------------------------------------------------

Outcome routing() {
  constexpr std::size_t kTokens = 10000;
  const auto cfg = model::ModelConfig::desk();
  model::GradModel m(cfg, 21);
  Rng rng(5);
  std::normal_distribution<double> n(0.0, 2.0);
  std::vector<double> h(kTokens * cfg.hidden_size);
  for (auto& x : h) x = n(rng);
  const std::vector<double> prev(kTokens, 1.0);
  const std::vector<std::uint8_t> valid(kTokens, 1);
  const auto out = m.moe()(Tensor::constant({kTokens, cfg.hidden_size}, h), prev, valid, rng);
  std::size_t bad_gate = 0;
  double worst_sum = 0.0;
  for (const auto& d : out.decisions) {
    const bool one_hot = std::count(d.gate.begin(), d.gate.end(), 1.0) == 1 &&
                         std::count(d.gate.begin(), d.gate.end(), 0.0) == static_cast<long>(d.gate.size()) - 1 &&
                         d.gate[d.chosen] == 1.0;
    if (!one_hot) ++bad_gate;
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(d.probabilities.begin(), d.probabilities.end(), 0.0) - 1.0));
  }

  // Two-expert toy: the expert a token does not pick must receive no gradient.
  const auto toy = testing::tiny_config();
  model::GradModel tm(toy, 31);
  std::normal_distribution<double> u(0.0, 1.0);
  std::size_t leaks = 0;
  std::array<std::size_t, 2> picks{};
  for (std::size_t token = 0; token < kTokens; ++token) {
    std::vector<double> x(toy.hidden_size), w(toy.hidden_size);
    for (auto& v : x) v = u(rng);
    for (auto& v : w) v = u(rng);
    const Tensor hid = Tensor::parameter({1, toy.hidden_size}, x);
    const std::vector<double> p{1.5};
    const std::vector<std::uint8_t> ok{1};
    tm.params().zero_grad();
    const auto o = tm.moe()(hid, p, ok, rng);
    ad::backward(ad::add(ad::sum(ad::mul(o.fused, Tensor::constant({1, toy.hidden_size}, w))), ad::sum(o.refined)));
    const std::size_t chosen = o.decisions[0].chosen;
    ++picks[chosen];
    for (const auto& path : tm.params().paths_with_prefix("moe/expert" + std::to_string(1 - chosen) + "/")) {
      for (double g : tm.params().get(path).grad()) {
        if (g != 0.0) ++leaks;
      }
    }
  }
  return {bad_gate == 0 && worst_sum <= 1e-12 && leaks == 0 && picks[0] > 0 && picks[1] > 0,
          fmt::format("{} tokens: {} non-one-hot gates, max |sum p - 1| {:.1e}; toy: {} nonzero grads to unchosen "
                      "expert, picks {}/{}",
                      kTokens, bad_gate, worst_sum, leaks, picks[0], picks[1])};
}

// ---- C4 -----------------------------------------------------------------------------

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  Rng rng(12345);
  std::size_t gap_violations = 0, unique = 0, certified = 0;
  double worst_gap_ratio = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto inst = oracle::sample_budget_instance(rng, 12);
    const auto exact = oracle::solve_bruteforce(inst);
    const auto greedy = oracle::solve_threshold(inst);
    double vmax = 0.0;
    for (const auto& imp : inst.impressions) vmax = std::max(vmax, imp.value);
    const double gap = exact.total_value - greedy.total_value;
    if (gap > vmax || gap < -1e-12 || !oracle::is_feasible(inst, greedy.selection)) ++gap_violations;
    if (vmax > 0.0) worst_gap_ratio = std::max(worst_gap_ratio, gap / vmax);
    if (oracle::has_unique_optimum(inst)) {
      ++unique;
      if (oracle::certify_closed_form(inst, exact)) ++certified;
    }
  }
  const double secs = seconds_since(t0);
  return {gap_violations == 0 && certified == unique && secs < 60.0,
          fmt::format("gap violations {}/100 (worst gap {:.3f} max v), certified {}/{} uniquely optimal, {:.1f} s",
                      gap_violations, worst_gap_ratio, certified, unique, secs)};
}

// ---- C5 -----------------------------------------------------------------------------

Outcome metric_exactness() {
  using namespace eval;
  const std::array<ConstraintSpec, 1> c1{ConstraintSpec{ConstraintKind::kCpc, 1.0, 2.0}};
  const auto r = score(EpisodeSummary{10.0, 30.0, 15.0, 15.0}, c1);
  const std::vector<double> daily{0.5, 1.3, 1.2, 2.0, 0.1};
  const std::vector<std::pair<std::string, std::pair<double, double>>> checks{
      {"penalty", {r.penalties[0], 0.25}},
      {"score", {r.score, 2.5}},
      {"penalty fn", {penalty(c1[0], 30.0, 15.0), 0.25}},
      {"cpc_cr", {cpc_cr(daily, 1.0), 60.0}},
      {"reward log2", {online_reward(0.001, 5.0, 1.0, 10.0, false), std::log(2.0)}},
      {"reward -1", {online_reward(0.0, 2.0, 1.0, 10.0, true), -1.0}},
      {"reward 0", {online_reward(0.0, 5.0, 1.0, 10.0, false), 0.0}},
  };
  double worst = 0.0;
  std::string failed;
  for (const auto& [name, v] : checks) {
    const double err = std::abs(v.first - v.second);
    worst = std::max(worst, err);
    if (!(err <= 1e-9)) failed += " " + name;
  }
  return {failed.empty(), fmt::format("{} hand examples, max abs err {:.1e}{}", checks.size(), worst,
                                      failed.empty() ? "" : ", failed:" + failed)};
}

// ---- C6 -----------------------------------------------------------------------------

Outcome value_target_identities() {
  Rng rng(99);
  std::uniform_real_distribution<double> g(-1000.0, 1000.0), u(0.0, 1.0), cpc(0.0, 5.0), lim(0.1, 3.0);
  std::size_t identity_fail = 0, bound_fail = 0, mono_fail = 0;
  constexpr int kContexts = 100000;
  for (int i = 0; i < kContexts; ++i) {
    model::ValueContext ctx;
    ctx.t_frac = 0.0;
    ctx.cpc_t = 0.0;
    ctx.budget_frac = 1.0;
    ctx.rtg = g(rng);
    ctx.sigma = 0.0;
    if (model::dynamic_target(ctx, rng) != ctx.rtg) ++identity_fail;

    const double gamma = model::temporal_factor(u(rng));
    if (!(gamma >= 1.0 && gamma <= std::exp(1.0))) ++bound_fail;
    const double c = lim(rng), a = cpc(rng), b = cpc(rng);
    const double lo = model::cost_factor(std::min(a, b), c, 2.0), hi = model::cost_factor(std::max(a, b), c, 2.0);
    if (!(lo >= hi && hi > 0.0 && lo <= 1.0)) ++mono_fail;
  }
  return {identity_fail + bound_fail + mono_fail == 0,
          fmt::format("{} contexts: identity failures {}, Gamma bound failures {}, Omega monotonicity failures {}",
                      kContexts, identity_fail, bound_fail, mono_fail)};
}

// ---- shared ablation run (C7, C9, C10) ----------------------------------------------

struct AblationRun {
  eval::AblationResult result;
  double seconds = 0.0;
  std::size_t steps_checked = 0;
  double worst_residual = 0.0;
  std::size_t flag_violations = 0;
};

const AblationRun& ablation_run() {
  static const AblationRun run = [] {
    AblationRun r;
    eval::ExperimentSetup setup;
    setup.train = train::TrainConfig::desk();
    setup.model = model::ModelConfig::desk();
    setup.protocol = eval::EvalProtocol::for_env(env::EpisodeConfig{});
    const double lb = setup.train.lambda_b, ld = setup.train.lambda_d;
    eval::AblationHooks hooks;
    hooks.on_step = [&](eval::Variant v, std::uint64_t, std::uint64_t, const train::StepTelemetry& tel) {
      const auto& l = tel.losses;
      if (v == eval::Variant::kFull) {
        r.worst_residual = std::max(r.worst_residual, std::abs(l.total - (l.policy + l.value + lb * l.balance + ld * l.diversity)));
      } else if (l.value != 0.0 || l.balance != 0.0 || l.diversity != 0.0 || l.total != l.policy) {
        ++r.flag_violations;
      }
      ++r.steps_checked;
    };
    hooks.on_trained = [](eval::Variant v, std::uint64_t seed, const eval::TrainedPolicy&) {
      fmt::print(stderr, "  trained {} seed {}\n", eval::variant_name(v), seed);
    };
    const std::vector<eval::Variant> variants{eval::Variant::kFull, eval::Variant::kNoBoth};
    const auto t0 = Clock::now();
    r.result = eval::run_ablation(desk_data(), setup, variants, hooks);
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

double overall_mean(const eval::AblationRow& row) {
  return std::accumulate(row.mean.begin(), row.mean.end(), 0.0) / static_cast<double>(row.mean.size());
}

// ---- C7 -----------------------------------------------------------------------------

std::map<std::string, std::vector<double>> snapshot(const model::GradModel& m) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [p, t] : m.params().all()) out[p] = {t.value().begin(), t.value().end()};
  return out;
}

bool group_moved(const std::map<std::string, std::vector<double>>& before, const model::GradModel& m,
                 const std::string& prefix) {
  for (const auto& [p, t] : m.params().all()) {
    if (p.starts_with(prefix) && before.at(p) != std::vector<double>(t.value().begin(), t.value().end())) return true;
  }
  return false;
}

Outcome loss_composition() {
  // Short runs under every flag combination: which components vanish and
  // which parameter groups move.
  std::size_t isolation_failures = 0;
  for (int flags = 0; flags < 4; ++flags) {
    auto tc = train::TrainConfig::desk();
    tc.use_action_moe = (flags & 1) != 0;
    tc.use_value_estimator = (flags & 2) != 0;
    train::Trainer tr(tc, model::ModelConfig::desk(), desk_data());
    const auto before = snapshot(tr.model());
    for (int i = 0; i < 5; ++i) {
      const auto l = tr.train_step().losses;
      const bool moe_ok = tc.use_action_moe ? (l.balance > 0.0 && l.diversity > 0.0)
                                            : (l.balance == 0.0 && l.diversity == 0.0);
      const bool value_ok = tc.use_value_estimator ? l.value > 0.0 : l.value == 0.0;
      const double expected = l.policy + l.value + tc.lambda_b * l.balance + tc.lambda_d * l.diversity;
      if (!moe_ok || !value_ok || std::abs(l.total - expected) > 1e-12) ++isolation_failures;
    }
    if (!group_moved(before, tr.model(), "ct/") || group_moved(before, tr.model(), "moe/") != tc.use_action_moe ||
        group_moved(before, tr.model(), "value/") != tc.use_value_estimator) {
      ++isolation_failures;
    }
  }
  const auto& run = ablation_run();
  return {isolation_failures == 0 && run.worst_residual <= 1e-12 && run.flag_violations == 0,
          fmt::format("{} training steps checked, max |total - weighted sum| {:.1e}, {} flag violations; "
                      "flag isolation failures {}",
                      run.steps_checked, run.worst_residual, run.flag_violations, isolation_failures)};
}

// ---- C8 -----------------------------------------------------------------------------

Outcome load_balance() {
  const auto t0 = Clock::now();
  std::array<double, 2> variance{};
  std::array<std::vector<double>, 2> usage;
  for (int arm = 0; arm < 2; ++arm) {
    auto mc = model::ModelConfig::desk();
    mc.lambda_aux = arm == 0 ? 0.2 : 0.0;
    auto tc = train::TrainConfig::desk();
    tc.num_steps = 2000;
    train::Trainer tr(tc, mc, desk_data());
    for (std::size_t s = 0; s < tc.num_steps; ++s) tr.train_step();
    // Expert usage of the trained model on held-out batches.
    std::vector<double> freq(mc.num_experts, 0.0);
    constexpr std::uint64_t kHeldOut = 1'000'000;
    for (std::uint64_t i = 0; i < 20; ++i) {
      const auto tel = tr.evaluate(tr.sampler().sample(kHeldOut + i), kHeldOut + i, false);
      for (std::size_t e = 0; e < freq.size(); ++e) freq[e] += tel.expert_usage[e] / 20.0;
    }
    const double mu = std::accumulate(freq.begin(), freq.end(), 0.0) / static_cast<double>(freq.size());
    for (double f : freq) variance[arm] += (f - mu) * (f - mu) / static_cast<double>(freq.size());
    usage[arm] = freq;
  }
  const double secs = seconds_since(t0);
  return {variance[0] < variance[1] && secs < 600.0,
          fmt::format("usage variance {:.3e} with balance vs {:.3e} without, usage [{:.3f}] vs [{:.3f}], {:.0f} s",
                      variance[0], variance[1], fmt::join(usage[0], " "), fmt::join(usage[1], " "), secs)};
}

// ---- C9, C10 ------------------------------------------------------------------------

Outcome ablation_direction() {
  const auto& run = ablation_run();
  const auto& full = run.result.rows.at(0);
  const auto& bc = run.result.rows.at(1);
  const double f = overall_mean(full), b = overall_mean(bc);
  return {f >= b && run.seconds < 45.0 * 60.0,
          fmt::format("mean score full {:.3f} vs w/o A&V {:.3f} (per level [{:.2f}] vs [{:.2f}]), {} seeds, {:.0f} s",
                      f, b, fmt::join(full.mean, " "), fmt::join(bc.mean, " "), full.per_seed.size(), run.seconds)};
}

Outcome budget_monotonicity() {
  const auto& run = ablation_run();
  const auto& full = run.result.rows.at(0);
  bool non_decreasing = true;
  for (std::size_t i = 1; i < full.mean.size(); ++i) non_decreasing = non_decreasing && full.mean[i] >= full.mean[i - 1];
  const double rho = eval::spearman(run.result.levels, full.mean);
  return {non_decreasing && rho >= 0.9,
          fmt::format("full model mean over {} seeds at levels [{}]: [{:.2f}], spearman {:.3f}", full.per_seed.size(),
                      fmt::join(run.result.levels, " "), fmt::join(full.mean, " "), rho)};
}

// ---- C11 ----------------------------------------------------------------------------

Outcome determinism() {
  const auto tc = train::TrainConfig::desk();
  const auto mc = model::ModelConfig::desk();
  train::Trainer a(tc, mc, desk_data()), b(tc, mc, desk_data());
  std::size_t trace_diffs = 0;
  for (int i = 0; i < 10; ++i) {
    const auto x = a.train_step().losses, y = b.train_step().losses;
    if (x.total != y.total || x.policy != y.policy || x.value != y.value || x.balance != y.balance ||
        x.diversity != y.diversity) {
      ++trace_diffs;
    }
  }
  const auto dir = std::filesystem::temp_directory_path() / "gradbid_acceptance_ckpt";
  std::filesystem::remove_all(dir);
  a.save_checkpoint(dir);
  train::Trainer c(tc, mc, desk_data());
  c.load_checkpoint(dir);
  std::filesystem::remove_all(dir);
  std::size_t forward_diffs = 0, compared = 0;
  for (std::uint64_t k = 0; k < 5; ++k) {
    const auto batch = a.sampler().sample(500 + k);
    const auto x = a.model().backbone().forward(batch.tokens);
    const auto y = c.model().backbone().forward(batch.tokens);
    const Tensor vx = a.model().value()(x.hidden), vy = c.model().value()(y.hidden);
    for (std::size_t i = 0; i < x.action.size(); ++i, ++compared) {
      if (x.action.value()[i] != y.action.value()[i] || vx.value()[i] != vy.value()[i]) ++forward_diffs;
    }
  }
  const auto next_a = a.train_step().losses.total, next_c = c.train_step().losses.total;
  return {trace_diffs == 0 && forward_diffs == 0 && next_a == next_c,
          fmt::format("10-step traces: {} differing steps; checkpoint round trip: {} of {} outputs differ, "
                      "resumed step {}",
                      trace_diffs, forward_diffs, compared, next_a == next_c ? "identical" : "differs")};
}

struct Criterion {
  const char* id;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GRAD acceptance criteria"};
  std::vector<std::string> only;
  app.add_option("--only", only, "Run only these criterion ids (C1..C11)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {"C1", "gradient correctness", gradient_correctness},
      {"C2", "causality", causality},
      {"C3", "routing invariants", routing},
      {"C4", "oracle equivalence", oracle_equivalence},
      {"C5", "metric exactness", metric_exactness},
      {"C6", "value-target identities", value_target_identities},
      {"C7", "loss composition", loss_composition},
      {"C8", "load-balance effect", load_balance},
      {"C9", "ablation direction", ablation_direction},
      {"C10", "budget monotonicity", budget_monotonicity},
      {"C11", "determinism and persistence", determinism},
  };

  std::size_t failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    ++ran;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failed;
    fmt::print("{} {:<4} {}: {}\n", o.pass ? "PASS" : "FAIL", c.id, c.title, o.detail);
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
