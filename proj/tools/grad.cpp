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


// grad: command-line front end for data generation, training, evaluation,
// scoring of logged trajectories and the per-episode oracle.

#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "gradbid/eval/experiments.hpp"
#include "gradbid/oracle/oracle.hpp"
#include "gradbid/train/run_config.hpp"

namespace fs = std::filesystem;
using namespace gradbid;

namespace {

constexpr const char* kRunFile = "run.json";

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return nlohmann::json::parse(in);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

template <class T>
void write_csv_file(const fs::path& path, const T& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  eval::write_csv(out, result);
}

train::TrajectoryDataset load_or_generate(const train::RunConfig& run, const std::string& data_path) {
  if (data_path.empty()) return train::generate_behavior_data(run.behavior);
  train::TrajectoryDataset ds;
  ds.trajectories = env::read_trajectories(data_path);
  ds.compute_stats();
  ds.validate(run.behavior.env.num_steps);
  return ds;
}

// ---- generate ---------------------------------------------------------------------

struct GenerateArgs {
  std::string config, out;
};

int cmd_generate(const GenerateArgs& a) {
  const auto run = a.config.empty() ? train::RunConfig{} : train::load_run_config(a.config);
  const auto ds = train::generate_behavior_data(run.behavior);
  env::write_trajectories(a.out, ds.trajectories);
  const auto returns = ds.episode_returns();
  fmt::print("wrote {} episodes to {} (mean return {:.3f})\n", returns.size(), a.out,
             std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size()));
  return 0;
}

// ---- train ------------------------------------------------------------------------

struct TrainArgs {
  std::string config, out, data, resume;
  std::size_t log_every = 100;
};

int cmd_train(const TrainArgs& a) {
  const auto run = train::load_run_config(a.config);
  const fs::path out = a.out;
  fs::create_directories(out);
  const auto run_json = train::to_json(run).dump(2);
  write_text(out / kRunFile, run_json);

  const auto data = load_or_generate(run, a.data);
  train::Trainer trainer(run.train, run.model, data);
  if (!a.resume.empty()) trainer.load_checkpoint(a.resume);

  const auto save = [&](const fs::path& dir) {
    trainer.save_checkpoint(dir);
    write_text(dir / kRunFile, run_json);
  };

  // A resumed run appends to its own log; a fresh one starts over.
  const fs::path loss_path = out / "loss.csv";
  const bool append = trainer.step() > 0 && fs::exists(loss_path) && fs::file_size(loss_path) > 0;
  std::ofstream loss(loss_path, append ? std::ios::app : std::ios::trunc);
  if (!loss) throw std::runtime_error("cannot write " + loss_path.string());
  if (!append) train::write_loss_header(loss);

  const auto t0 = std::chrono::steady_clock::now();
  while (trainer.step() < run.train.num_steps) {
    const auto step = trainer.step();
    const auto tel = trainer.train_step();
    train::write_loss_row(loss, step, tel.losses);
    if (a.log_every > 0 && (step % a.log_every == 0 || step + 1 == run.train.num_steps)) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      fmt::print(stderr, "step {:>6}  total {:.5f}  policy {:.5f}  value {:.5f}  balance {:.4f}  diversity {:.4f}  ({:.1f}s)\n",
                 step, tel.losses.total, tel.losses.policy, tel.losses.value, tel.losses.balance,
                 tel.losses.diversity, secs);
    }
    const auto done = trainer.step();
    if (run.train.checkpoint_every > 0 && done % run.train.checkpoint_every == 0) {
      save(out / "checkpoints" / fmt::format("step_{:07}", done));
    }
  }
  save(out / "final");
  fmt::print("final checkpoint: {}\n", (out / "final").string());
  return 0;
}

// ---- eval -------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, sweep, out, config, data, constraint = "cpc:0.9";
  std::size_t seeds = 5;
  std::size_t episodes = 20;
  std::vector<std::size_t> experts{4, 6, 8};
  bool explore = false;
};

train::RunConfig run_config_for(const EvalArgs& a) {
  if (!a.config.empty()) return train::load_run_config(a.config);
  const fs::path stored = fs::path(a.checkpoint) / kRunFile;
  if (fs::exists(stored)) return train::run_config_from_json(read_json(stored));
  throw std::runtime_error("no " + std::string(kRunFile) + " next to the checkpoint; pass --config");
}

int cmd_eval(const EvalArgs& a) {
  const fs::path out = a.out;
  fs::create_directories(out);
  std::vector<std::uint64_t> seeds(a.seeds);
  std::iota(seeds.begin(), seeds.end(), 1);

  const auto policy = eval::load_policy(a.checkpoint);
  env::EpisodeConfig env_cfg;
  env_cfg.action_scale = policy.bundle.model.action_scale;
  const fs::path stored = fs::path(a.checkpoint) / kRunFile;
  if (!a.config.empty() || fs::exists(stored)) env_cfg = run_config_for(a).behavior.env;

  auto protocol = eval::EvalProtocol::for_env(env_cfg);
  protocol.episodes = a.episodes;
  protocol.constraint = eval::parse_constraint(a.constraint);
  protocol.rollout.mode = a.explore ? eval::ActionMode::kExplore : eval::ActionMode::kExploit;

  if (a.sweep == "budgets") {
    const auto agent = policy.agent();
    std::vector<eval::SweepEntry> entries;
    for (auto s : seeds) entries.push_back({&agent, s});
    const auto r = eval::run_sweep(entries, protocol);
    write_text(out / "budgets.json", eval::to_json(r).dump(2));
    write_csv_file(out / "budgets.csv", r);
    fmt::print("{:>6} {:>8} {:>10} {:>8} {:>10} {:>8}\n", "level", "budget", "score", "std", "oracle", "cpc_cr");
    for (const auto& l : r.levels) {
      fmt::print("{:>6.2f} {:>8.1f} {:>10.3f} {:>8.3f} {:>10.3f} {:>7.1f}%\n", l.level, l.budget, l.mean, l.std,
                 l.oracle_bound, l.cpc_cr);
    }
    return 0;
  }

  // Ablations and expert sweeps retrain from the stored run configuration.
  const auto run = run_config_for(a);
  const auto data = load_or_generate(run, a.data);
  eval::ExperimentSetup setup{run.train, run.model, seeds, protocol};

  if (a.sweep == "ablation") {
    const std::vector<eval::Variant> all{eval::Variant::kFull, eval::Variant::kNoMoe, eval::Variant::kNoValue,
                                         eval::Variant::kNoBoth};
    eval::AblationHooks hooks;
    hooks.on_trained = [](eval::Variant v, std::uint64_t seed, const eval::TrainedPolicy&) {
      fmt::print(stderr, "trained {} seed {}\n", eval::variant_name(v), seed);
    };
    const auto r = eval::run_ablation(data, setup, all, hooks);
    write_text(out / "ablation.json", eval::to_json(r).dump(2));
    write_csv_file(out / "ablation.csv", r);
    fmt::print("{:<10}", "variant");
    for (double l : r.levels) fmt::print(" {:>18}", fmt::format("{:.0f}%", 100.0 * l));
    fmt::print("\n");
    for (const auto& row : r.rows) {
      fmt::print("{:<10}", eval::variant_name(row.variant));
      for (std::size_t i = 0; i < r.levels.size(); ++i) {
        fmt::print(" {:>18}", fmt::format("{:.2f} ({:+.2f})", row.mean[i], row.delta[i]));
      }
      fmt::print("\n");
    }
    return 0;
  }

  if (a.sweep == "experts") {
    const auto rows = eval::run_expert_sweep(data, setup, a.experts);
    write_text(out / "experts.json", eval::to_json(std::span<const eval::ExpertSweepRow>(rows)).dump(2));
    write_csv_file(out / "experts.csv", std::span<const eval::ExpertSweepRow>(rows));
    fmt::print("{:>7} {:>10} {:>12} {:>8} {:>9}\n", "experts", "score", "reward", "exceed", "cpc/C");
    for (const auto& r : rows) {
      fmt::print("{:>7} {:>10.3f} {:>12.3f} {:>8.3f} {:>9.4f}\n", r.experts, r.score, r.total_reward, r.exceed_rate,
                 r.cpc_ratio);
    }
    return 0;
  }
  throw std::invalid_argument("unknown sweep: " + a.sweep);
}

// ---- score ------------------------------------------------------------------------

struct ScoreArgs {
  std::string trajectories;
  std::vector<std::string> constraints;
};

int cmd_score(const ScoreArgs& a) {
  std::vector<eval::ConstraintSpec> cons;
  for (const auto& c : a.constraints) cons.push_back(eval::parse_constraint(c));
  const auto trajs = env::read_trajectories(a.trajectories);
  std::vector<eval::EpisodeSummary> eps;
  nlohmann::ordered_json per_episode = nlohmann::ordered_json::array();
  for (const auto& t : trajs) {
    eps.push_back(eval::summarize(t));
    const auto r = eval::score(eps.back(), cons);
    per_episode.push_back({{"episode_id", t.episode_id}, {"score", r.score}, {"value", r.total_value}});
  }
  auto report = eval::to_json(eval::score(eps, cons));
  report["per_episode"] = std::move(per_episode);
  fmt::print("{}\n", report.dump(2));
  return 0;
}

// ---- oracle -----------------------------------------------------------------------

struct OracleArgs {
  std::string instance, method = "auto";
};

int cmd_oracle_solve(const OracleArgs& a) {
  const auto inst = oracle::instance_from_json(read_json(a.instance));
  std::string method = a.method;
  if (method == "auto") {
    method = inst.impressions.size() <= oracle::kMaxBruteForceItems ? "bruteforce" : "threshold";
  }
  oracle::OracleSolution sol;
  if (method == "bruteforce") {
    sol = oracle::solve_bruteforce(inst);
  } else if (method == "threshold") {
    sol = oracle::solve_threshold(inst);
  } else {
    throw std::invalid_argument("unknown method: " + method);
  }
  auto j = oracle::to_json(sol);
  j["method"] = method;
  j["feasible"] = oracle::is_feasible(inst, sol.selection);
  if (!inst.cpc_limit) j["certified"] = oracle::certify_closed_form(inst, sol);
  fmt::print("{}\n", j.dump(2));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GRAD auto-bidding: generate, train, evaluate and score"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Roll out the PID behavior policy and write trajectories (JSONL)");
  g->add_option("--config", gen.config, "Run configuration file (defaults if omitted)")->check(CLI::ExistingFile);
  g->add_option("--out", gen.out, "Output JSONL file")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model from a run configuration");
  t->add_option("--config", tr.config, "Run configuration file")->required()->check(CLI::ExistingFile);
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--data", tr.data, "Trajectory JSONL to train on instead of generating")->check(CLI::ExistingFile);
  t->add_option("--resume", tr.resume, "Checkpoint directory to resume from")->check(CLI::ExistingDirectory);
  t->add_option("--log-every", tr.log_every, "Progress line interval (0 disables)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Budget, ablation or expert-count sweeps");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--sweep", ev.sweep, "Sweep kind")->required()->check(CLI::IsMember({"budgets", "experts", "ablation"}));
  e->add_option("--seeds", ev.seeds, "Number of seeds (1..N)")->check(CLI::PositiveNumber);
  e->add_option("--out", ev.out, "Output directory")->required();
  e->add_option("--episodes", ev.episodes, "Evaluation episodes per (level, seed)")->check(CLI::PositiveNumber);
  e->add_option("--constraint", ev.constraint, "Scoring constraint, kind:limit[:beta]");
  e->add_option("--config", ev.config, "Run configuration overriding the stored one")->check(CLI::ExistingFile);
  e->add_option("--data", ev.data, "Trajectory JSONL for retraining sweeps")->check(CLI::ExistingFile);
  e->add_option("--experts", ev.experts, "Expert counts for the experts sweep");
  e->add_flag("--explore", ev.explore, "Execute the mixture-of-experts action instead of the policy head");

  ScoreArgs sc;
  auto* s = app.add_subcommand("score", "Score logged trajectories against constraints");
  s->add_option("--trajectories", sc.trajectories, "Trajectory JSONL")->required()->check(CLI::ExistingFile);
  s->add_option("--constraint", sc.constraints, "kind:limit[:beta], repeatable")->required();

  OracleArgs orc;
  auto* o = app.add_subcommand("oracle", "Offline optimum for a single bidding instance");
  o->require_subcommand(1);
  auto* os = o->add_subcommand("solve", "Solve a JSON instance and print the selection");
  os->add_option("--instance", orc.instance, "Instance JSON")->required()->check(CLI::ExistingFile);
  os->add_option("--method", orc.method, "Solver")->check(CLI::IsMember({"auto", "bruteforce", "threshold"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*g) return cmd_generate(gen);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*s) return cmd_score(sc);
    if (*os) return cmd_oracle_solve(orc);
  } catch (const std::exception& ex) {
    fmt::print(stderr, "error: {}\n", ex.what());
    return 1;
  }
  return 0;
}
