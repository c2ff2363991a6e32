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


#include "gradbid/train/run_config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

namespace gradbid::train {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool parse_number(std::string_view text, double& out) {
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

// "beta(2, 5)" -> {"name": "beta", "params": [2, 5]}
nlohmann::json parse_distribution(const std::string& text) {
  const auto open = text.find('('), comma = text.find(','), close = text.rfind(')');
  if (open == std::string::npos || comma == std::string::npos || close != text.size() - 1 || comma < open) {
    throw std::invalid_argument("expected name(a, b)");
  }
  double a = 0.0, b = 0.0;
  if (!parse_number(trim(std::string_view(text).substr(open + 1, comma - open - 1)), a) ||
      !parse_number(trim(std::string_view(text).substr(comma + 1, close - comma - 1)), b)) {
    throw std::invalid_argument("distribution parameters must be numbers");
  }
  return {{"name", trim(text.substr(0, open))}, {"params", {a, b}}};
}

// Converts `text` to the JSON type of the default value it replaces.
nlohmann::json convert_like(const nlohmann::json& current, const std::string& text) {
  if (current.is_boolean()) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw std::invalid_argument("expected true or false");
  }
  if (current.is_number_unsigned() || current.is_number_integer()) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) throw std::invalid_argument("expected an integer");
    return v;
  }
  if (current.is_number()) {
    double v = 0.0;
    if (!parse_number(text, v)) throw std::invalid_argument("expected a number");
    return v;
  }
  if (current.is_string()) return text;
  if (current.is_object() && current.contains("params")) return parse_distribution(text);
  throw std::invalid_argument("key is not settable");
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  model.validate();
  behavior.env.validate();
  if (model.action_scale != behavior.env.action_scale) {
    throw std::invalid_argument(fmt::format("model.action_scale ({}) must equal env.action_scale ({})",
                                            model.action_scale, behavior.env.action_scale));
  }
  if (behavior.num_episodes < 1) throw std::invalid_argument("behavior.num_episodes must be >= 1");
}

nlohmann::ordered_json to_json(const BehaviorConfig& c) {
  nlohmann::ordered_json j;
  j["num_episodes"] = c.num_episodes;
  j["perturb"] = c.perturb;
  j["perturb_low"] = c.perturb_low;
  j["perturb_high"] = c.perturb_high;
  j["budget_jitter_low"] = c.budget_jitter_low;
  j["budget_jitter_high"] = c.budget_jitter_high;
  j["coef_jitter_low"] = c.coef_jitter_low;
  j["coef_jitter_high"] = c.coef_jitter_high;
  j["seed"] = c.seed;
  j["pid"] = {{"kp", c.pid.kp},
              {"ki", c.pid.ki},
              {"kd", c.pid.kd},
              {"base_coef", c.pid.base_coef},
              {"min_coef", c.pid.min_coef},
              {"max_coef", c.pid.max_coef},
              {"integral_limit", c.pid.integral_limit}};
  j["env"] = env::to_json(c.env);
  return j;
}

BehaviorConfig behavior_config_from_json(const nlohmann::json& j) {
  BehaviorConfig c;
  c.num_episodes = j.value("num_episodes", c.num_episodes);
  c.perturb = j.value("perturb", c.perturb);
  c.perturb_low = j.value("perturb_low", c.perturb_low);
  c.perturb_high = j.value("perturb_high", c.perturb_high);
  c.budget_jitter_low = j.value("budget_jitter_low", c.budget_jitter_low);
  c.budget_jitter_high = j.value("budget_jitter_high", c.budget_jitter_high);
  c.coef_jitter_low = j.value("coef_jitter_low", c.coef_jitter_low);
  c.coef_jitter_high = j.value("coef_jitter_high", c.coef_jitter_high);
  c.seed = j.value("seed", c.seed);
  if (j.contains("pid")) {
    const auto& p = j["pid"];
    c.pid.kp = p.value("kp", c.pid.kp);
    c.pid.ki = p.value("ki", c.pid.ki);
    c.pid.kd = p.value("kd", c.pid.kd);
    c.pid.base_coef = p.value("base_coef", c.pid.base_coef);
    c.pid.min_coef = p.value("min_coef", c.pid.min_coef);
    c.pid.max_coef = p.value("max_coef", c.pid.max_coef);
    c.pid.integral_limit = p.value("integral_limit", c.pid.integral_limit);
  }
  if (j.contains("env")) c.env = env::episode_config_from_json(j["env"]);
  return c;
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["train"] = to_json(c.train);
  j["model"] = model::to_json(c.model);
  j["behavior"] = to_json(c.behavior);
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  c.train = train_config_from_json(j.at("train"));
  c.model = model::model_config_from_json(j.at("model"));
  c.behavior = behavior_config_from_json(j.at("behavior"));
  c.validate();
  return c;
}

RunConfig parse_run_config(std::istream& in, std::string_view source) {
  struct Entry {
    std::string key, value;
    std::size_t line;
  };
  std::vector<Entry> entries;
  std::map<std::string, std::size_t> seen;
  std::string profile = "desk";
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw std::invalid_argument(fmt::format("{}:{}: expected key = value", source, n));
    Entry e{trim(text.substr(0, eq)), trim(text.substr(eq + 1)), n};
    if (!seen.emplace(e.key, n).second) {
      throw std::invalid_argument(fmt::format("{}:{}: duplicate key '{}'", source, n, e.key));
    }
    if (e.key == "profile") {
      if (e.value != "desk" && e.value != "large") {
        throw std::invalid_argument(fmt::format("{}:{}: profile must be desk or large", source, n));
      }
      profile = e.value;
      continue;
    }
    entries.push_back(std::move(e));
  }

  RunConfig base;
  if (profile == "large") {
    base.train = TrainConfig::large();
    base.model = model::ModelConfig::large();
  }
  nlohmann::json tree = {{"train", to_json(base.train)},
                         {"model", model::to_json(base.model)},
                         {"behavior", to_json(base.behavior)}};
  for (const auto& e : entries) {
    const auto dot = e.key.find('.');
    const std::string section = dot == std::string::npos ? std::string{} : e.key.substr(0, dot);
    const std::string field = dot == std::string::npos ? e.key : e.key.substr(dot + 1);
    nlohmann::json* node = nullptr;
    if (section == "train" || section == "model" || section == "behavior") {
      node = &tree[section];
    } else if (section == "env" || section == "pid") {
      node = &tree["behavior"][section];
    } else {
      throw std::invalid_argument(fmt::format("{}:{}: unknown key '{}'", source, e.line, e.key));
    }
    if (!node->contains(field) || (section == "behavior" && (field == "env" || field == "pid"))) {
      throw std::invalid_argument(fmt::format("{}:{}: unknown key '{}'", source, e.line, e.key));
    }
    try {
      (*node)[field] = convert_like((*node)[field], e.value);
    } catch (const std::invalid_argument& err) {
      throw std::invalid_argument(fmt::format("{}:{}: {}: {}", source, e.line, e.key, err.what()));
    }
  }
  // The model's action ceiling follows the environment unless set explicitly.
  if (seen.count("env.action_scale") && !seen.count("model.action_scale")) {
    tree["model"]["action_scale"] = tree["behavior"]["env"]["action_scale"];
  }
  return run_config_from_json(tree);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return parse_run_config(in, path.string());
}

}  // namespace gradbid::train
