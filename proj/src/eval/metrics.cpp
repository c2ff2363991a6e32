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


#include "gradbid/eval/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace gradbid::eval {

void ConstraintSpec::validate() const {
  if (!(limit > 0) || !std::isfinite(limit)) throw std::invalid_argument("constraint limit must be positive");
  if (!(beta > 0) || !std::isfinite(beta)) throw std::invalid_argument("constraint beta must be positive");
}

namespace {

double parse_number(std::string_view s, std::string_view whole) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw std::invalid_argument(fmt::format("malformed constraint '{}'", whole));
  }
  return v;
}

}  // namespace

ConstraintSpec parse_constraint(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw std::invalid_argument(fmt::format("malformed constraint '{}'", text));
  ConstraintSpec c;
  const auto kind = text.substr(0, colon);
  if (kind == "cpc") {
    c.kind = ConstraintKind::kCpc;
  } else if (kind == "cpa") {
    c.kind = ConstraintKind::kCpa;
  } else {
    throw std::invalid_argument(fmt::format("unknown constraint kind '{}'", kind));
  }
  auto rest = text.substr(colon + 1);
  const auto second = rest.find(':');
  c.limit = parse_number(rest.substr(0, second), text);
  if (second != std::string_view::npos) c.beta = parse_number(rest.substr(second + 1), text);
  c.validate();
  return c;
}

std::string to_string(const ConstraintSpec& c) {
  return fmt::format("{}:{}:{}", c.kind == ConstraintKind::kCpc ? "cpc" : "cpa", c.limit, c.beta);
}

EpisodeSummary summarize(const env::EpisodeResult& r) {
  const auto clicks = static_cast<double>(r.total_clicks);
  return {r.total_value, r.total_cost, clicks, clicks};
}

EpisodeSummary summarize(const env::Trajectory& t) {
  const auto tot = env::totals_of(t);
  const auto clicks = static_cast<double>(tot.total_clicks);
  return {tot.total_value, tot.total_cost, clicks, clicks};
}

double realized_ratio(double cost, double outcomes) {
  if (cost <= 0.0) return 0.0;
  return cost / std::max(outcomes, 1.0);
}

double penalty(const ConstraintSpec& c, double cost, double outcomes) {
  const double ratio = realized_ratio(cost, outcomes);
  if (ratio <= 0.0) return 1.0;
  return std::min(std::pow(c.limit / ratio, c.beta), 1.0);
}

ScoreReport score(std::span<const EpisodeSummary> episodes, std::span<const ConstraintSpec> constraints) {
  if (episodes.empty()) throw std::invalid_argument("score: no episodes");
  if (constraints.empty()) throw std::invalid_argument("score: no constraints");
  ScoreReport rep;
  rep.episodes = episodes.size();
  for (const auto& e : episodes) {
    rep.total_value += e.value;
    rep.total_cost += e.cost;
  }
  double worst = 1.0;
  for (const auto& c : constraints) {
    c.validate();
    double outcomes = 0.0;
    for (const auto& e : episodes) outcomes += e.outcomes(c.kind);
    rep.ratios.push_back(realized_ratio(rep.total_cost, outcomes));
    rep.penalties.push_back(penalty(c, rep.total_cost, outcomes));
    worst = std::min(worst, rep.penalties.back());
  }
  rep.score = rep.total_value * worst;
  return rep;
}

ScoreReport score(const EpisodeSummary& episode, std::span<const ConstraintSpec> constraints) {
  return score(std::span<const EpisodeSummary>(&episode, 1), constraints);
}

double cpc_cr(std::span<const double> daily_cpcs, double c_target, double gamma_tol) {
  if (daily_cpcs.empty()) throw std::invalid_argument("cpc_cr: no days");
  if (!(c_target > 0)) throw std::invalid_argument("cpc_cr: target must be positive");
  const double bound = gamma_tol * c_target;
  const auto ok = std::count_if(daily_cpcs.begin(), daily_cpcs.end(), [&](double c) { return c <= bound; });
  return 100.0 * static_cast<double>(ok) / static_cast<double>(daily_cpcs.size());
}

double online_reward(double ctr, double cpc, double theta, double p_max, bool active) {
  if (!(theta > 0)) throw std::invalid_argument("online_reward: theta must be positive");
  const double engagement = std::log1p(1000.0 * ctr);
  if (!active) return engagement;
  const double excess = (cpc - theta) / theta;
  return engagement - std::min(p_max, excess * excess * excess);
}

double exceed_rate(std::span<const EpisodeSummary> episodes, const ConstraintSpec& c) {
  if (episodes.empty()) return 0.0;
  const auto n = std::count_if(episodes.begin(), episodes.end(), [&](const EpisodeSummary& e) {
    return realized_ratio(e.cost, e.outcomes(c.kind)) > c.limit;
  });
  return static_cast<double>(n) / static_cast<double>(episodes.size());
}

}  // namespace gradbid::eval
