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


#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gradbid/env/auction.hpp"

namespace gradbid::eval {

enum class ConstraintKind { kCpa, kCpc };

struct ConstraintSpec {
  ConstraintKind kind = ConstraintKind::kCpc;
  double limit = 0.9;
  double beta = 2.0;

  void validate() const;
};

// Parses "cpc:<limit>" or "cpa:<limit>", optionally followed by ":<beta>".
ConstraintSpec parse_constraint(std::string_view text);
std::string to_string(const ConstraintSpec& c);

// What scoring needs from one episode. The synthetic environment has no
// conversion model, so its conversions are its clicks.
struct EpisodeSummary {
  double value = 0.0;
  double cost = 0.0;
  double clicks = 0.0;
  double conversions = 0.0;

  // Click count for CPC, conversion count for CPA.
  double outcomes(ConstraintKind kind) const { return kind == ConstraintKind::kCpc ? clicks : conversions; }
};

EpisodeSummary summarize(const env::EpisodeResult& r);
EpisodeSummary summarize(const env::Trajectory& t);

// Cost per outcome with the outcome count floored at 1; 0 when nothing was spent.
double realized_ratio(double cost, double outcomes);
// min((limit / ratio)^beta, 1), and 1 when nothing was spent.
double penalty(const ConstraintSpec& c, double cost, double outcomes);

struct ScoreReport {
  double total_value = 0.0;
  double total_cost = 0.0;
  std::vector<double> penalties;
  std::vector<double> ratios;
  double score = 0.0;
  std::size_t episodes = 0;
};

// Pools the episodes, then applies every constraint to the pooled sums.
// Throws on an empty input or an empty constraint list.
ScoreReport score(std::span<const EpisodeSummary> episodes, std::span<const ConstraintSpec> constraints);
ScoreReport score(const EpisodeSummary& episode, std::span<const ConstraintSpec> constraints);

// Percentage of days whose CPC is at most gamma_tol * c_target.
double cpc_cr(std::span<const double> daily_cpcs, double c_target, double gamma_tol = 1.2);

// log(1 + 1000 ctr) - [active] * min(p_max, ((cpc - theta) / theta)^3).
double online_reward(double ctr, double cpc, double theta, double p_max, bool active);

// Share of episodes whose realized ratio exceeds the limit.
double exceed_rate(std::span<const EpisodeSummary> episodes, const ConstraintSpec& c);

}  // namespace gradbid::eval
