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

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradbid/util/rng.hpp"

namespace gradbid::oracle {

struct Impression {
  double value = 0.0;
  double pctr = 0.0;
  double cost = 0.0;  // charge if won
};

struct BiddingInstance {
  std::vector<Impression> impressions;
  double budget = 0.0;
  std::optional<double> cpc_limit;

  void validate() const;
};

struct OracleSolution {
  std::vector<bool> selection;
  double total_value = 0.0;
  double total_cost = 0.0;
  // (lambda0, lambda1); lambda1 is unset for budget-only instances.
  std::optional<std::pair<double, std::optional<double>>> dual_coefficients;
  // Greedy only: value/cost ratio of the first item the budget could not
  // fully absorb, and the fractional-knapsack optimum (an upper bound on
  // any integral selection).
  std::optional<double> critical_ratio;
  std::optional<double> lp_relaxation_value;
};

inline constexpr std::size_t kMaxBruteForceItems = 24;

// Exhaustive search. Ties: higher value, then lower cost, then the
// lexicographically smallest selection (false < true at the first
// differing index). Throws "instance too large for brute force" above 24.
OracleSolution solve_bruteforce(const BiddingInstance& inst);

// Greedy by value/cost ratio (descending, stable by index), skipping items
// that no longer fit and continuing. Zero-cost items with positive value
// come first; zero-value items are never taken. Budget-only instances.
OracleSolution solve_threshold(const BiddingInstance& inst);

// True iff some lambda > 0 makes the rule "select iff lambda * v > c"
// differ from `solution` in at most one impression.
bool certify_closed_form(const BiddingInstance& inst, const OracleSolution& solution);

// True iff no other feasible selection reaches the optimal value.
bool has_unique_optimum(const BiddingInstance& inst);

bool is_feasible(const BiddingInstance& inst, const std::vector<bool>& selection);

// Random budget-only instance: I ~ U{1..max_items}, v ~ U(0,1),
// c ~ U(0.05,1), pctr ~ U(0,1), budget ~ U(0.2,0.8) * sum(c).
BiddingInstance sample_budget_instance(Rng& rng, std::size_t max_items);

BiddingInstance instance_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const BiddingInstance& inst);
nlohmann::ordered_json to_json(const OracleSolution& sol);

}  // namespace gradbid::oracle
