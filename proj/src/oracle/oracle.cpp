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

#include "gradbid/oracle/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace gradbid::oracle {

void BiddingInstance::validate() const {
  if (!(budget >= 0) || !std::isfinite(budget)) throw std::invalid_argument("budget must be a nonnegative number");
  if (cpc_limit && !(*cpc_limit > 0)) throw std::invalid_argument("cpc_limit must be positive");
  for (const auto& im : impressions) {
    if (!(im.value >= 0) || !(im.cost >= 0) || !std::isfinite(im.value) || !std::isfinite(im.cost)) {
      throw std::invalid_argument("impression value and cost must be finite and nonnegative");
    }
    if (!(im.pctr >= 0 && im.pctr <= 1)) throw std::invalid_argument("pctr must lie in [0, 1]");
  }
}

namespace {

struct Totals {
  double value = 0.0, cost = 0.0, clicks = 0.0;
};

// Sums in index order so every caller gets bit-identical totals.
Totals totals_of(const BiddingInstance& inst, std::uint32_t mask) {
  Totals t;
  for (std::size_t i = 0; i < inst.impressions.size(); ++i) {
    if (mask >> i & 1u) {
      t.value += inst.impressions[i].value;
      t.cost += inst.impressions[i].cost;
      t.clicks += inst.impressions[i].pctr;
    }
  }
  return t;
}

Totals totals_of(const BiddingInstance& inst, const std::vector<bool>& sel) {
  Totals t;
  for (std::size_t i = 0; i < inst.impressions.size(); ++i) {
    if (sel[i]) {
      t.value += inst.impressions[i].value;
      t.cost += inst.impressions[i].cost;
      t.clicks += inst.impressions[i].pctr;
    }
  }
  return t;
}

bool feasible(const BiddingInstance& inst, const Totals& t) {
  if (t.cost > inst.budget) return false;
  if (inst.cpc_limit && t.clicks > 0.0 && t.cost / t.clicks > *inst.cpc_limit) return false;
  return true;
}

// Lexicographic order on selections with false < true: the smaller mask
// is the one whose lowest differing bit is clear.
bool lex_less(std::uint32_t a, std::uint32_t b) {
  const std::uint32_t diff = a ^ b;
  if (diff == 0) return false;
  return (a & (diff & (~diff + 1u))) == 0;
}

std::vector<bool> to_selection(std::uint32_t mask, std::size_t n) {
  std::vector<bool> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = mask >> i & 1u;
  return s;
}

double ratio(const Impression& im) {
  if (im.cost == 0.0) return im.value > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return im.value / im.cost;
}

}  // namespace

bool is_feasible(const BiddingInstance& inst, const std::vector<bool>& selection) {
  if (selection.size() != inst.impressions.size()) return false;
  return feasible(inst, totals_of(inst, selection));
}

OracleSolution solve_bruteforce(const BiddingInstance& inst) {
  if (inst.impressions.size() > kMaxBruteForceItems) {
    throw std::invalid_argument("instance too large for brute force");
  }
  inst.validate();
  const std::size_t n = inst.impressions.size();
  const std::uint32_t end = 1u << n;
  std::uint32_t best = 0;
  Totals best_t = totals_of(inst, 0u);
  for (std::uint32_t mask = 1; mask < end; ++mask) {
    const Totals t = totals_of(inst, mask);
    if (!feasible(inst, t)) continue;
    const bool better = t.value > best_t.value ||
                        (t.value == best_t.value &&
                         (t.cost < best_t.cost || (t.cost == best_t.cost && lex_less(mask, best))));
    if (better) {
      best = mask;
      best_t = t;
    }
  }
  OracleSolution sol;
  sol.selection = to_selection(best, n);
  sol.total_value = best_t.value;
  sol.total_cost = best_t.cost;
  return sol;
}

bool has_unique_optimum(const BiddingInstance& inst) {
  const OracleSolution opt = solve_bruteforce(inst);
  const std::size_t n = inst.impressions.size();
  std::uint32_t opt_mask = 0;
  for (std::size_t i = 0; i < n; ++i) opt_mask |= static_cast<std::uint32_t>(opt.selection[i]) << i;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (mask == opt_mask) continue;
    const Totals t = totals_of(inst, mask);
    if (feasible(inst, t) && t.value == opt.total_value) return false;
  }
  return true;
}

OracleSolution solve_threshold(const BiddingInstance& inst) {
  if (inst.cpc_limit) throw std::invalid_argument("solve_threshold requires a budget-only instance");
  inst.validate();
  const std::size_t n = inst.impressions.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ratio(inst.impressions[a]) > ratio(inst.impressions[b]);
  });

  OracleSolution sol;
  sol.selection.assign(n, false);
  double remaining = inst.budget;
  double lp = 0.0;
  bool lp_open = true;
  for (std::size_t i : order) {
    const auto& im = inst.impressions[i];
    if (im.value == 0.0) continue;
    if (lp_open) {
      if (im.cost <= remaining) {
        lp += im.value;
      } else {
        lp += im.value * (remaining / im.cost);
        lp_open = false;
        sol.critical_ratio = ratio(im);
      }
    }
    if (im.cost <= remaining) {
      sol.selection[i] = true;
      remaining -= im.cost;
    }
  }
  const Totals t = totals_of(inst, sol.selection);
  sol.total_value = t.value;
  sol.total_cost = t.cost;
  sol.lp_relaxation_value = lp;
  if (sol.critical_ratio && *sol.critical_ratio > 0.0 && std::isfinite(*sol.critical_ratio)) {
    sol.dual_coefficients = std::make_pair(1.0 / *sol.critical_ratio, std::optional<double>{});
  }
  return sol;
}

bool certify_closed_form(const BiddingInstance& inst, const OracleSolution& solution) {
  const std::size_t n = inst.impressions.size();
  if (solution.selection.size() != n) return false;
  // The rule's selection only changes where lambda crosses some c_i / v_i,
  // so probing one lambda inside every gap between consecutive breakpoints
  // (and beyond both ends) covers every achievable selection.
  std::vector<double> breaks;
  for (const auto& im : inst.impressions) {
    if (im.value > 0.0) breaks.push_back(im.cost / im.value);
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  std::vector<double> probes;
  if (breaks.empty()) {
    probes.push_back(1.0);
  } else {
    probes.push_back(breaks.front() > 0.0 ? breaks.front() / 2.0 : 0.0);
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) probes.push_back(0.5 * (breaks[i] + breaks[i + 1]));
    probes.push_back(breaks.back() * 2.0 + 1.0);
  }
  for (double lambda : probes) {
    if (!(lambda > 0.0)) continue;
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < n && mismatches <= 1; ++i) {
      const auto& im = inst.impressions[i];
      const bool pick = lambda * im.value > im.cost;
      mismatches += pick != solution.selection[i];
    }
    if (mismatches <= 1) return true;
  }
  return false;
}

BiddingInstance sample_budget_instance(Rng& rng, std::size_t max_items) {
  std::uniform_int_distribution<std::size_t> count(1, max_items);
  std::uniform_real_distribution<double> u01(0.0, 1.0), cost(0.05, 1.0), share(0.2, 0.8);
  BiddingInstance inst;
  inst.impressions.resize(count(rng));
  double total = 0.0;
  for (auto& im : inst.impressions) {
    im.value = u01(rng);
    im.cost = cost(rng);
    im.pctr = u01(rng);
    total += im.cost;
  }
  inst.budget = share(rng) * total;
  return inst;
}

BiddingInstance instance_from_json(const nlohmann::json& j) {
  BiddingInstance inst;
  inst.budget = j.at("budget").get<double>();
  if (j.contains("cpc_limit") && !j["cpc_limit"].is_null()) inst.cpc_limit = j["cpc_limit"].get<double>();
  for (const auto& e : j.at("impressions")) {
    Impression im;
    im.value = e.at("value").get<double>();
    im.cost = e.at("cost").get<double>();
    im.pctr = e.value("pctr", 0.0);
    inst.impressions.push_back(im);
  }
  inst.validate();
  return inst;
}

nlohmann::ordered_json to_json(const BiddingInstance& inst) {
  nlohmann::ordered_json j;
  j["budget"] = inst.budget;
  j["cpc_limit"] = inst.cpc_limit ? nlohmann::ordered_json(*inst.cpc_limit) : nlohmann::ordered_json(nullptr);
  auto arr = nlohmann::ordered_json::array();
  for (const auto& im : inst.impressions) {
    arr.push_back({{"value", im.value}, {"pctr", im.pctr}, {"cost", im.cost}});
  }
  j["impressions"] = std::move(arr);
  return j;
}

nlohmann::ordered_json to_json(const OracleSolution& sol) {
  nlohmann::ordered_json j;
  auto sel = nlohmann::ordered_json::array();
  for (bool b : sol.selection) sel.push_back(b);
  j["selection"] = std::move(sel);
  j["total_value"] = sol.total_value;
  j["total_cost"] = sol.total_cost;
  if (sol.dual_coefficients) {
    j["dual_coefficients"] = {
        {"lambda0", sol.dual_coefficients->first},
        {"lambda1", sol.dual_coefficients->second ? nlohmann::ordered_json(*sol.dual_coefficients->second)
                                                  : nlohmann::ordered_json(nullptr)}};
  } else {
    j["dual_coefficients"] = nullptr;
  }
  if (sol.critical_ratio) j["critical_ratio"] = *sol.critical_ratio;
  if (sol.lp_relaxation_value) j["lp_relaxation_value"] = *sol.lp_relaxation_value;
  return j;
}

}  // namespace gradbid::oracle
