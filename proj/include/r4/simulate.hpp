// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "r4/scoring.hpp"

namespace r4 {

/// Per-pass occurrence probability of each issue type; every candidate draws
/// each type independently.
struct ErrorModel {
  std::map<IssueType, double> probability;

  /// JSON object {issue_type: probability}. Throws Error(InvalidConfig).
  static ErrorModel from_json(const Json& j);
  static ErrorModel load(const std::filesystem::path& path);
};

struct SimulationOptions {
  int k_max = 3;
  int trials = 10000;
  std::uint64_t seed = 0;
};

struct SimulationRow {
  int k = 0;
  double mean_best_score = 0.0;
  /// Share of trials whose selected candidate carries no localization issue.
  double localization_hit_rate = 0.0;
};

/// Monte-Carlo pass@k: each trial draws k_max candidates and, for every
/// k <= k_max, selects among the first k. Throws Error(InvalidConfig).
std::vector<SimulationRow> simulate_pass_at_k(const ErrorModel& model, const WeightTable& weights,
                                              const SimulationOptions& options);

std::string simulation_csv(const std::vector<SimulationRow>& rows);

}  // namespace r4
