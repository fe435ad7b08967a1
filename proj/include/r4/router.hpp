// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "r4/backend.hpp"
#include "r4/domain.hpp"

namespace r4 {

enum class Flag { StrictSafety, RequireBboxes, Longitudinal };

std::string_view to_string(Flag flag);
std::optional<Flag> parse_flag(std::string_view text);

enum class RoutingSource { Heuristic, ModelRefined };

std::string_view to_string(RoutingSource source);

inline const std::vector<std::string>& default_specializations() {
  static const std::vector<std::string> kSpecs{"chest_radiology", "oncology_followup",
                                               "cardiovascular_risk", "general"};
  return kSpecs;
}

struct RoutingDecision {
  std::string specialization;
  Mode mode = Mode::Cot;
  std::set<Flag> flags;
  RoutingSource source = RoutingSource::Heuristic;

  bool operator==(const RoutingDecision&) const = default;
};

Json to_json(const RoutingDecision& decision);

/// Conjunction of metadata equalities (case-insensitive) and history
/// substring tests (case-insensitive, any history fact). Empty predicate
/// matches everything.
struct RoutingRule {
  std::vector<std::pair<std::string, std::string>> metadata_equals;
  std::vector<std::string> history_contains;
  RoutingDecision decision;
  int priority = 0;

  bool matches(const CaseInput& c) const;
  bool is_catch_all() const { return metadata_equals.empty() && history_contains.empty(); }
};

/// Sorted by priority, unique priorities, last rule a catch-all.
class RuleTable {
 public:
  explicit RuleTable(std::vector<RoutingRule> rules);

  /// Shipped defaults: CT + oncology history, cardiac history terms, CXR,
  /// then a general catch-all.
  static RuleTable defaults();
  static RuleTable from_json(const Json& j, const std::vector<std::string>& specializations);
  static RuleTable from_file(const std::filesystem::path& path,
                             const std::vector<std::string>& specializations);

  const std::vector<RoutingRule>& rules() const { return rules_; }
  Json to_json() const;

 private:
  std::vector<RoutingRule> rules_;
};

RoutingDecision heuristic_route(const CaseInput& c, const RuleTable& rules);

struct RouterOptions {
  bool refinement_enabled = false;
  std::vector<std::string> specializations = default_specializations();
  double temperature = 0.0;
  std::int64_t seed = 0;
  int max_output = 256;
};

struct RouteResult {
  RoutingDecision decision;
  /// Why refinement fell back, if it did.
  std::optional<std::string> fallback_reason;
};

/// Heuristic route, optionally refined by one router-role call. Never throws
/// on model failure; falls back to the heuristic decision.
RouteResult route(const CaseInput& c, Backend* backend, const RuleTable& rules,
                  const RouterOptions& options);

/// Task for memory and template lookup: the case's task_hint if set,
/// otherwise longitudinal follow-up when the flag is set, else CXR reporting.
std::string resolve_task(const CaseInput& c, const RoutingDecision& decision);

}  // namespace r4
