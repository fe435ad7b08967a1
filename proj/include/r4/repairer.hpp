// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "r4/agents.hpp"
#include "r4/reflector.hpp"
#include "r4/retriever.hpp"

namespace r4 {

/// Anything other than system or parsing noise.
bool is_material(const Issue& issue);
bool has_material(const std::vector<Issue>& issues);

struct RepairResult {
  std::string draft;
  std::vector<BBox> boxes;
  bool boxes_replaced = false;
  std::vector<std::string> warnings;
};

/// Parses a {"report", "boxes"?} repair response. Throws Error(RepairCallFailed)
/// when no usable report is present.
RepairResult parse_repair_response(const std::string& response, const std::vector<BBox>& current_boxes);

/// One repairer-role call over the material issues. Throws Error(RepairCallFailed).
RepairResult repair(const CaseInput& c, const std::string& draft, const std::vector<BBox>& boxes,
                    const std::vector<Issue>& issues, const AgentContext& ctx, int pass_index,
                    int repair_iteration);

struct RepairState {
  int iteration = 0;
  std::string draft;
  std::vector<BBox> boxes;
  std::vector<Issue> issues;
  bool stopped_early = false;
};

struct LoopResult {
  RepairState state;
  int repairs = 0;
  Trace events;
};

/// Reflect, and while material issues remain and fewer than max_repairs
/// repairs have run, repair. No reflection follows the last permitted
/// repair. `initial_issues`, when given, stands in for the first reflection.
LoopResult reflect_repair_loop(const CaseInput& c, const Draft& selected, const AgentContext& ctx,
                               int max_repairs, const std::optional<std::vector<Issue>>& initial_issues = std::nullopt,
                               const ReflectOptions& reflect_options = {});

}  // namespace r4
