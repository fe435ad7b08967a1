// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "r4/agents.hpp"

namespace r4 {

enum class IssueType { Negation, Laterality, Unsupported, Contradiction, Missing, Localization, System };

inline constexpr std::array<IssueType, 7> kAllIssueTypes{
    IssueType::Negation,      IssueType::Laterality, IssueType::Unsupported, IssueType::Contradiction,
    IssueType::Missing,       IssueType::Localization, IssueType::System};

std::string_view to_string(IssueType type);
std::optional<IssueType> parse_issue_type(std::string_view text);

struct Issue {
  IssueType type = IssueType::System;
  std::string location;
  std::string message;
  std::string proposed_fix;

  bool operator==(const Issue&) const = default;
};

/// Wire form {"type", "location", "message", "fix"}.
Json to_json(const Issue& issue);
Json to_json(const std::vector<Issue>& issues);

/// Validates a parsed reflector response. Unknown types become system issues
/// naming the original type; records without a message are dropped.
/// Throws Error(NotAnArray).
std::vector<Issue> validate_issues(const Json& parsed);

/// Prompt clause for each routing flag.
std::string emphasis_clauses(const std::set<Flag>& flags);

struct ReflectOptions {
  /// Show the boxes to the reflector during pass@k scoring too.
  bool include_boxes = true;
};

/// One reflector-role call. Never throws: unparseable or failed calls yield
/// a single system issue.
std::vector<Issue> reflect(const CaseInput& c, const std::string& draft_text, const std::vector<BBox>& boxes,
                           const AgentContext& ctx, int pass_index, int repair_iteration,
                           const ReflectOptions& options = {});

}  // namespace r4
