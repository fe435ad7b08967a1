// SPDX-License-Identifier: Apache-2.0
#include "r4/reflector.hpp"

namespace r4 {

std::string_view to_string(IssueType type) {
  switch (type) {
    case IssueType::Negation: return "negation";
    case IssueType::Laterality: return "laterality";
    case IssueType::Unsupported: return "unsupported";
    case IssueType::Contradiction: return "contradiction";
    case IssueType::Missing: return "missing";
    case IssueType::Localization: return "localization";
    case IssueType::System: return "system";
  }
  return "system";
}

std::optional<IssueType> parse_issue_type(std::string_view text) {
  const auto lowered = to_lower(text);
  for (auto t : kAllIssueTypes)
    if (to_string(t) == lowered) return t;
  return std::nullopt;
}

Json to_json(const Issue& issue) {
  return Json{{"type", to_string(issue.type)},
              {"location", issue.location},
              {"message", issue.message},
              {"fix", issue.proposed_fix}};
}

Json to_json(const std::vector<Issue>& issues) {
  Json arr = Json::array();
  for (const auto& i : issues) arr.push_back(to_json(i));
  return arr;
}

namespace {

std::string text_field(const Json& rec, std::initializer_list<const char*> keys) {
  for (const char* key : keys) {
    auto it = rec.find(key);
    if (it == rec.end() || it->is_null()) continue;
    return it->is_string() ? it->get<std::string>() : it->dump();
  }
  return {};
}

}  // namespace

std::vector<Issue> validate_issues(const Json& parsed) {
  if (!parsed.is_array()) throw Error(ErrorKind::NotAnArray, "reflection must be a JSON list");
  std::vector<Issue> issues;
  for (const auto& rec : parsed) {
    if (!rec.is_object()) continue;
    Issue issue;
    issue.message = text_field(rec, {"message"});
    if (issue.message.empty()) continue;
    issue.location = text_field(rec, {"location"});
    issue.proposed_fix = text_field(rec, {"fix", "proposed_fix"});
    const auto raw_type = text_field(rec, {"type", "issue_type"});
    if (auto t = parse_issue_type(raw_type)) {
      issue.type = *t;
    } else {
      issue.type = IssueType::System;
      issue.message = "[original type: " + (raw_type.empty() ? std::string("<none>") : raw_type) + "] " +
                      issue.message;
    }
    issues.push_back(std::move(issue));
  }
  return issues;
}

std::string emphasis_clauses(const std::set<Flag>& flags) {
  std::string out;
  if (flags.count(Flag::StrictSafety))
    out += "Apply strict safety review: treat any claim not visible in the image as unsupported, and "
           "check every negated finding.\n";
  if (flags.count(Flag::RequireBboxes))
    out += "Every abnormal finding needs a well-aligned box; report missing, spurious or misaligned "
           "boxes as localization issues.\n";
  if (flags.count(Flag::Longitudinal))
    out += "Check that comparisons with prior studies are explicit and consistent.\n";
  return out;
}

std::vector<Issue> reflect(const CaseInput& c, const std::string& draft_text, const std::vector<BBox>& boxes,
                           const AgentContext& ctx, int pass_index, int repair_iteration,
                           const ReflectOptions& options) {
  if (draft_text.empty()) return {Issue{IssueType::System, "", "empty draft", ""}};
  std::string response;
  try {
    const auto tmpl = ctx.templates.get(ctx.template_id(Role::Reflector));
    const auto prompt =
        build_prompt(tmpl, c, {},
                     {{"draft", draft_text},
                      {"boxes", options.include_boxes ? boxes_to_json(boxes).dump() : std::string("(not shown)")},
                      {"emphasis", emphasis_clauses(ctx.routing.flags)}});
    response = complete_with_retry(ctx.backend, ctx.request(Role::Reflector, c, pass_index, repair_iteration, prompt));
  } catch (const Error& e) {
    return {Issue{IssueType::System, "", std::string("reflection call failed: ") + e.what(), ""}};
  }
  try {
    return validate_issues(extract_json(response));
  } catch (const Error&) {
    return {Issue{IssueType::System, "", "unparseable reflection", ""}};
  }
}

}  // namespace r4
