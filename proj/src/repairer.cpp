// SPDX-License-Identifier: Apache-2.0
#include "r4/repairer.hpp"

#include <algorithm>

namespace r4 {

bool is_material(const Issue& issue) { return issue.type != IssueType::System; }

bool has_material(const std::vector<Issue>& issues) {
  return std::any_of(issues.begin(), issues.end(), [](const Issue& i) { return is_material(i); });
}

RepairResult parse_repair_response(const std::string& response, const std::vector<BBox>& current_boxes) {
  Json parsed;
  try {
    parsed = extract_json(response);
  } catch (const Error& e) {
    throw Error(ErrorKind::RepairCallFailed, std::string("unparseable repair: ") + e.what());
  }
  if (!parsed.is_object()) throw Error(ErrorKind::RepairCallFailed, "repair response is not an object");
  auto report = parsed.find("report");
  if (report == parsed.end() || !report->is_string() ||
      report->get<std::string>().find_first_not_of(" \t\r\n") == std::string::npos)
    throw Error(ErrorKind::RepairCallFailed, "repair response has no report");

  RepairResult out;
  out.draft = report->get<std::string>();
  if (auto boxes = parsed.find("boxes"); boxes != parsed.end() && !boxes->is_null()) {
    auto detection = parse_boxes(*boxes);
    out.boxes = std::move(detection.boxes);
    out.warnings = std::move(detection.warnings);
    out.boxes_replaced = true;
  } else {
    out.boxes = current_boxes;
  }
  return out;
}

RepairResult repair(const CaseInput& c, const std::string& draft, const std::vector<BBox>& boxes,
                    const std::vector<Issue>& issues, const AgentContext& ctx, int pass_index,
                    int repair_iteration) {
  std::vector<Issue> material;
  std::copy_if(issues.begin(), issues.end(), std::back_inserter(material), is_material);

  std::string issue_lines;
  for (const auto& i : material) {
    issue_lines += "- [" + std::string(to_string(i.type)) + "]";
    if (!i.location.empty()) issue_lines += " at \"" + i.location + "\"";
    issue_lines += ": " + i.message;
    if (!i.proposed_fix.empty()) issue_lines += " (fix: " + i.proposed_fix + ")";
    issue_lines += "\n";
  }

  std::string response;
  try {
    const auto tmpl = ctx.templates.get(ctx.template_id(Role::Repairer));
    const auto prompt = build_prompt(tmpl, c, {},
                                     {{"draft", draft},
                                      {"boxes", boxes_to_json(boxes).dump()},
                                      {"issues", issue_lines},
                                      {"routing", to_json(ctx.routing).dump()},
                                      {"emphasis", emphasis_clauses(ctx.routing.flags)}});
    response = complete_with_retry(ctx.backend, ctx.request(Role::Repairer, c, pass_index, repair_iteration, prompt));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::RepairCallFailed) throw;
    throw Error(ErrorKind::RepairCallFailed, e.what());
  }
  return parse_repair_response(response, boxes);
}

namespace {

Json issues_event(int iteration, const std::vector<Issue>& issues) {
  return Json{{"iteration", iteration},
              {"issues", to_json(issues)},
              {"material", std::count_if(issues.begin(), issues.end(), is_material)}};
}

}  // namespace

LoopResult reflect_repair_loop(const CaseInput& c, const Draft& selected, const AgentContext& ctx, int max_repairs,
                               const std::optional<std::vector<Issue>>& initial_issues,
                               const ReflectOptions& reflect_options) {
  if (max_repairs < 0) throw Error(ErrorKind::InvalidConfig, "T must be >= 0");
  const int j = selected.pass_index;

  LoopResult result;
  auto& st = result.state;
  st.draft = selected.text;
  st.boxes = selected.boxes;
  st.issues = initial_issues ? *initial_issues : reflect(c, st.draft, st.boxes, ctx, j, 0, reflect_options);
  result.events.push_back({"reflection", issues_event(0, st.issues)});

  while (true) {
    if (!has_material(st.issues)) {
      st.stopped_early = true;
      break;
    }
    if (result.repairs >= max_repairs) break;

    RepairResult fixed;
    try {
      fixed = repair(c, st.draft, st.boxes, st.issues, ctx, j, result.repairs);
    } catch (const Error& e) {
      result.events.push_back({"warning", Json{{"stage", "repair"}, {"iteration", result.repairs}, {"message", e.what()}}});
      break;
    }
    Json ev{{"iteration", result.repairs + 1},
            {"report_changed", fixed.draft != st.draft},
            {"boxes_replaced", fixed.boxes_replaced},
            {"boxes_before", st.boxes.size()},
            {"boxes_after", fixed.boxes.size()},
            {"report", fixed.draft}};
    if (!fixed.warnings.empty()) ev["warnings"] = fixed.warnings;
    result.events.push_back({"repair", std::move(ev)});

    st.draft = std::move(fixed.draft);
    st.boxes = std::move(fixed.boxes);
    st.iteration = ++result.repairs;
    if (result.repairs >= max_repairs) break;

    st.issues = reflect(c, st.draft, st.boxes, ctx, j, result.repairs, reflect_options);
    result.events.push_back({"reflection", issues_event(result.repairs, st.issues)});
  }
  return result;
}

}  // namespace r4
