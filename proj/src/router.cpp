// SPDX-License-Identifier: Apache-2.0
#include "r4/router.hpp"

#include <algorithm>

namespace r4 {

std::string_view to_string(Flag flag) {
  switch (flag) {
    case Flag::StrictSafety: return "strict_safety";
    case Flag::RequireBboxes: return "require_bboxes";
    case Flag::Longitudinal: return "longitudinal";
  }
  return "require_bboxes";
}

std::optional<Flag> parse_flag(std::string_view text) {
  for (auto f : {Flag::StrictSafety, Flag::RequireBboxes, Flag::Longitudinal})
    if (to_string(f) == text) return f;
  return std::nullopt;
}

std::string_view to_string(RoutingSource source) {
  return source == RoutingSource::Heuristic ? "heuristic" : "model_refined";
}

Json to_json(const RoutingDecision& d) {
  Json flags = Json::array();
  for (auto f : d.flags) flags.push_back(to_string(f));
  return Json{{"specialization", d.specialization},
              {"mode", to_string(d.mode)},
              {"flags", flags},
              {"source", to_string(d.source)}};
}

bool RoutingRule::matches(const CaseInput& c) const {
  for (const auto& [key, expected] : metadata_equals)
    if (to_lower(c.meta(key)) != to_lower(expected)) return false;
  for (const auto& needle : history_contains) {
    const auto lowered = to_lower(needle);
    const bool hit = std::any_of(c.history.begin(), c.history.end(), [&](const std::string& fact) {
      return to_lower(fact).find(lowered) != std::string::npos;
    });
    if (!hit) return false;
  }
  return true;
}

RuleTable::RuleTable(std::vector<RoutingRule> rules) : rules_(std::move(rules)) {
  if (rules_.empty()) throw Error(ErrorKind::InvalidConfig, "routing rule table is empty");
  std::stable_sort(rules_.begin(), rules_.end(),
                   [](const RoutingRule& a, const RoutingRule& b) { return a.priority < b.priority; });
  for (std::size_t i = 1; i < rules_.size(); ++i)
    if (rules_[i].priority == rules_[i - 1].priority)
      throw Error(ErrorKind::InvalidConfig,
                  "duplicate routing priority " + std::to_string(rules_[i].priority));
  if (!rules_.back().is_catch_all())
    throw Error(ErrorKind::InvalidConfig, "routing rule table must end with a catch-all rule");
}

RuleTable RuleTable::defaults() {
  auto decision = [](std::string spec, std::set<Flag> flags) {
    flags.insert(Flag::RequireBboxes);
    return RoutingDecision{std::move(spec), Mode::Cot, std::move(flags), RoutingSource::Heuristic};
  };
  std::vector<RoutingRule> rules;
  rules.push_back({{{"modality", "CT"}}, {"oncology"}, decision("oncology_followup", {Flag::Longitudinal}), 10});
  int priority = 20;
  for (const char* term : {"cardiac", "heart failure", "coronary", "myocardial", "hypertension"})
    rules.push_back({{}, {term}, decision("cardiovascular_risk", {}), priority++});
  rules.push_back({{{"modality", "CXR"}}, {}, decision("chest_radiology", {}), 30});
  rules.push_back({{{"modality", "DX"}}, {}, decision("chest_radiology", {}), 31});
  rules.push_back({{}, {}, decision("general", {}), 1000});
  return RuleTable(std::move(rules));
}

namespace {

RoutingDecision decision_from_json(const Json& j, const std::vector<std::string>& specs) {
  RoutingDecision d;
  d.specialization = j.at("specialization").get<std::string>();
  if (std::find(specs.begin(), specs.end(), d.specialization) == specs.end())
    throw Error(ErrorKind::InvalidConfig, "unknown specialization " + d.specialization);
  auto mode = parse_mode(j.value("mode", std::string("cot")));
  if (!mode) throw Error(ErrorKind::InvalidConfig, "unknown mode in routing rule");
  d.mode = *mode;
  const auto flags = j.value("flags", Json::array());
  for (const auto& f : flags) {
    auto flag = parse_flag(f.get<std::string>());
    if (!flag) throw Error(ErrorKind::InvalidConfig, "unknown flag " + f.get<std::string>());
    d.flags.insert(*flag);
  }
  return d;
}

}  // namespace

RuleTable RuleTable::from_json(const Json& j, const std::vector<std::string>& specs) {
  if (!j.is_array()) throw Error(ErrorKind::InvalidConfig, "rule table must be a JSON array");
  std::vector<RoutingRule> rules;
  try {
    for (const auto& r : j) {
      RoutingRule rule;
      rule.priority = r.at("priority").get<int>();
      const auto metadata = r.value("metadata", Json::object());
      for (const auto& [k, v] : metadata.items()) rule.metadata_equals.emplace_back(k, v.get<std::string>());
      const auto history = r.value("history_contains", Json::array());
      for (const auto& h : history)
        rule.history_contains.push_back(h.get<std::string>());
      rule.decision = decision_from_json(r.at("decision"), specs);
      rules.push_back(std::move(rule));
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("routing rule: ") + e.what());
  }
  return RuleTable(std::move(rules));
}

RuleTable RuleTable::from_file(const std::filesystem::path& path, const std::vector<std::string>& specs) {
  try {
    return from_json(Json::parse(read_file(path)), specs);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
}

Json RuleTable::to_json() const {
  Json arr = Json::array();
  for (const auto& r : rules_) {
    Json meta = Json::object();
    for (const auto& [k, v] : r.metadata_equals) meta[k] = v;
    auto d = r4::to_json(r.decision);
    d.erase("source");
    arr.push_back(Json{{"priority", r.priority},
                       {"metadata", meta},
                       {"history_contains", r.history_contains},
                       {"decision", d}});
  }
  return arr;
}

RoutingDecision heuristic_route(const CaseInput& c, const RuleTable& rules) {
  for (const auto& rule : rules.rules()) {
    if (!rule.matches(c)) continue;
    auto d = rule.decision;
    if (c.mode_hint) d.mode = *c.mode_hint;
    d.source = RoutingSource::Heuristic;
    return d;
  }
  // Unreachable: the table always ends with a catch-all.
  throw Error(ErrorKind::InvalidConfig, "no routing rule matched");
}

namespace {

std::string router_prompt(const CaseInput& c, const RoutingDecision& heuristic,
                          const std::vector<std::string>& specs) {
  std::string prompt =
      "You are the routing agent of a medical imaging pipeline. Choose the specialization, "
      "prompting mode and flags for this study.\n";
  prompt += "Allowed specializations:";
  for (const auto& s : specs) prompt += " " + s;
  prompt += "\nAllowed modes: zero few cot\nAllowed flags: strict_safety require_bboxes longitudinal\n";
  if (c.query) prompt += "Query: " + *c.query + "\n";
  if (!c.history.empty()) {
    prompt += "Patient history:\n";
    for (const auto& h : c.history) prompt += "- " + h + "\n";
  }
  if (!c.metadata.empty()) {
    prompt += "Metadata:\n";
    for (const auto& [k, v] : c.metadata) prompt += "- " + k + ": " + v + "\n";
  }
  if (c.task_hint) prompt += "Task hint: " + *c.task_hint + "\n";
  if (c.mode_hint) prompt += "Mode hint: " + std::string(to_string(*c.mode_hint)) + "\n";
  prompt += "Heuristic proposal: " + to_json(heuristic).dump() + "\n";
  prompt += "Answer with JSON only: {\"s\": <specialization>, \"m\": <mode>, \"F\": [<flags>]}";
  return prompt;
}

RoutingDecision parse_refined(const Json& j, const std::vector<std::string>& specs) {
  if (!j.is_object()) throw Error(ErrorKind::MalformedJson, "router response is not an object");
  auto s = j.find("s");
  if (s == j.end() || !s->is_string()) throw Error(ErrorKind::MalformedJson, "router response lacks s");
  RoutingDecision d;
  d.specialization = s->get<std::string>();
  if (std::find(specs.begin(), specs.end(), d.specialization) == specs.end())
    throw Error(ErrorKind::MalformedJson, "unknown specialization " + d.specialization);
  auto m = j.find("m");
  if (m == j.end() || !m->is_string()) throw Error(ErrorKind::MalformedJson, "router response lacks m");
  auto mode = parse_mode(m->get<std::string>());
  if (!mode) throw Error(ErrorKind::MalformedJson, "unknown mode " + m->get<std::string>());
  d.mode = *mode;
  if (auto f = j.find("F"); f != j.end()) {
    if (!f->is_array()) throw Error(ErrorKind::MalformedJson, "F must be a list");
    for (const auto& item : *f) {
      if (!item.is_string()) throw Error(ErrorKind::MalformedJson, "flag must be a string");
      auto flag = parse_flag(item.get<std::string>());
      if (!flag) throw Error(ErrorKind::MalformedJson, "unknown flag " + item.get<std::string>());
      d.flags.insert(*flag);
    }
  }
  d.source = RoutingSource::ModelRefined;
  return d;
}

}  // namespace

RouteResult route(const CaseInput& c, Backend* backend, const RuleTable& rules,
                  const RouterOptions& options) {
  auto heuristic = heuristic_route(c, rules);
  if (!options.refinement_enabled) return {heuristic, std::nullopt};
  if (!backend) return {heuristic, "no backend configured"};

  ModelRequest req;
  req.key = {Role::Router, c.case_id, 0, 0};
  req.prompt = router_prompt(c, heuristic, options.specializations);
  req.image = c.image;
  req.temperature = options.temperature;
  req.seed = options.seed;
  req.max_output = options.max_output;
  try {
    auto text = complete_with_retry(*backend, req);
    return {parse_refined(extract_json(text), options.specializations), std::nullopt};
  } catch (const Error& e) {
    return {heuristic, e.what()};
  } catch (const Json::exception& e) {
    return {heuristic, e.what()};
  }
}

std::string resolve_task(const CaseInput& c, const RoutingDecision& decision) {
  if (c.task_hint && !c.task_hint->empty()) return *c.task_hint;
  if (decision.flags.count(Flag::Longitudinal)) return std::string(kTaskLongitudinal);
  return std::string(kTaskCxrReport);
}

}  // namespace r4
