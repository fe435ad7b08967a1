// SPDX-License-Identifier: Apache-2.0
#include "r4/prompt.hpp"

#include <algorithm>

namespace r4 {

namespace {

bool is_name_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

// Calls on_text for literal runs and on_name for each {name} placeholder.
template <typename OnText, typename OnName>
void walk_template(const std::string& body, OnText on_text, OnName on_name) {
  std::size_t i = 0;
  while (i < body.size()) {
    if (body[i] == '{') {
      std::size_t j = i + 1;
      while (j < body.size() && is_name_char(body[j])) ++j;
      if (j > i + 1 && j < body.size() && body[j] == '}') {
        on_name(body.substr(i + 1, j - i - 1));
        i = j + 1;
        continue;
      }
    }
    on_text(body[i]);
    ++i;
  }
}

std::string render_query(const CaseInput& c) {
  return c.query ? "Clinical question: " + *c.query + "\n" : std::string{};
}

std::string render_history(const CaseInput& c) {
  if (c.history.empty()) return {};
  std::string out = "Patient history:\n";
  for (const auto& h : c.history) out += "- " + h + "\n";
  return out;
}

std::string render_metadata(const CaseInput& c) {
  if (c.metadata.empty()) return {};
  std::string out = "Exam metadata:\n";
  for (const auto& [k, v] : c.metadata) out += "- " + k + ": " + v + "\n";
  return out;
}

}  // namespace

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> names;
  walk_template(body, [](char) {}, [&](std::string name) {
    if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(std::move(name));
  });
  return names;
}

std::string render_fewshots(const std::vector<MemoryItem>& fewshots) {
  if (fewshots.empty()) return {};
  std::string out = "Reference examples:\n";
  for (std::size_t i = 0; i < fewshots.size(); ++i)
    out += "Example " + std::to_string(i + 1) + ": " + fewshots[i].cue + " → " + fewshots[i].final_report + "\n";
  return out;
}

std::string build_prompt(const PromptTemplate& tmpl, const CaseInput& c,
                         const std::vector<MemoryItem>& fewshots,
                         const std::map<std::string, std::string>& extra) {
  std::map<std::string, std::string> values{
      {"query", render_query(c)},
      {"history", render_history(c)},
      {"metadata", render_metadata(c)},
      {"fewshots", tmpl.id.mode == Mode::Zero ? std::string{} : render_fewshots(fewshots)},
      {"task", tmpl.id.task},
      {"specialization", tmpl.id.specialization},
      {"mode", std::string(to_string(tmpl.id.mode))},
  };
  for (const auto& [k, v] : extra) values[k] = v;

  std::string out;
  out.reserve(tmpl.body.size() * 2);
  walk_template(
      tmpl.body, [&](char ch) { out.push_back(ch); },
      [&](const std::string& name) {
        auto it = values.find(name);
        if (it == values.end())
          throw Error(ErrorKind::MissingPlaceholder, "template references unknown {" + name + "}");
        out += it->second;
      });
  return out;
}

TemplateLibrary::TemplateLibrary(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::string TemplateLibrary::file_name(const TemplateId& id) {
  return id.task + "__" + id.specialization + "__" + std::string(to_string(id.mode)) + "__" +
         std::string(to_string(id.role)) + ".txt";
}

std::optional<std::string> TemplateLibrary::from_dir(const TemplateId& id) const {
  if (dir_.empty()) return std::nullopt;
  const auto path = dir_ / file_name(id);
  if (!std::filesystem::is_regular_file(path)) return std::nullopt;
  return read_file(path);
}

PromptTemplate TemplateLibrary::get(const TemplateId& id) const {
  if (auto body = from_dir(id)) return {id, *body};
  auto general = id;
  general.specialization = "general";
  if (auto body = from_dir(general)) return {id, *body};
  return {id, builtin_body(id.role, id.mode)};
}

std::string TemplateLibrary::builtin_body(Role role, Mode mode) {
  switch (role) {
    case Role::Retriever: {
      std::string body =
          "You are a {specialization} imaging assistant working on the task: {task}.\n"
          "{query}{history}{metadata}{fewshots}"
          "Write a concise radiology report for the attached image. State pertinent negatives "
          "explicitly and give the side (left/right) of every lateralized finding.\n";
      if (mode == Mode::Cot)
        body += "Reason step by step about the findings before writing the final report.\n";
      body += "Return JSON: {\"report\": \"<report text>\"}";
      return body;
    }
    case Role::BBox:
      return "You localize findings on the attached image for the task: {task}.\n"
             "{query}Draft report:\n{draft}\n"
             "Return a JSON list of boxes, one per abnormal finding, each as "
             "{\"label\": str, \"description\": str, \"confidence\": 0-1, \"x_min\": 0-1, "
             "\"y_min\": 0-1, \"x_max\": 0-1, \"y_max\": 0-1} in normalized image coordinates. "
             "Return [] for a normal study.";
    case Role::Reflector:
      return "You review a draft radiology report and its bounding boxes for the attached image.\n"
             "{query}Draft report:\n{draft}\nBoxes:\n{boxes}\n{emphasis}"
             "List every problem as a JSON list of records {\"type\": one of negation, laterality, "
             "unsupported, contradiction, missing, localization; \"location\": str; \"message\": str; "
             "\"fix\": str}. Return [] if the draft is correct.";
    case Role::Repairer:
      return "You revise a radiology report and its bounding boxes to resolve the listed issues.\n"
             "Routing: {routing}\n{query}Current report:\n{draft}\nCurrent boxes:\n{boxes}\n"
             "Issues to fix:\n{issues}\n"
             "Return JSON {\"report\": str, \"boxes\": [box records with label, description, "
             "confidence, x_min, y_min, x_max, y_max]}. Return the full box list, not a diff.";
    case Role::Router:
    case Role::Judge:
      break;
  }
  return "{query}{history}{metadata}";
}

}  // namespace r4
