// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "r4/backend.hpp"
#include "r4/domain.hpp"
#include "r4/memory.hpp"

namespace r4 {

struct TemplateId {
  std::string task;
  std::string specialization;
  Mode mode = Mode::Cot;
  Role role = Role::Retriever;

  auto operator<=>(const TemplateId&) const = default;
};

/// Body text with {name} placeholders. Names are [a-z_]+; any other brace
/// sequence (JSON examples, for instance) is copied through.
struct PromptTemplate {
  TemplateId id;
  std::string body;

  std::vector<std::string> placeholders() const;
};

/// Placeholders always resolvable from the case itself.
inline const std::vector<std::string>& case_placeholders() {
  static const std::vector<std::string> kNames{"query", "history", "metadata", "fewshots",
                                               "task", "specialization", "mode"};
  return kNames;
}

/// Substitutes placeholders. Few-shots become numbered "Example i: cue → report"
/// lines; zero-shot templates always get an empty few-shot block. Names not
/// provided by the case or `extra` throw Error(MissingPlaceholder).
std::string build_prompt(const PromptTemplate& tmpl, const CaseInput& c,
                         const std::vector<MemoryItem>& fewshots,
                         const std::map<std::string, std::string>& extra = {});

std::string render_fewshots(const std::vector<MemoryItem>& fewshots);

/// Resolves templates from a directory of "<task>__<spec>__<mode>__<role>.txt"
/// files, falling back to the general specialization and then to built-ins.
class TemplateLibrary {
 public:
  TemplateLibrary() = default;
  explicit TemplateLibrary(std::filesystem::path dir);

  PromptTemplate get(const TemplateId& id) const;

  static std::string builtin_body(Role role, Mode mode);
  static std::string file_name(const TemplateId& id);

 private:
  std::optional<std::string> from_dir(const TemplateId& id) const;

  std::filesystem::path dir_;
};

}  // namespace r4
