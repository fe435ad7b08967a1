// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "r4/backend.hpp"
#include "r4/memory.hpp"
#include "r4/prompt.hpp"
#include "r4/reflector.hpp"
#include "r4/repairer.hpp"
#include "r4/retriever.hpp"
#include "r4/router.hpp"
#include "r4/scoring.hpp"

namespace r4 {

struct BackendSettings {
  enum class Kind { None, Mock, Http };
  Kind kind = Kind::None;
  std::filesystem::path mock_script;
  HttpBackendConfig http;

  /// Throws Error(InvalidConfig) for Kind::None or an unreadable script.
  std::unique_ptr<Backend> make() const;
};

struct EvaluationSettings {
  double iou_threshold = 0.5;
  double fp_confidence_threshold = 0.5;
  int num_classes = 14;
  std::filesystem::path class_aliases;
};

/// Main configuration. Loaded from a JSON document; relative paths resolve
/// against the config file's directory.
struct PipelineConfig {
  int k = 3;
  int max_repairs = 3;
  std::size_t k_fewshot = 3;
  std::int64_t base_seed = 0;
  double temperature = 0.2;
  int max_output = 1024;
  bool refinement_enabled = false;
  bool curate = true;
  bool reflect_with_boxes = true;
  bool concurrent_passes = true;
  int jobs = 1;

  std::vector<std::string> specializations = default_specializations();
  WeightTable weights;
  BackendSettings backend;
  BackendSettings judge_backend;
  std::filesystem::path routing_rules;
  std::filesystem::path templates_dir;
  std::filesystem::path memory_path;
  std::optional<std::size_t> memory_capacity;
  std::filesystem::path lexicon;
  CurationOptions curation;
  EvaluationSettings evaluation;

  /// Throws Error(InvalidConfig) on any violated invariant.
  void validate() const;

  static PipelineConfig from_json(const Json& j, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);
  Json to_json() const;
};

struct CaseResult {
  std::string case_id;
  bool ok = false;
  PipelineOutput output;
  std::optional<std::string> error;
  int repairs = 0;
  bool stopped_early = false;
  std::vector<Draft> drafts;

  /// Output record {case_id, report, boxes, trace, status[, error]}.
  Json to_json() const;
};

struct BatchSummary {
  std::size_t cases = 0;
  std::size_t succeeded = 0;
  std::size_t failed = 0;
  std::size_t total_repairs = 0;
  std::size_t early_stops = 0;
  std::size_t store_size_before = 0;
  std::size_t store_size_after = 0;

  Json to_json() const;
};

struct BatchResult {
  BatchSummary summary;
  std::vector<CaseResult> cases;
};

struct BatchOptions {
  bool curate = true;
  /// Rewrite the memory file after every curation when set.
  std::filesystem::path persist_path;
  /// Cases run concurrently above 1; reads use a snapshot taken at case start.
  int jobs = 1;
};

class Pipeline {
 public:
  Pipeline(PipelineConfig config, Backend& backend);

  const PipelineConfig& config() const { return config_; }
  const RuleTable& rules() const { return rules_; }

  /// Runs the four stages. On success appends one exemplar to `store` (when
  /// `curate`); on failure the store is untouched and the result carries
  /// the error.
  CaseResult run_case(const CaseInput& c, MemoryStore& store, bool curate = true) const;

  BatchResult run_batch(const std::vector<CaseInput>& cases, MemoryStore& store, const BatchOptions& options) const;
  /// Parses the JSONL first; throws InputParseError on a bad line.
  BatchResult run_batch(const std::filesystem::path& cases_jsonl, MemoryStore& store,
                        const BatchOptions& options) const;

 private:
  CaseResult run_case_impl(const CaseInput& c, const MemoryStore& snapshot) const;
  void curate_into(const CaseInput& c, CaseResult& result, MemoryStore& store) const;

  PipelineConfig config_;
  Backend& backend_;
  RuleTable rules_;
  TemplateLibrary templates_;
  EntityLexicon lexicon_;
};

/// JSONL writer for case results, one record per line.
void write_results(const std::filesystem::path& path, const std::vector<CaseResult>& results);

}  // namespace r4
