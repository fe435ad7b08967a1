// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "r4/agents.hpp"
#include "r4/memory.hpp"

namespace r4 {

struct DraftMeta {
  std::size_t fewshots_used = 0;
  Mode mode = Mode::Cot;
  std::string task;
  std::string specialization;
  double temperature = 0.0;
  std::int64_t seed = 0;
};

struct Draft {
  int pass_index = 0;
  std::string text;
  std::vector<BBox> boxes;
  DraftMeta meta;
  /// Set when the pass failed; the draft is then unusable.
  std::optional<std::string> error;
  std::vector<std::string> warnings;

  bool ok() const { return !error.has_value(); }
};

Json to_json(const Draft& draft);

struct BoxDetection {
  std::vector<BBox> boxes;
  std::vector<std::string> warnings;
};

/// Parses a list of box records (or an object holding "boxes"), validating
/// each one and dropping the rest with a warning, then deduplicates.
BoxDetection parse_boxes(const Json& value);

/// Same-label boxes overlapping with IoU > 0.9 collapse to the most confident.
std::vector<BBox> dedup_boxes(std::vector<BBox> boxes, double iou_threshold = 0.9);

/// One bbox-role call. Never throws; failures yield an empty list plus a warning.
BoxDetection detect_boxes(const CaseInput& c, const std::string& draft_text, const AgentContext& ctx,
                          int pass_index);

/// Report text from a retriever response: the "report" field of a JSON
/// object when present, else the trimmed text.
std::string draft_text_from_response(const std::string& response);

struct RetrieverOptions {
  int k = 3;
  std::size_t k_fewshot = 3;
  bool concurrent = true;
  CurationOptions cue;
};

/// pass@k generation: k drafts in pass order, failed passes kept as error
/// drafts. Throws Error(AllPassesFailed) when none survive.
std::vector<Draft> generate_drafts(const CaseInput& c, const MemoryStore& store, const AgentContext& ctx,
                                   const RetrieverOptions& options);

}  // namespace r4
