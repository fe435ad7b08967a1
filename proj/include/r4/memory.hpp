// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "r4/domain.hpp"

namespace r4 {

struct MemoryItem {
  std::string task;
  std::string specialization;
  std::string cue;
  std::string final_report;
  std::set<std::string> tags;
  std::int64_t created_seq = 0;

  bool operator==(const MemoryItem&) const = default;
};

Json to_json(const MemoryItem& item);
MemoryItem memory_item_from_json(const Json& j);

/// |tokens(cue) ∩ (tokens(item.cue) ∪ item.tags)|
std::size_t overlap_score(const MemoryItem& item, std::string_view cue);

/// Same score with the query tokens precomputed.
std::size_t overlap_score(const MemoryItem& item, const std::set<std::string>& cue_tokens);

/// One clinical entity and the phrases that signal it in a report.
struct LexiconEntry {
  std::string entity;
  std::vector<std::string> phrases;
};

class EntityLexicon {
 public:
  explicit EntityLexicon(std::vector<LexiconEntry> entries) : entries_(std::move(entries)) {}

  static const EntityLexicon& defaults();
  static EntityLexicon from_json(const Json& j);

  /// Entities whose phrases occur in the text on word boundaries, ordered by
  /// first occurrence.
  std::vector<std::string> find(std::string_view text) const;

  const std::vector<LexiconEntry>& entries() const { return entries_; }

 private:
  std::vector<LexiconEntry> entries_;
};

struct CurationOptions {
  std::size_t max_entities = 5;
  std::vector<std::string> metadata_keys{"modality", "body_region"};
};

/// Tags derived from a report: "negation", and "laterality" plus the side
/// ("left", "right") for lateralized findings.
std::set<std::string> report_tags(std::string_view report);

/// Builds the exemplar for a finished case. created_seq is left 0 for the
/// store to assign. Throws Error(EmptyReport).
MemoryItem make_exemplar(const std::string& task, const std::string& specialization,
                         const std::optional<std::string>& query,
                         const std::vector<std::string>& history,
                         const std::map<std::string, std::string>& metadata,
                         const std::string& final_report,
                         const EntityLexicon& lexicon = EntityLexicon::defaults(),
                         const CurationOptions& options = {});

/// Retrieval cue for a new case: query, history and the curated metadata values.
std::string case_cue(const CaseInput& c, const CurationOptions& options = {});

class MemoryStore {
 public:
  static constexpr int kFormatVersion = 1;

  MemoryStore() = default;
  explicit MemoryStore(std::optional<std::size_t> capacity) : capacity_(capacity) {}

  /// Assigns the next sequence number, appends and evicts the oldest items
  /// beyond capacity. Returns the stored item.
  const MemoryItem& insert(MemoryItem item);

  /// make_exemplar + insert.
  const MemoryItem& curate(const std::string& task, const std::string& specialization,
                           const std::optional<std::string>& query,
                           const std::vector<std::string>& history,
                           const std::map<std::string, std::string>& metadata,
                           const std::string& final_report,
                           const EntityLexicon& lexicon = EntityLexicon::defaults(),
                           const CurationOptions& options = {});

  const std::vector<MemoryItem>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  std::optional<std::size_t> capacity() const { return capacity_; }
  void set_capacity(std::optional<std::size_t> capacity);
  const MemoryItem* find(std::int64_t seq) const;

  /// Keeps the n most recently inserted items.
  void prune(std::size_t keep);

  Json to_json() const;
  static MemoryStore from_json(const Json& j);

  /// Atomic write via a sibling temp file and rename. Throws Error(IoError).
  void persist(const std::filesystem::path& path) const;
  /// Throws Error(IoError | VersionMismatch).
  static MemoryStore load(const std::filesystem::path& path);
  /// load() when the file exists, otherwise an empty store.
  static MemoryStore load_or_empty(const std::filesystem::path& path,
                                   std::optional<std::size_t> capacity = std::nullopt);

  bool operator==(const MemoryStore&) const = default;

 private:
  void evict();

  std::vector<MemoryItem> items_;
  std::optional<std::size_t> capacity_;
  std::int64_t last_seq_ = 0;
};

/// Items with matching task and specialization and a nonzero score, best
/// first, ties to the most recent, at most k.
std::vector<MemoryItem> top_k(const MemoryStore& store, std::string_view cue, std::string_view task,
                              std::string_view specialization, std::size_t k);

}  // namespace r4
