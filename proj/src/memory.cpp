// SPDX-License-Identifier: Apache-2.0
#include "r4/memory.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <system_error>

namespace r4 {

Json to_json(const MemoryItem& item) {
  return Json{{"task", item.task},
              {"specialization", item.specialization},
              {"cue", item.cue},
              {"final_report", item.final_report},
              {"tags", item.tags},
              {"created_seq", item.created_seq}};
}

MemoryItem memory_item_from_json(const Json& j) {
  MemoryItem item;
  item.task = j.at("task").get<std::string>();
  item.specialization = j.at("specialization").get<std::string>();
  item.cue = j.at("cue").get<std::string>();
  item.final_report = j.at("final_report").get<std::string>();
  for (const auto& t : j.value("tags", Json::array())) item.tags.insert(to_lower(t.get<std::string>()));
  item.created_seq = j.at("created_seq").get<std::int64_t>();
  return item;
}

std::size_t overlap_score(const MemoryItem& item, const std::set<std::string>& cue_tokens) {
  if (cue_tokens.empty()) return 0;
  const auto item_tokens = tokenize(item.cue);
  std::size_t n = 0;
  for (const auto& t : cue_tokens)
    if (item_tokens.count(t) || item.tags.count(t)) ++n;
  return n;
}

std::size_t overlap_score(const MemoryItem& item, std::string_view cue) {
  return overlap_score(item, tokenize(cue));
}

// ---------------------------------------------------------------------------
// Curation

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// First position of `phrase` in `text` sitting on word boundaries, or npos.
std::size_t find_phrase(std::string_view text, std::string_view phrase) {
  if (phrase.empty()) return std::string_view::npos;
  for (auto pos = text.find(phrase); pos != std::string_view::npos; pos = text.find(phrase, pos + 1)) {
    const auto end = pos + phrase.size();
    const bool left = pos == 0 || !is_word_char(text[pos - 1]);
    const bool right = end == text.size() || !is_word_char(text[end]) || !is_word_char(phrase.back());
    if (left && right) return pos;
  }
  return std::string_view::npos;
}

}  // namespace

const EntityLexicon& EntityLexicon::defaults() {
  static const EntityLexicon kLexicon({
      {"cardiomegaly", {"cardiomegaly", "enlarged heart", "cardiac enlargement", "enlarged cardiac silhouette"}},
      {"effusion", {"effusion", "effusions"}},
      {"pneumothorax", {"pneumothorax"}},
      {"opacity", {"opacity", "opacities", "opacification"}},
      {"consolidation", {"consolidation"}},
      {"atelectasis", {"atelectasis", "atelectatic"}},
      {"nodule", {"nodule", "nodules"}},
      {"mass", {"mass", "masses"}},
      {"infiltration", {"infiltrate", "infiltrates", "infiltration"}},
      {"edema", {"edema", "oedema"}},
      {"fibrosis", {"fibrosis", "fibrotic"}},
      {"pleural thickening", {"pleural thickening"}},
      {"calcification", {"calcification", "calcified"}},
      {"aortic enlargement", {"aortic enlargement", "enlarged aorta", "tortuous aorta"}},
      {"interstitial lung disease", {"interstitial lung disease", "ild"}},
      {"pneumonia", {"pneumonia"}},
      {"emphysema", {"emphysema"}},
      {"fracture", {"fracture", "fractures"}},
      {"normal study", {"normal study", "no acute", "unremarkable", "within normal limits"}},
  });
  return kLexicon;
}

EntityLexicon EntityLexicon::from_json(const Json& j) {
  if (!j.is_array()) throw Error(ErrorKind::InvalidConfig, "lexicon must be a JSON array");
  std::vector<LexiconEntry> entries;
  try {
    for (const auto& e : j) {
      LexiconEntry entry{to_lower(e.at("entity").get<std::string>()), {}};
      for (const auto& p : e.value("phrases", Json::array())) entry.phrases.push_back(to_lower(p.get<std::string>()));
      if (entry.phrases.empty()) entry.phrases.push_back(entry.entity);
      entries.push_back(std::move(entry));
    }
  } catch (const Json::exception& ex) {
    throw Error(ErrorKind::InvalidConfig, std::string("lexicon: ") + ex.what());
  }
  return EntityLexicon(std::move(entries));
}

std::vector<std::string> EntityLexicon::find(std::string_view text) const {
  const auto lowered = to_lower(text);
  std::vector<std::pair<std::size_t, const std::string*>> hits;
  for (const auto& entry : entries_) {
    auto best = std::string_view::npos;
    for (const auto& phrase : entry.phrases) best = std::min(best, find_phrase(lowered, phrase));
    if (best != std::string_view::npos) hits.emplace_back(best, &entry.entity);
  }
  std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> out;
  for (const auto& [pos, entity] : hits) out.push_back(*entity);
  return out;
}

std::set<std::string> report_tags(std::string_view report) {
  std::set<std::string> tags;
  const auto lowered = to_lower(report);
  for (std::string_view cue : {"no ", "without ", "absent"}) {
    if (find_phrase(lowered, cue) != std::string_view::npos) {
      tags.insert("negation");
      break;
    }
  }
  const auto tokens = tokenize(report);
  for (const char* side : {"left", "right"}) {
    if (tokens.count(side)) {
      tags.insert("laterality");
      tags.insert(side);
    }
  }
  return tags;
}

MemoryItem make_exemplar(const std::string& task, const std::string& specialization,
                         const std::optional<std::string>& /*query*/,
                         const std::vector<std::string>& /*history*/,
                         const std::map<std::string, std::string>& metadata,
                         const std::string& final_report, const EntityLexicon& lexicon,
                         const CurationOptions& options) {
  if (final_report.find_first_not_of(" \t\r\n") == std::string::npos)
    throw Error(ErrorKind::EmptyReport, "cannot curate an empty report");

  std::vector<std::string> parts = lexicon.find(final_report);
  if (parts.size() > options.max_entities) parts.resize(options.max_entities);
  if (parts.empty()) {
    auto seq = tokenize_sequence(final_report);
    if (seq.size() > 8) seq.resize(8);
    parts = std::move(seq);
  }
  for (const auto& key : options.metadata_keys) {
    auto it = metadata.find(key);
    if (it != metadata.end() && !it->second.empty()) parts.push_back(to_lower(it->second));
  }

  MemoryItem item;
  item.task = task;
  item.specialization = specialization;
  for (const auto& p : parts) item.cue += (item.cue.empty() ? "" : " ") + p;
  item.final_report = final_report;
  item.tags = report_tags(final_report);
  return item;
}

std::string case_cue(const CaseInput& c, const CurationOptions& options) {
  std::string cue = c.query.value_or("");
  for (const auto& h : c.history) cue += " " + h;
  for (const auto& key : options.metadata_keys) cue += " " + c.meta(key);
  return cue;
}

// ---------------------------------------------------------------------------
// Store

const MemoryItem& MemoryStore::insert(MemoryItem item) {
  if (item.cue.empty()) throw Error(ErrorKind::InvalidConfig, "memory item cue must be nonempty");
  std::set<std::string> lowered;
  for (const auto& t : item.tags) lowered.insert(to_lower(t));
  item.tags = std::move(lowered);
  item.created_seq = ++last_seq_;
  items_.push_back(std::move(item));
  evict();
  return items_.back();
}

const MemoryItem& MemoryStore::curate(const std::string& task, const std::string& specialization,
                                      const std::optional<std::string>& query,
                                      const std::vector<std::string>& history,
                                      const std::map<std::string, std::string>& metadata,
                                      const std::string& final_report, const EntityLexicon& lexicon,
                                      const CurationOptions& options) {
  return insert(make_exemplar(task, specialization, query, history, metadata, final_report, lexicon, options));
}

void MemoryStore::set_capacity(std::optional<std::size_t> capacity) {
  capacity_ = capacity;
  evict();
}

void MemoryStore::evict() {
  if (capacity_ && items_.size() > *capacity_)
    items_.erase(items_.begin(), items_.begin() + static_cast<std::ptrdiff_t>(items_.size() - *capacity_));
}

const MemoryItem* MemoryStore::find(std::int64_t seq) const {
  for (const auto& item : items_)
    if (item.created_seq == seq) return &item;
  return nullptr;
}

void MemoryStore::prune(std::size_t keep) {
  if (items_.size() > keep)
    items_.erase(items_.begin(), items_.begin() + static_cast<std::ptrdiff_t>(items_.size() - keep));
}

Json MemoryStore::to_json() const {
  Json items = Json::array();
  for (const auto& item : items_) items.push_back(r4::to_json(item));
  Json j{{"version", kFormatVersion}, {"last_seq", last_seq_}, {"items", items}};
  j["capacity"] = capacity_ ? Json(*capacity_) : Json(nullptr);
  return j;
}

MemoryStore MemoryStore::from_json(const Json& j) {
  if (!j.is_object() || !j.contains("version"))
    throw Error(ErrorKind::VersionMismatch, "memory store has no version field");
  if (j["version"] != kFormatVersion)
    throw Error(ErrorKind::VersionMismatch, "unsupported memory store version " + j["version"].dump());
  MemoryStore store;
  try {
    if (j.contains("capacity") && !j["capacity"].is_null()) store.capacity_ = j["capacity"].get<std::size_t>();
    for (const auto& item : j.at("items")) store.items_.push_back(memory_item_from_json(item));
    store.last_seq_ = j.value("last_seq", std::int64_t{0});
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::IoError, std::string("malformed memory store: ") + e.what());
  }
  for (std::size_t i = 0; i < store.items_.size(); ++i) {
    if (i > 0 && store.items_[i].created_seq <= store.items_[i - 1].created_seq)
      throw Error(ErrorKind::IoError, "memory store sequence numbers are not increasing");
    store.last_seq_ = std::max(store.last_seq_, store.items_[i].created_seq);
  }
  return store;
}

void MemoryStore::persist(const std::filesystem::path& path) const {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + tmp.string());
    out << to_json().dump(2) << '\n';
    if (!out.flush()) throw Error(ErrorKind::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorKind::IoError, "cannot replace " + path.string());
  }
}

MemoryStore MemoryStore::load(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::IoError, path.string() + ": " + e.what());
  }
  return from_json(j);
}

MemoryStore MemoryStore::load_or_empty(const std::filesystem::path& path, std::optional<std::size_t> capacity) {
  if (path.empty() || !std::filesystem::exists(path)) return MemoryStore(capacity);
  auto store = load(path);
  if (capacity) store.set_capacity(capacity);
  return store;
}

std::vector<MemoryItem> top_k(const MemoryStore& store, std::string_view cue, std::string_view task,
                              std::string_view specialization, std::size_t k) {
  const auto cue_tokens = tokenize(cue);
  std::vector<std::pair<std::size_t, const MemoryItem*>> scored;
  for (const auto& item : store.items()) {
    if (item.task != task || item.specialization != specialization) continue;
    if (auto s = overlap_score(item, cue_tokens); s > 0) scored.emplace_back(s, &item);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second->created_seq > b.second->created_seq;
  });
  if (scored.size() > k) scored.resize(k);
  std::vector<MemoryItem> out;
  out.reserve(scored.size());
  for (const auto& [s, item] : scored) out.push_back(*item);
  return out;
}

}  // namespace r4
