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

#include <json.hpp>

#include "r4/error.hpp"

namespace r4 {

using Json = nlohmann::json;

/// Prompting regime selected by the router.
enum class Mode { Zero, Few, Cot };

std::string_view to_string(Mode mode);
std::optional<Mode> parse_mode(std::string_view text);

/// Tasks known to the shipped templates and memory. Kept as strings so that
/// deployments can add their own.
inline constexpr std::string_view kTaskCxrReport = "cxr_report";
inline constexpr std::string_view kTaskLongitudinal = "longitudinal_followup";
inline constexpr std::string_view kTaskRiskStratification = "risk_stratification";

struct ImageBlob {
  std::string bytes;
  std::string media_type;
};

struct CaseInput {
  std::string case_id;
  ImageBlob image;
  std::optional<std::string> query;
  std::vector<std::string> history;
  std::map<std::string, std::string> metadata;
  std::optional<std::string> task_hint;
  std::optional<Mode> mode_hint;

  /// Metadata value or empty string.
  std::string meta(const std::string& key) const;
};

/// Throws Error(InvalidConfig) when a case violates its invariants.
void check_case(const CaseInput& c);

struct BoxGeometry {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double area() const { return (x_max - x_min) * (y_max - y_min); }
  bool operator==(const BoxGeometry&) const = default;
};

struct BBox {
  std::string label;
  std::string description;
  double confidence = 0.0;
  BoxGeometry geom;

  bool operator==(const BBox&) const = default;
};

/// Intersection over union; 0 for disjoint or degenerate inputs.
double iou(const BoxGeometry& a, const BoxGeometry& b);

/// Unchecked box as it arrives from a model.
struct RawBox {
  std::string label;
  std::string description;
  double confidence = 0.0;
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;
};

inline constexpr double kClampTolerance = 0.05;

/// Clamps values within kClampTolerance of [0,1] and enforces the box
/// invariants. Throws Error(DegenerateBox | BadConfidence).
BBox validate_bbox(const RawBox& raw);
BBox validate_bbox(const BBox& box);
bool is_valid(const BBox& box);

struct Provenance {
  int pass_index = -1;
  int repair_iteration = 0;
};

struct Report {
  std::string text;
  Provenance provenance;
};

struct TraceEvent {
  std::string kind;
  Json data;
};

using Trace = std::vector<TraceEvent>;

struct PipelineOutput {
  Report report;
  std::vector<BBox> boxes;
  Trace trace;
};

/// Lowercase, split on non-alphanumerics, deduplicate.
std::set<std::string> tokenize(std::string_view text);

/// Same split and lowercasing as tokenize() but keeps order and repeats.
std::vector<std::string> tokenize_sequence(std::string_view text);

std::string to_lower(std::string_view text);

// Wire forms.
Json box_to_json(const BBox& box);
Json boxes_to_json(const std::vector<BBox>& boxes);
/// Reads the {label, description, confidence, x_min, ...} record. Missing
/// numeric fields throw Error(MalformedJson).
RawBox raw_box_from_json(const Json& j);

/// Parses one JSONL case record. image_path is resolved against base_dir and
/// the file read into the blob.
CaseInput case_from_json(const Json& j, const std::filesystem::path& base_dir);
std::vector<CaseInput> load_cases(const std::filesystem::path& jsonl_path);

std::string read_file(const std::filesystem::path& path);

}  // namespace r4
