// SPDX-License-Identifier: Apache-2.0
#include "r4/domain.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace r4 {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateBox: return "DegenerateBox";
    case ErrorKind::BadConfidence: return "BadConfidence";
    case ErrorKind::TransportError: return "TransportError";
    case ErrorKind::EmptyResponse: return "EmptyResponse";
    case ErrorKind::NoJsonFound: return "NoJsonFound";
    case ErrorKind::MalformedJson: return "MalformedJson";
    case ErrorKind::MissingPlaceholder: return "MissingPlaceholder";
    case ErrorKind::AllPassesFailed: return "AllPassesFailed";
    case ErrorKind::NotAnArray: return "NotAnArray";
    case ErrorKind::NoUsableDraft: return "NoUsableDraft";
    case ErrorKind::RepairCallFailed: return "RepairCallFailed";
    case ErrorKind::EmptyReport: return "EmptyReport";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::CaseFailed: return "CaseFailed";
    case ErrorKind::InputParseError: return "InputParseError";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::NoEvaluableClass: return "NoEvaluableClass";
    case ErrorKind::NoNoFindingCases: return "NoNoFindingCases";
    case ErrorKind::EmptyReference: return "EmptyReference";
    case ErrorKind::JudgeParseFailure: return "JudgeParseFailure";
  }
  return "Unknown";
}

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::Zero: return "zero";
    case Mode::Few: return "few";
    case Mode::Cot: return "cot";
  }
  return "cot";
}

std::optional<Mode> parse_mode(std::string_view text) {
  const auto t = to_lower(text);
  if (t == "zero") return Mode::Zero;
  if (t == "few") return Mode::Few;
  if (t == "cot") return Mode::Cot;
  return std::nullopt;
}

std::string CaseInput::meta(const std::string& key) const {
  auto it = metadata.find(key);
  return it == metadata.end() ? std::string{} : it->second;
}

void check_case(const CaseInput& c) {
  if (c.case_id.empty()) throw Error(ErrorKind::InvalidConfig, "case_id must be nonempty");
  if (c.image.bytes.empty())
    throw Error(ErrorKind::InvalidConfig, "case " + c.case_id + ": image blob is empty");
  for (const auto& [key, value] : c.metadata) {
    for (unsigned char ch : key) {
      if (ch >= 0x80 || std::isupper(ch))
        throw Error(ErrorKind::InvalidConfig,
                    "case " + c.case_id + ": metadata key '" + key + "' is not lowercase ASCII");
    }
  }
}

namespace {

double clamp_unit(double v, const char* what) {
  if (!std::isfinite(v) || v < -kClampTolerance || v > 1.0 + kClampTolerance)
    throw Error(ErrorKind::DegenerateBox, std::string(what) + " outside [0,1]");
  return std::clamp(v, 0.0, 1.0);
}

}  // namespace

BBox validate_bbox(const RawBox& raw) {
  if (!std::isfinite(raw.confidence) || raw.confidence < -kClampTolerance ||
      raw.confidence > 1.0 + kClampTolerance)
    throw Error(ErrorKind::BadConfidence, "confidence " + std::to_string(raw.confidence));

  BBox box;
  box.label = raw.label;
  box.description = raw.description;
  box.confidence = std::clamp(raw.confidence, 0.0, 1.0);
  box.geom.x_min = clamp_unit(raw.x_min, "x_min");
  box.geom.y_min = clamp_unit(raw.y_min, "y_min");
  box.geom.x_max = clamp_unit(raw.x_max, "x_max");
  box.geom.y_max = clamp_unit(raw.y_max, "y_max");
  if (box.geom.x_min >= box.geom.x_max || box.geom.y_min >= box.geom.y_max)
    throw Error(ErrorKind::DegenerateBox, "empty extent for '" + raw.label + "'");
  return box;
}

BBox validate_bbox(const BBox& box) {
  return validate_bbox(RawBox{box.label, box.description, box.confidence, box.geom.x_min,
                              box.geom.y_min, box.geom.x_max, box.geom.y_max});
}

double iou(const BoxGeometry& a, const BoxGeometry& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? std::min(1.0, inter / uni) : 0.0;
}

bool is_valid(const BBox& box) {
  const auto& g = box.geom;
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  return unit(box.confidence) && unit(g.x_min) && unit(g.y_min) && unit(g.x_max) &&
         unit(g.y_max) && g.x_min < g.x_max && g.y_min < g.y_max;
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> tokenize_sequence(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::set<std::string> tokenize(std::string_view text) {
  auto seq = tokenize_sequence(text);
  return {std::make_move_iterator(seq.begin()), std::make_move_iterator(seq.end())};
}

Json box_to_json(const BBox& box) {
  return Json{{"label", box.label},
              {"description", box.description},
              {"confidence", box.confidence},
              {"x_min", box.geom.x_min},
              {"y_min", box.geom.y_min},
              {"x_max", box.geom.x_max},
              {"y_max", box.geom.y_max}};
}

Json boxes_to_json(const std::vector<BBox>& boxes) {
  Json arr = Json::array();
  for (const auto& b : boxes) arr.push_back(box_to_json(b));
  return arr;
}

namespace {

double number_field(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorKind::MalformedJson, std::string("box missing ") + key);
  if (it->is_number()) return it->get<double>();
  if (it->is_string()) {
    try {
      std::size_t used = 0;
      const auto& s = it->get_ref<const std::string&>();
      double v = std::stod(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
  }
  throw Error(ErrorKind::MalformedJson, std::string("box field ") + key + " is not a number");
}

std::string string_field(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  return it->dump();
}

}  // namespace

RawBox raw_box_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::MalformedJson, "box record is not an object");
  RawBox raw;
  raw.label = string_field(j, "label");
  raw.description = string_field(j, "description");
  raw.confidence = number_field(j, "confidence");
  raw.x_min = number_field(j, "x_min");
  raw.y_min = number_field(j, "y_min");
  raw.x_max = number_field(j, "x_max");
  raw.y_max = number_field(j, "y_max");
  return raw;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::string media_type_for(const std::filesystem::path& p) {
  auto ext = to_lower(p.extension().string());
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".dcm") return "application/dicom";
  return "application/octet-stream";
}

}  // namespace

CaseInput case_from_json(const Json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorKind::InputParseError, "case record is not an object");
  CaseInput c;
  c.case_id = j.value("case_id", std::string{});
  auto image_path = std::filesystem::path(j.value("image_path", std::string{}));
  if (image_path.empty()) throw Error(ErrorKind::InputParseError, "image_path is required");
  if (image_path.is_relative()) image_path = base_dir / image_path;
  c.image.bytes = read_file(image_path);
  c.image.media_type = media_type_for(image_path);
  if (auto it = j.find("query"); it != j.end() && it->is_string() && !it->get<std::string>().empty())
    c.query = it->get<std::string>();
  if (auto it = j.find("history"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(ErrorKind::InputParseError, "history must be an array");
    for (const auto& h : *it) c.history.push_back(h.get<std::string>());
  }
  if (auto it = j.find("metadata"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw Error(ErrorKind::InputParseError, "metadata must be an object");
    for (const auto& [k, v] : it->items())
      c.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  if (auto it = j.find("task_hint"); it != j.end() && it->is_string()) c.task_hint = it->get<std::string>();
  if (auto it = j.find("mode_hint"); it != j.end() && it->is_string()) {
    c.mode_hint = parse_mode(it->get<std::string>());
    if (!c.mode_hint)
      throw Error(ErrorKind::InputParseError, "unknown mode_hint " + it->get<std::string>());
  }
  check_case(c);
  return c;
}

std::vector<CaseInput> load_cases(const std::filesystem::path& jsonl_path) {
  std::ifstream in(jsonl_path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + jsonl_path.string());
  const auto base = jsonl_path.parent_path();
  std::vector<CaseInput> cases;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto c = case_from_json(Json::parse(line), base);
      if (!seen.insert(c.case_id).second) throw Error(ErrorKind::InputParseError, "duplicate case_id " + c.case_id);
      cases.push_back(std::move(c));
    } catch (const Json::exception& e) {
      throw InputParseError(line_no, e.what());
    } catch (const Error& e) {
      throw InputParseError(line_no, e.what());
    }
  }
  return cases;
}

}  // namespace r4
