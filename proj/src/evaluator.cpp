// SPDX-License-Identifier: Apache-2.0
#include "r4/evaluator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace r4 {

// ---------------------------------------------------------------------------
// Detection

std::optional<double> average_precision(const std::vector<ScoredBox>& predictions,
                                        const std::vector<GroundTruthBox>& truths, double iou_threshold) {
  if (iou_threshold <= 0.0 || iou_threshold > 1.0)
    throw Error(ErrorKind::InvalidConfig, "iou_threshold must be in (0,1]");
  if (truths.empty()) return std::nullopt;

  std::vector<std::size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return predictions[a].confidence > predictions[b].confidence;
  });

  std::vector<bool> matched(truths.size(), false);
  std::vector<double> precision;
  std::vector<double> recall;
  std::size_t tp = 0;
  std::size_t seen = 0;
  for (auto idx : order) {
    const auto& p = predictions[idx];
    double best_iou = -1.0;
    std::optional<std::size_t> best;
    for (std::size_t t = 0; t < truths.size(); ++t) {
      if (matched[t] || truths[t].case_id != p.case_id) continue;
      const double o = iou(p.geom, truths[t].geom);
      if (o > best_iou) {
        best_iou = o;
        best = t;
      }
    }
    ++seen;
    if (best && best_iou >= iou_threshold) {
      matched[*best] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(seen));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(truths.size()));
  }

  // Monotone envelope from the right, then area under the step curve.
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

MapResult map50(const std::map<int, std::vector<ScoredBox>>& predictions,
                const std::map<int, std::vector<GroundTruthBox>>& truths, int num_classes, double iou_threshold) {
  static const std::vector<ScoredBox> kNone;
  MapResult out;
  for (int cls = 0; cls < num_classes; ++cls) {
    auto t = truths.find(cls);
    if (t == truths.end() || t->second.empty()) continue;
    auto p = predictions.find(cls);
    out.per_class_ap[cls] = *average_precision(p == predictions.end() ? kNone : p->second, t->second, iou_threshold);
  }
  if (out.per_class_ap.empty()) throw Error(ErrorKind::NoEvaluableClass, "no class has ground truth");
  double sum = 0.0;
  for (const auto& [cls, ap] : out.per_class_ap) sum += ap;
  out.map50_raw = sum / static_cast<double>(out.per_class_ap.size());
  out.map50 = out.map50_raw * 100.0;
  return out;
}

ClassAliases::ClassAliases(std::map<std::string, int> aliases) {
  for (auto& [label, id] : aliases) aliases_[normalize(label)] = id;
}

const ClassAliases& ClassAliases::vinbigdata() {
  static const ClassAliases kAliases({
      {"aortic enlargement", 0},  {"enlarged aorta", 0},
      {"atelectasis", 1},
      {"calcification", 2},
      {"cardiomegaly", 3},        {"enlarged heart", 3},       {"cardiac enlargement", 3},
      {"consolidation", 4},
      {"ild", 5},                 {"interstitial lung disease", 5},
      {"infiltration", 6},        {"infiltrate", 6},
      {"lung opacity", 7},        {"opacity", 7},
      {"nodule/mass", 8},         {"nodule", 8},               {"mass", 8},
      {"other lesion", 9},
      {"pleural effusion", 10},   {"effusion", 10},
      {"pleural thickening", 11},
      {"pneumothorax", 12},
      {"pulmonary fibrosis", 13}, {"fibrosis", 13},
      {"no finding", kNoFindingClass}, {"normal", kNoFindingClass},
  });
  return kAliases;
}

ClassAliases ClassAliases::from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "class alias table must be a JSON object");
  std::map<std::string, int> aliases;
  for (const auto& [label, id] : j.items()) {
    if (!id.is_number_integer()) throw Error(ErrorKind::InvalidConfig, "class id for " + label + " must be an integer");
    aliases[label] = id.get<int>();
  }
  return ClassAliases(std::move(aliases));
}

std::string ClassAliases::normalize(std::string_view label) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : label) {
    const bool sep = std::isspace(c) || c == '_' || c == '-';
    if (sep) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::optional<int> ClassAliases::lookup(std::string_view label) const {
  auto it = aliases_.find(normalize(label));
  if (it == aliases_.end()) return std::nullopt;
  return it->second;
}

double fp_rate_no_finding(const std::vector<CasePrediction>& outputs, const std::set<std::string>& no_finding_cases,
                          const ClassAliases& aliases, double confidence_threshold) {
  if (no_finding_cases.empty()) throw Error(ErrorKind::NoNoFindingCases, "no no-finding cases in the set");
  std::map<std::string, const CasePrediction*> by_case;
  for (const auto& o : outputs) by_case[o.case_id] = &o;
  std::size_t flagged = 0;
  for (const auto& id : no_finding_cases) {
    auto it = by_case.find(id);
    if (it == by_case.end()) continue;
    const bool abnormal = std::any_of(it->second->boxes.begin(), it->second->boxes.end(), [&](const BBox& b) {
      return b.confidence >= confidence_threshold && aliases.lookup(b.label) != kNoFindingClass;
    });
    if (abnormal) ++flagged;
  }
  return static_cast<double>(flagged) / static_cast<double>(no_finding_cases.size());
}

// ---------------------------------------------------------------------------
// Text

double bleu(const std::vector<std::string>& candidate, const std::vector<std::string>& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<std::vector<std::string>, int> ref_counts;
    for (std::size_t i = 0; i + n <= reference.size(); ++i)
      ++ref_counts[{reference.begin() + static_cast<std::ptrdiff_t>(i), reference.begin() + static_cast<std::ptrdiff_t>(i + n)}];
    std::map<std::vector<std::string>, int> cand_counts;
    for (std::size_t i = 0; i + n <= candidate.size(); ++i)
      ++cand_counts[{candidate.begin() + static_cast<std::ptrdiff_t>(i), candidate.begin() + static_cast<std::ptrdiff_t>(i + n)}];
    double matches = 0.0;
    for (const auto& [gram, count] : cand_counts) {
      auto r = ref_counts.find(gram);
      if (r != ref_counts.end()) matches += std::min(count, r->second);
    }
    const double total = candidate.size() >= n ? static_cast<double>(candidate.size() - n + 1) : 0.0;
    double p = 0.0;
    if (n == 1) {
      if (matches == 0.0) return 0.0;
      p = matches / total;
    } else {
      p = (matches + 1.0) / (total + 1.0);
    }
    log_sum += 0.25 * std::log(p);
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_sum);
}

double rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  std::vector<std::size_t> prev(reference.size() + 1, 0), cur(reference.size() + 1, 0);
  for (const auto& tok : candidate) {
    for (std::size_t j = 1; j <= reference.size(); ++j)
      cur[j] = tok == reference[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[reference.size()]);
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

TextScores text_metrics(std::string_view candidate, std::string_view reference) {
  const auto ref = tokenize_sequence(reference);
  if (ref.empty()) throw Error(ErrorKind::EmptyReference, "reference report has no tokens");
  const auto cand = tokenize_sequence(candidate);
  return {bleu(cand, ref), rouge_l(cand, ref)};
}

// ---------------------------------------------------------------------------
// Judge

double judge_aggregate(const JudgeScores& s) {
  const auto v = s.values();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string judge_prompt(std::string_view candidate, std::string_view reference) {
  std::string p =
      "You are an expert radiologist grading a generated chest X-ray report against the reference "
      "report for the same image. Rate each aspect on a 1-10 scale (10 is best):\n"
      "1. coverage: coverage of key findings\n"
      "2. consistency: consistency with the reference report\n"
      "3. diagnostic: diagnostic accuracy\n"
      "4. style: stylistic alignment with typical radiology reporting\n"
      "5. conciseness: conciseness and clarity\n\n"
      "Reference report:\n";
  p += reference;
  p += "\n\nGenerated report:\n";
  p += candidate;
  p += "\n\nAnswer with JSON only: {\"coverage\": n, \"consistency\": n, \"diagnostic\": n, \"style\": n, "
       "\"conciseness\": n}";
  return p;
}

JudgeScores parse_judge_response(const std::string& text) {
  Json j;
  try {
    j = extract_json(text);
  } catch (const Error& e) {
    throw Error(ErrorKind::JudgeParseFailure, e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::JudgeParseFailure, "judge response is not an object");
  auto field = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw Error(ErrorKind::JudgeParseFailure, std::string("missing ") + key);
    double v = 0.0;
    if (it->is_number()) {
      v = it->get<double>();
    } else if (it->is_string()) {
      try {
        v = std::stod(it->get<std::string>());
      } catch (const std::exception&) {
        throw Error(ErrorKind::JudgeParseFailure, std::string(key) + " is not a number");
      }
    } else {
      throw Error(ErrorKind::JudgeParseFailure, std::string(key) + " is not a number");
    }
    if (!std::isfinite(v)) throw Error(ErrorKind::JudgeParseFailure, std::string(key) + " is not finite");
    return std::clamp(v, 1.0, 10.0);
  };
  return {field("coverage"), field("consistency"), field("diagnostic"), field("style"), field("conciseness")};
}

JudgeScores judge_case(const std::string& case_id, std::string_view candidate, std::string_view reference,
                       Backend& backend) {
  ModelRequest req;
  req.key = {Role::Judge, case_id, 0, 0};
  req.prompt = judge_prompt(candidate, reference);
  req.temperature = 0.0;
  req.max_output = 256;
  std::string text;
  try {
    text = complete_with_retry(backend, req);
  } catch (const Error& e) {
    throw Error(ErrorKind::JudgeParseFailure, e.what());
  }
  return parse_judge_response(text);
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

double parse_coord(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw InputParseError(line, "bad coordinate '" + s + "'");
}

}  // namespace

std::vector<GroundTruthBox> load_ground_truth_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> col;
  std::vector<GroundTruthBox> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = split_csv_line(line);
    if (col.empty()) {
      for (std::size_t i = 0; i < fields.size(); ++i) col[fields[i]] = i;
      for (const char* name : {"case_id", "class_id", "x_min", "y_min", "x_max", "y_max"})
        if (!col.count(name)) throw InputParseError(line_no, std::string("missing column ") + name);
      continue;
    }
    auto get = [&](const char* name) -> const std::string& {
      const auto i = col.at(name);
      if (i >= fields.size()) throw InputParseError(line_no, "too few fields");
      return fields[i];
    };
    GroundTruthBox gt;
    gt.case_id = get("case_id");
    try {
      gt.class_id = std::stoi(get("class_id"));
    } catch (const std::exception&) {
      throw InputParseError(line_no, "bad class_id");
    }
    if (gt.class_id != kNoFindingClass) {
      gt.geom = {parse_coord(get("x_min"), line_no), parse_coord(get("y_min"), line_no),
                 parse_coord(get("x_max"), line_no), parse_coord(get("y_max"), line_no)};
      if (!(gt.geom.x_min < gt.geom.x_max && gt.geom.y_min < gt.geom.y_max) || gt.geom.x_min < 0.0 ||
          gt.geom.y_min < 0.0 || gt.geom.x_max > 1.0 || gt.geom.y_max > 1.0)
        throw InputParseError(line_no, "invalid normalized box");
    }
    out.push_back(std::move(gt));
  }
  return out;
}

std::map<std::string, std::string> load_reference_reports(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = Json::parse(line);
      out[j.at("case_id").get<std::string>()] = j.at("report").get<std::string>();
    } catch (const Json::exception& e) {
      throw InputParseError(line_no, e.what());
    }
  }
  return out;
}

std::vector<CasePrediction> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::vector<CasePrediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = Json::parse(line);
      CasePrediction p;
      p.case_id = j.at("case_id").get<std::string>();
      p.report = j.value("report", std::string{});
      p.ok = j.value("status", std::string("ok")) == "ok";
      for (const auto& b : j.value("boxes", Json::array())) {
        try {
          p.boxes.push_back(validate_bbox(raw_box_from_json(b)));
        } catch (const Error&) {
        }
      }
      out.push_back(std::move(p));
    } catch (const Json::exception& e) {
      throw InputParseError(line_no, e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

Json evaluate(const EvaluationInputs& inputs, const ClassAliases& aliases, const EvaluationOptions& options) {
  Json report = Json::object();

  if (inputs.truth_boxes) {
    std::set<std::string> gt_cases, no_finding;
    std::map<int, std::vector<GroundTruthBox>> truths;
    for (const auto& gt : *inputs.truth_boxes) {
      gt_cases.insert(gt.case_id);
      if (gt.class_id == kNoFindingClass) no_finding.insert(gt.case_id);
      else truths[gt.class_id].push_back(gt);
    }
    std::map<int, std::vector<ScoredBox>> preds;
    std::size_t unmatched = 0;
    std::vector<CasePrediction> scored_outputs;
    for (const auto& o : inputs.outputs) {
      if (!gt_cases.count(o.case_id)) continue;
      scored_outputs.push_back(o);
      for (const auto& b : o.boxes) {
        auto cls = aliases.lookup(b.label);
        if (!cls) ++unmatched;
        else if (*cls >= 0 && *cls < options.num_classes) preds[*cls].push_back({o.case_id, b.confidence, b.geom});
      }
    }
    Json det{{"n_cases", gt_cases.size()}, {"unmatched_labels", unmatched}};
    try {
      auto m = map50(preds, truths, options.num_classes, options.iou_threshold);
      det["map50"] = m.map50;
      det["map50_raw"] = m.map50_raw;
      Json per_class = Json::object();
      for (const auto& [cls, ap] : m.per_class_ap) per_class[std::to_string(cls)] = ap;
      det["per_class_ap"] = per_class;
    } catch (const Error& e) {
      det["map50"] = nullptr;
      det["map50_note"] = e.what();
    }
    try {
      det["fp_rate_no_finding"] =
          fp_rate_no_finding(scored_outputs, no_finding, aliases, options.fp_confidence_threshold);
      det["n_no_finding"] = no_finding.size();
    } catch (const Error& e) {
      det["fp_rate_no_finding"] = nullptr;
      det["fp_rate_note"] = e.what();
    }
    report["detection"] = det;
  }

  if (inputs.truth_reports) {
    double bleu_sum = 0.0, rouge_sum = 0.0;
    std::size_t n = 0;
    for (const auto& o : inputs.outputs) {
      auto ref = inputs.truth_reports->find(o.case_id);
      if (ref == inputs.truth_reports->end()) continue;
      const auto s = text_metrics(o.ok ? o.report : std::string{}, ref->second);
      bleu_sum += s.bleu;
      rouge_sum += s.rouge_l;
      ++n;
    }
    Json text{{"n_cases", n}};
    text["bleu"] = n ? Json(bleu_sum / static_cast<double>(n)) : Json(nullptr);
    text["rouge_l"] = n ? Json(rouge_sum / static_cast<double>(n)) : Json(nullptr);
    report["text"] = text;
  }

  if (inputs.judge && inputs.truth_reports) {
    std::array<double, 5> sums{};
    double overall = 0.0;
    std::size_t scored = 0, failed = 0;
    for (const auto& o : inputs.outputs) {
      auto ref = inputs.truth_reports->find(o.case_id);
      if (ref == inputs.truth_reports->end()) continue;
      try {
        if (!o.ok) throw Error(ErrorKind::JudgeParseFailure, "case failed");
        const auto s = judge_case(o.case_id, o.report, ref->second, *inputs.judge);
        const auto v = s.values();
        for (std::size_t i = 0; i < v.size(); ++i) sums[i] += v[i];
        overall += judge_aggregate(s);
        ++scored;
      } catch (const Error&) {
        ++failed;
      }
    }
    static const char* kAspects[] = {"coverage", "consistency", "diagnostic", "style", "conciseness"};
    Json aspects = Json::object();
    for (std::size_t i = 0; i < 5; ++i)
      aspects[kAspects[i]] = scored ? Json(sums[i] / static_cast<double>(scored)) : Json(nullptr);
    report["judge"] = Json{{"per_aspect_means", aspects},
                           {"overall_mean", scored ? Json(overall / static_cast<double>(scored)) : Json(nullptr)},
                           {"n_scored", scored},
                           {"n_failed", failed}};
  }
  return report;
}

}  // namespace r4
