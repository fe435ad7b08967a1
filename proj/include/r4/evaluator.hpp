// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "r4/backend.hpp"
#include "r4/domain.hpp"

namespace r4 {

inline constexpr int kNoFindingClass = 14;

/// Ground-truth annotation. class_id == kNoFindingClass marks a normal study
/// and carries no geometry.
struct GroundTruthBox {
  std::string case_id;
  int class_id = 0;
  BoxGeometry geom;
};

struct ScoredBox {
  std::string case_id;
  double confidence = 0.0;
  BoxGeometry geom;
};

/// All-points interpolated AP for one class. Predictions only match truths of
/// the same case_id. Returns nullopt when there are no truths (the class is
/// not evaluable).
std::optional<double> average_precision(const std::vector<ScoredBox>& predictions,
                                        const std::vector<GroundTruthBox>& truths, double iou_threshold = 0.5);

struct MapResult {
  /// Mean AP over evaluable classes, scaled ×100.
  double map50 = 0.0;
  double map50_raw = 0.0;
  std::map<int, double> per_class_ap;
};

/// Mean AP over classes [0, num_classes) that have at least one truth.
/// Throws Error(NoEvaluableClass).
MapResult map50(const std::map<int, std::vector<ScoredBox>>& predictions,
                const std::map<int, std::vector<GroundTruthBox>>& truths, int num_classes = 14,
                double iou_threshold = 0.5);

/// Free-text box labels to class ids.
class ClassAliases {
 public:
  explicit ClassAliases(std::map<std::string, int> aliases);

  /// The VinBigData class names plus common synonyms.
  static const ClassAliases& vinbigdata();
  static ClassAliases from_json(const Json& j);

  std::optional<int> lookup(std::string_view label) const;

  /// lowercase, '_' and '-' as spaces, single-spaced.
  static std::string normalize(std::string_view label);

 private:
  std::map<std::string, int> aliases_;
};

/// What the evaluator needs from one pipeline output record.
struct CasePrediction {
  std::string case_id;
  std::string report;
  std::vector<BBox> boxes;
  bool ok = true;
};

/// Fraction of no-finding cases with at least one abnormal box at or above
/// the confidence threshold. Throws Error(NoNoFindingCases).
double fp_rate_no_finding(const std::vector<CasePrediction>& outputs, const std::set<std::string>& no_finding_cases,
                          const ClassAliases& aliases, double confidence_threshold = 0.5);

struct TextScores {
  double bleu = 0.0;
  double rouge_l = 0.0;
};

/// Sentence BLEU-4 (add-one smoothing on orders 2-4, brevity penalty).
double bleu(const std::vector<std::string>& candidate, const std::vector<std::string>& reference);
/// LCS-based F-measure.
double rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference);
/// Throws Error(EmptyReference).
TextScores text_metrics(std::string_view candidate, std::string_view reference);

struct JudgeScores {
  double coverage = 1.0;
  double consistency = 1.0;
  double diagnostic = 1.0;
  double style = 1.0;
  double conciseness = 1.0;

  std::array<double, 5> values() const { return {coverage, consistency, diagnostic, style, conciseness}; }
};

double judge_aggregate(const JudgeScores& scores);

std::string judge_prompt(std::string_view candidate, std::string_view reference);
/// Parses the judge's JSON; values are clamped into [1, 10].
/// Throws Error(JudgeParseFailure).
JudgeScores parse_judge_response(const std::string& text);
JudgeScores judge_case(const std::string& case_id, std::string_view candidate, std::string_view reference,
                       Backend& backend);

// File formats.

/// CSV case_id,class_id,x_min,y_min,x_max,y_max with a header row.
std::vector<GroundTruthBox> load_ground_truth_csv(const std::filesystem::path& path);
/// JSONL {case_id, report}.
std::map<std::string, std::string> load_reference_reports(const std::filesystem::path& path);
/// Pipeline output JSONL. Boxes that fail validation are dropped.
std::vector<CasePrediction> load_predictions(const std::filesystem::path& path);

struct EvaluationInputs {
  std::vector<CasePrediction> outputs;
  std::optional<std::vector<GroundTruthBox>> truth_boxes;
  std::optional<std::map<std::string, std::string>> truth_reports;
  Backend* judge = nullptr;
};

struct EvaluationOptions {
  double iou_threshold = 0.5;
  double fp_confidence_threshold = 0.5;
  int num_classes = 14;
};

/// Evaluation report. "detection" is present only with box truth, "text"
/// only with report truth, "judge" only with a judge backend.
Json evaluate(const EvaluationInputs& inputs, const ClassAliases& aliases, const EvaluationOptions& options);

}  // namespace r4
