// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "r4/error.hpp"
#include "r4/evaluator.hpp"
#include "test_support.hpp"

namespace r4 {
namespace {

using testing::behavior;
using testing::TempDir;

const BoxGeometry kA{0.1, 0.1, 0.3, 0.3};
const BoxGeometry kB{0.6, 0.6, 0.8, 0.8};
const BoxGeometry kFar{0.0, 0.8, 0.1, 0.9};

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorKind::InvalidConfig;
}

TEST(AveragePrecision, Examples) {
  EXPECT_DOUBLE_EQ(*average_precision({{"c", 0.9, kA}}, {{"c", 0, kA}}), 1.0);
  EXPECT_DOUBLE_EQ(*average_precision({{"c", 0.9, kFar}}, {{"c", 0, kA}}), 0.0);
  EXPECT_FALSE(average_precision({{"c", 0.9, kA}}, {}).has_value());
}

TEST(AveragePrecision, HitMissHit) {
  // Points (r, p): (.5, 1), (.5, .5), (1, .667). Interpolated area 1*.5 + .667*.5.
  auto ap = average_precision({{"c", 0.9, kA}, {"c", 0.8, kFar}, {"c", 0.7, kB}}, {{"c", 0, kA}, {"c", 0, kB}});
  EXPECT_NEAR(*ap, 0.5 + 0.5 * (2.0 / 3.0), 1e-9);
}

TEST(AveragePrecision, MatchesOnlyWithinCase) {
  EXPECT_DOUBLE_EQ(*average_precision({{"other", 0.9, kA}}, {{"c", 0, kA}}), 0.0);
}

TEST(AveragePrecision, DuplicateDetectionIsFalsePositive) {
  auto ap = average_precision({{"c", 0.9, kA}, {"c", 0.8, kA}}, {{"c", 0, kA}});
  EXPECT_DOUBLE_EQ(*ap, 1.0);
  auto late = average_precision({{"c", 0.9, kFar}, {"c", 0.8, kA}}, {{"c", 0, kA}});
  EXPECT_DOUBLE_EQ(*late, 0.5);
}

TEST(AveragePrecision, MatchesOracleAndIsRankOnly) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> grid(0, 8);
  auto box = [&] {
    int x0 = grid(rng), y0 = grid(rng);
    int w = 1 + static_cast<int>(rng() % 3), h = 1 + static_cast<int>(rng() % 3);
    return BoxGeometry{x0 / 10.0, y0 / 10.0, std::min(1.0, (x0 + w) / 10.0), std::min(1.0, (y0 + h) / 10.0)};
  };
  for (int i = 0; i < 500; ++i) {
    std::vector<ScoredBox> preds;
    std::vector<GroundTruthBox> truths;
    for (int t = 0, n = 1 + static_cast<int>(rng() % 4); t < n; ++t) truths.push_back({rng() % 2 ? "a" : "b", 0, box()});
    for (int p = 0, n = static_cast<int>(rng() % 7); p < n; ++p) {
      const auto& src = truths[rng() % truths.size()];
      preds.push_back({rng() % 4 ? src.case_id : "b", (rng() % 5) / 4.0, rng() % 2 ? src.geom : box()});
    }
    const auto got = average_precision(preds, truths);
    ASSERT_NEAR(*got, *testing::oracle_average_precision(preds, truths, 0.5), 1e-9);
    auto squashed = preds;
    for (auto& p : squashed) p.confidence = p.confidence * p.confidence * 0.5 + 0.1;
    EXPECT_NEAR(*average_precision(squashed, truths), *got, 1e-12);
  }
}

TEST(Map50, Examples) {
  std::map<int, std::vector<GroundTruthBox>> truths{{0, {{"c", 0, kA}}}, {1, {{"c", 1, kB}}}};
  std::map<int, std::vector<ScoredBox>> preds{{0, {{"c", 0.9, kA}}}, {1, {{"c", 0.9, kFar}}}};
  auto m = map50(preds, truths);
  EXPECT_DOUBLE_EQ(m.map50, 50.0);
  EXPECT_DOUBLE_EQ(m.map50_raw, 0.5);
  preds[1] = {{"c", 0.9, kB}};
  EXPECT_DOUBLE_EQ(map50(preds, truths).map50, 100.0);

  std::map<int, std::vector<GroundTruthBox>> one{{4, {{"c", 4, kA}, {"c", 4, kB}}}};
  std::map<int, std::vector<ScoredBox>> hmh{{4, {{"c", 0.9, kA}, {"c", 0.8, kFar}, {"c", 0.7, kB}}}};
  EXPECT_NEAR(map50(hmh, one).map50, 100.0 * (0.5 + 1.0 / 3.0), 1e-9);
}

TEST(Map50, ClassesWithoutTruthIgnored) {
  std::map<int, std::vector<GroundTruthBox>> truths{{0, {{"c", 0, kA}}}};
  std::map<int, std::vector<ScoredBox>> preds{{0, {{"c", 0.9, kA}}}, {5, {{"c", 0.9, kB}}}};
  auto m = map50(preds, truths);
  EXPECT_DOUBLE_EQ(m.map50, 100.0);
  EXPECT_EQ(m.per_class_ap.size(), 1u);
  EXPECT_EQ(kind_of([] { map50({}, {}); }), ErrorKind::NoEvaluableClass);
}

TEST(FpRate, Examples) {
  const auto& aliases = ClassAliases::vinbigdata();
  std::vector<CasePrediction> outs{{"n1", "", {{"nodule", "", 0.9, kA}}},
                                   {"n2", "", {}},
                                   {"n3", "", {{"nodule", "", 0.2, kA}}},
                                   {"n4", "", {}}};
  std::set<std::string> nf{"n1", "n2", "n3", "n4"};
  EXPECT_DOUBLE_EQ(fp_rate_no_finding(outs, nf, aliases), 0.25);
  outs[0].boxes.clear();
  EXPECT_DOUBLE_EQ(fp_rate_no_finding(outs, nf, aliases), 0.0);
  EXPECT_EQ(kind_of([&] { fp_rate_no_finding(outs, {}, aliases); }), ErrorKind::NoNoFindingCases);
}

TEST(ClassAliases, Lookup) {
  const auto& a = ClassAliases::vinbigdata();
  EXPECT_EQ(a.lookup("Cardiomegaly"), 3);
  EXPECT_EQ(a.lookup("pleural_effusion"), 10);
  EXPECT_EQ(a.lookup("Nodule/Mass"), 8);
  EXPECT_FALSE(a.lookup("unicorn").has_value());
  EXPECT_EQ(ClassAliases::normalize("  Pleural-Effusion  "), "pleural effusion");
}

TEST(TextMetrics, Examples) {
  auto same = text_metrics("Right pleural effusion.", "Right pleural effusion.");
  EXPECT_DOUBLE_EQ(same.bleu, 1.0);
  EXPECT_DOUBLE_EQ(same.rouge_l, 1.0);
  auto disjoint = text_metrics("alpha beta gamma delta", "one two three four");
  EXPECT_LT(disjoint.bleu, 0.05);
  EXPECT_DOUBLE_EQ(disjoint.rouge_l, 0.0);
  EXPECT_NEAR(text_metrics("no acute disease", "no acute cardiopulmonary disease").rouge_l, 0.857, 1e-3);
  EXPECT_EQ(kind_of([] { text_metrics("x", "  "); }), ErrorKind::EmptyReference);
  EXPECT_DOUBLE_EQ(text_metrics("", "reference").bleu, 0.0);
}

TEST(TextMetrics, RougeMatchesLcsOracle) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 300; ++i) {
    const auto cand = testing::random_report(rng), ref = testing::random_report(rng);
    const auto c = tokenize_sequence(cand), r = tokenize_sequence(ref);
    const double lcs = static_cast<double>(testing::oracle_lcs(c, r));
    const double p = lcs / c.size(), rec = lcs / r.size();
    const double f = lcs == 0 ? 0.0 : 2 * p * rec / (p + rec);
    EXPECT_NEAR(text_metrics(cand, ref).rouge_l, f, 1e-12);
    const auto b = text_metrics(cand, ref).bleu;
    EXPECT_GE(b, 0.0);
    EXPECT_LE(b, 1.0);
  }
}

TEST(TextMetrics, BleuHandComputed) {
  // cand "a b c d e", ref "a b c d f": p1 4/5, p2 (3+1)/(4+1), p3 (2+1)/(3+1), p4 (1+1)/(2+1), BP 1.
  const double expected = std::exp((std::log(0.8) + std::log(0.8) + std::log(0.75) + std::log(2.0 / 3.0)) / 4);
  EXPECT_NEAR(bleu({"a", "b", "c", "d", "e"}, {"a", "b", "c", "d", "f"}), expected, 1e-12);
  // Shorter candidate pays exp(1 - r/c).
  const double bp = std::exp(1.0 - 4.0 / 2.0);
  const double short_expected = bp * std::exp((std::log(1.0) + std::log(1.0) + std::log(1.0) + std::log(1.0)) / 4);
  EXPECT_NEAR(bleu({"a", "b"}, {"a", "b", "c", "d"}), short_expected, 1e-12);
}

TEST(Judge, Aggregate) {
  EXPECT_DOUBLE_EQ(judge_aggregate({8, 8, 8, 8, 8}), 8.0);
  EXPECT_DOUBLE_EQ(judge_aggregate({6, 8, 7, 9, 5}), 7.0);
  EXPECT_DOUBLE_EQ(judge_aggregate({1, 1, 1, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(judge_aggregate({9, 5, 7, 6, 8}), judge_aggregate({6, 8, 7, 9, 5}));
}

TEST(Judge, ParseAndClamp) {
  MockBackend mock({behavior(Role::Judge, "c", 0, 0,
                             R"({"coverage": 8, "consistency": 7, "diagnostic": 6, "style": 11, "conciseness": 0})")});
  auto s = judge_case("c", "cand", "ref", mock);
  EXPECT_DOUBLE_EQ(s.coverage, 8);
  EXPECT_DOUBLE_EQ(s.style, 10);
  EXPECT_DOUBLE_EQ(s.conciseness, 1);
  const auto prompt = mock.transcript().at(0).prompt;
  for (const char* aspect : {"coverage", "consistency", "diagnostic", "style", "conciseness"})
    EXPECT_NE(prompt.find(aspect), std::string::npos);
  EXPECT_EQ(kind_of([] { parse_judge_response("prose"); }), ErrorKind::JudgeParseFailure);
  EXPECT_EQ(kind_of([] { parse_judge_response(R"({"coverage": 8})"); }), ErrorKind::JudgeParseFailure);
}

TEST(Evaluate, SplitBlocksFromFiles) {
  TempDir dir;
  dir.write("out.jsonl",
            R"({"case_id":"a","report":"Right pleural effusion.","boxes":[{"label":"pleural effusion","description":"","confidence":0.9,"x_min":0.6,"y_min":0.6,"x_max":0.8,"y_max":0.8}],"status":"ok","trace":[]})"
            "\n"
            R"({"case_id":"n","report":"Normal.","boxes":[{"label":"nodule","description":"","confidence":0.7,"x_min":0.1,"y_min":0.1,"x_max":0.2,"y_max":0.2}],"status":"ok","trace":[]})"
            "\n");
  dir.write("gt.csv", "case_id,class_id,x_min,y_min,x_max,y_max\na,10,0.6,0.6,0.8,0.8\nn,14,,,,\n");
  dir.write("refs.jsonl", R"({"case_id":"a","report":"Right pleural effusion."})"
                          "\n");
  EvaluationInputs in;
  in.outputs = load_predictions(dir / "out.jsonl");
  in.truth_boxes = load_ground_truth_csv(dir / "gt.csv");
  auto only_boxes = evaluate(in, ClassAliases::vinbigdata(), {});
  EXPECT_TRUE(only_boxes.contains("detection"));
  EXPECT_FALSE(only_boxes.contains("text"));
  EXPECT_DOUBLE_EQ(only_boxes["detection"]["map50"].get<double>(), 100.0);
  EXPECT_DOUBLE_EQ(only_boxes["detection"]["fp_rate_no_finding"].get<double>(), 1.0);

  in.truth_reports = load_reference_reports(dir / "refs.jsonl");
  auto both = evaluate(in, ClassAliases::vinbigdata(), {});
  EXPECT_TRUE(both.contains("text"));
  EXPECT_DOUBLE_EQ(both["text"]["rouge_l"].get<double>(), 1.0);
  EXPECT_FALSE(both.contains("judge"));
}

TEST(Evaluate, JudgeFailuresCounted) {
  MockBackend mock({behavior(Role::Judge, "a", std::nullopt, std::nullopt, "not json"),
                    behavior(Role::Judge, "b", std::nullopt, std::nullopt,
                             R"({"coverage":6,"consistency":8,"diagnostic":7,"style":9,"conciseness":5})")});
  EvaluationInputs in;
  in.outputs = {{"a", "x", {}}, {"b", "y", {}}};
  in.truth_reports = std::map<std::string, std::string>{{"a", "x"}, {"b", "y"}};
  in.judge = &mock;
  auto j = evaluate(in, ClassAliases::vinbigdata(), {})["judge"];
  EXPECT_EQ(j["n_failed"], 1);
  EXPECT_EQ(j["n_scored"], 1);
  EXPECT_DOUBLE_EQ(j["overall_mean"].get<double>(), 7.0);
}

}  // namespace
}  // namespace r4
