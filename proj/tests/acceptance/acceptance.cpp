// SPDX-License-Identifier: Apache-2.0
// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "r4/agents.hpp"
#include "r4/error.hpp"
#include "r4/pipeline.hpp"
#include "r4/simulate.hpp"
#include "test_support.hpp"

namespace r4::acceptance {
namespace {

using testing::behavior;
using testing::failing;
using testing::make_case;
using testing::TempDir;
using Clock = std::chrono::steady_clock;

constexpr auto kAny = std::nullopt;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------

/// The published table numbers need live proprietary models and the full
/// datasets. What can be checked here is that `r4 eval` computes the
/// declared metrics exactly, which this criterion does on a synthetic set
/// against independent oracles.
Outcome non_reproducibility_and_protocol_fidelity() {
  TempDir dir;
  dir.write("out.jsonl",
            R"({"case_id":"a","report":"No acute cardiopulmonary disease.","boxes":[],"status":"ok","trace":[]})"
            "\n"
            R"({"case_id":"b","report":"Right pleural effusion. Cardiomegaly.","boxes":[)"
            R"({"label":"pleural effusion","description":"","confidence":0.9,"x_min":0.5,"y_min":0.5,"x_max":0.9,"y_max":0.9},)"
            R"({"label":"Cardiomegaly","description":"","confidence":0.8,"x_min":0.0,"y_min":0.0,"x_max":0.2,"y_max":0.2},)"
            R"({"label":"cardiomegaly","description":"","confidence":0.6,"x_min":0.3,"y_min":0.4,"x_max":0.7,"y_max":0.8}],"status":"ok","trace":[]})"
            "\n"
            R"({"case_id":"c","report":"Left lower lobe nodule.","boxes":[)"
            R"({"label":"nodule","description":"","confidence":0.7,"x_min":0.1,"y_min":0.6,"x_max":0.2,"y_max":0.7}],"status":"ok","trace":[]})"
            "\n"
            R"({"case_id":"d","report":"Normal study.","boxes":[)"
            R"({"label":"nodule","description":"","confidence":0.75,"x_min":0.4,"y_min":0.4,"x_max":0.5,"y_max":0.5}],"status":"ok","trace":[]})"
            "\n");
  dir.write("gt.csv",
            "case_id,class_id,x_min,y_min,x_max,y_max\n"
            "a,14,,,,\n"
            "d,14,,,,\n"
            "b,10,0.5,0.5,0.9,0.9\n"
            "b,3,0.3,0.4,0.7,0.8\n"
            "c,8,0.1,0.6,0.2,0.7\n"
            "c,8,0.5,0.1,0.6,0.2\n");
  dir.write("refs.jsonl", R"({"case_id":"a","report":"No acute disease."})"
                          "\n"
                          R"({"case_id":"b","report":"Right pleural effusion and cardiomegaly."})"
                          "\n");
  dir.write("script.json", R"([{"role":"judge","case_id":"a","response":{"coverage":6,"consistency":8,"diagnostic":7,"style":9,"conciseness":5}},
                               {"role":"judge","case_id":"b","response":{"coverage":8,"consistency":8,"diagnostic":8,"style":8,"conciseness":8}}])");
  dir.write("config.json", R"({"backend": {"kind": "mock", "mock_script": "script.json"}})");

  std::ostringstream out, err;
  const int code = cli::run({"eval", "--outputs", (dir / "out.jsonl").string(), "--gt-boxes", (dir / "gt.csv").string(),
                             "--gt-reports", (dir / "refs.jsonl").string(), "--judge", "--config",
                             (dir / "config.json").string()},
                            out, err);
  if (code != 0) return {false, "eval exited " + std::to_string(code) + ": " + err.str()};
  const auto report = Json::parse(out.str());

  // Oracle side.
  using testing::oracle_average_precision;
  const double ap_effusion = *oracle_average_precision({{"b", 0.9, {0.5, 0.5, 0.9, 0.9}}}, {{"b", 10, {0.5, 0.5, 0.9, 0.9}}}, 0.5);
  const double ap_cardio = *oracle_average_precision({{"b", 0.8, {0, 0, 0.2, 0.2}}, {"b", 0.6, {0.3, 0.4, 0.7, 0.8}}},
                                                     {{"b", 3, {0.3, 0.4, 0.7, 0.8}}}, 0.5);
  const double ap_nodule = *oracle_average_precision({{"c", 0.7, {0.1, 0.6, 0.2, 0.7}}, {"d", 0.75, {0.4, 0.4, 0.5, 0.5}}},
                                                     {{"c", 8, {0.1, 0.6, 0.2, 0.7}}, {"c", 8, {0.5, 0.1, 0.6, 0.2}}}, 0.5);
  const double map_expected = 100.0 * (ap_effusion + ap_cardio + ap_nodule) / 3.0;
  const double fp_expected = 0.5;  // d carries a confident nodule box, a does not.

  auto rouge = [](const std::string& c, const std::string& r) {
    auto cs = tokenize_sequence(c), rs = tokenize_sequence(r);
    const double l = static_cast<double>(testing::oracle_lcs(cs, rs));
    if (l == 0) return 0.0;
    const double p = l / cs.size(), q = l / rs.size();
    return 2 * p * q / (p + q);
  };
  const double rouge_expected = (rouge("No acute cardiopulmonary disease.", "No acute disease.") +
                                 rouge("Right pleural effusion. Cardiomegaly.", "Right pleural effusion and cardiomegaly.")) /
                                2.0;
  const double judge_expected = (7.0 + 8.0) / 2.0;

  const auto& det = report["detection"];
  std::vector<std::string> problems;
  auto check = [&](const std::string& what, double got, double want) {
    if (std::abs(got - want) > 1e-9) problems.push_back(what + " " + fmt(got) + " != " + fmt(want));
  };
  check("map50", det["map50"].get<double>(), map_expected);
  check("map50_raw", det["map50_raw"].get<double>(), map_expected / 100.0);
  check("fp_rate_no_finding", det["fp_rate_no_finding"].get<double>(), fp_expected);
  check("rouge_l", report["text"]["rouge_l"].get<double>(), rouge_expected);
  check("judge overall", report["judge"]["overall_mean"].get<double>(), judge_expected);
  if (!problems.empty()) {
    std::string all;
    for (const auto& p : problems) all += p + "; ";
    return {false, all};
  }
  return {true,
          "published table values need live proprietary VLMs and full datasets and are not reproducible at desk "
          "scale; eval matches oracles on synthetic data (mAP50 " +
              fmt(map_expected, 5) + ", FP rate " + fmt(fp_expected, 3) + ", ROUGE-L " + fmt(rouge_expected, 5) +
              ", judge " + fmt(judge_expected, 3) + ")"};
}

Outcome metric_oracle_equivalence() {
  const auto start = Clock::now();
  std::mt19937_64 rng(20240611);
  std::uniform_int_distribution<int> grid(0, 9);
  auto box = [&] {
    const int x0 = grid(rng), y0 = grid(rng);
    const int w = 1 + static_cast<int>(rng() % 4), h = 1 + static_cast<int>(rng() % 4);
    return BoxGeometry{x0 / 10.0, y0 / 10.0, std::min(10, x0 + w) / 10.0, std::min(10, y0 + h) / 10.0};
  };
  auto jitter = [&](BoxGeometry g) {
    const double d = (static_cast<int>(rng() % 5) - 2) * 0.02;
    g.x_min = std::clamp(g.x_min + d, 0.0, g.x_max - 0.01);
    g.y_max = std::clamp(g.y_max - d, g.y_min + 0.01, 1.0);
    return g;
  };
  const int instances = 5000;
  double worst = 0.0;
  int mismatches = 0;
  for (int i = 0; i < instances; ++i) {
    std::vector<GroundTruthBox> truths;
    for (int t = 0, n = 1 + static_cast<int>(rng() % 4); t < n; ++t) truths.push_back({rng() % 3 ? "x" : "y", 0, box()});
    std::vector<ScoredBox> preds;
    for (int p = 0, n = static_cast<int>(rng() % 7); p < n; ++p) {
      const auto& src = truths[rng() % truths.size()];
      const std::string case_id = rng() % 5 ? src.case_id : (src.case_id == "x" ? "y" : "x");
      const auto geom = rng() % 3 ? jitter(src.geom) : box();
      preds.push_back({case_id, static_cast<double>(rng() % 6) / 5.0, geom});
    }
    const double got = *average_precision(preds, truths, 0.5);
    const double want = *testing::oracle_average_precision(preds, truths, 0.5);
    worst = std::max(worst, std::abs(got - want));
    if (std::abs(got - want) > 1e-9) ++mismatches;
  }
  const double elapsed = seconds_since(start);
  return {mismatches == 0 && elapsed < 10.0, std::to_string(instances) + " instances, " + std::to_string(mismatches) +
                                                 " mismatches, max |diff| " + fmt(worst) + ", " + fmt(elapsed, 3) + " s"};
}

Outcome iou_unit_values() {
  const BoxGeometry a{0, 0, 0.5, 0.5};
  const double same = iou(a, a), disjoint = iou(a, {0.5, 0.5, 1, 1}), quarter = iou(a, {0.25, 0.25, 0.75, 0.75});
  const double hand = 0.0625 / (0.25 + 0.25 - 0.0625);
  const bool ok = same == 1.0 && disjoint == 0.0 && std::abs(quarter - 0.142857) <= 1e-6 && std::abs(quarter - hand) < 1e-15;
  return {ok, "identity " + fmt(same) + ", disjoint " + fmt(disjoint) + ", quarter " + fmt(quarter, 9)};
}

Outcome scoring_properties() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> factor(1e-3, 1e3);
  std::uniform_real_distribution<double> weight(0.0, 5.0);
  const int n = 2000;
  int perm = 0, add = 0, mono = 0, scale = 0;
  for (int i = 0; i < n; ++i) {
    std::map<IssueType, double> custom;
    for (auto t : kAllIssueTypes)
      if (t != IssueType::System) custom[t] = weight(rng);
    const WeightTable w = i % 2 ? WeightTable{} : WeightTable(custom);
    auto a = testing::random_issues(rng), b = testing::random_issues(rng);
    auto shuffled = a;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    if (std::abs(score(shuffled, w) - score(a, w)) > 1e-9) ++perm;
    auto ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    if (std::abs(score(ab, w) - (score(a, w) + score(b, w))) > 1e-9) ++add;
    if (score(ab, w) > score(a, w) + 1e-12) ++mono;

    std::vector<Candidate> cands;
    for (int p = 0, k = 1 + static_cast<int>(rng() % 5); p < k; ++p)
      cands.push_back({p, testing::random_issues(rng, 5), rng() % 6 == 0});
    cands[rng() % cands.size()].is_error = false;
    if (select(cands, w) != select(cands, w.scaled(factor(rng)))) ++scale;
  }
  const bool ok = perm + add + mono + scale == 0;
  return {ok, std::to_string(n) + " random lists each; failures: permutation " + std::to_string(perm) + ", additivity " +
                  std::to_string(add) + ", monotonicity " + std::to_string(mono) + ", argmax scaling " +
                  std::to_string(scale)};
}

/// Backend whose reflector reports one material issue per "DEFECT" token in
/// the draft under review, and whose repairer removes a scripted number of
/// them. It lets the loop be checked against the content it produces.
class DefectBackend : public Backend {
 public:
  explicit DefectBackend(int fixes_per_repair) : fixes_(fixes_per_repair) {}

  static int count(const std::string& text) {
    int n = 0;
    for (std::size_t pos = text.find("DEFECT"); pos != std::string::npos; pos = text.find("DEFECT", pos + 1)) ++n;
    return n;
  }

 protected:
  std::string do_complete(const ModelRequest& req) override {
    const auto draft = between(req.prompt, "Draft report:\n", "\nBoxes:");
    if (req.key.role == Role::Reflector) return testing::issues_json(count(draft));
    if (req.key.role == Role::Repairer) {
      auto text = between(req.prompt, "Current report:\n", "\nCurrent boxes:");
      for (int i = 0; i < fixes_; ++i) {
        const auto pos = text.find("DEFECT");
        if (pos == std::string::npos) break;
        text.replace(pos, 6, "fixed");
      }
      return Json{{"report", text}}.dump();
    }
    return "[]";
  }

 private:
  static std::string between(const std::string& s, const std::string& open, const std::string& close) {
    const auto a = s.find(open);
    if (a == std::string::npos) return s;
    const auto b = s.find(close, a + open.size());
    return s.substr(a + open.size(), b == std::string::npos ? std::string::npos : b - a - open.size());
  }
  int fixes_;
};

Outcome loop_bounds() {
  std::mt19937_64 rng(4242);
  TemplateLibrary templates;
  const RoutingDecision routing{"general", Mode::Cot, {Flag::RequireBboxes}, RoutingSource::Heuristic};
  int runs = 0, bound_violations = 0, early_mismatches = 0;

  // Scripted reflector sequences: per iteration, material count (possibly 0)
  // plus optional system-only noise.
  for (int trial = 0; trial < 600; ++trial) {
    const int T = static_cast<int>(rng() % 5);
    std::vector<int> material(T + 1);
    for (auto& m : material) m = rng() % 3 == 0 ? 0 : 1 + static_cast<int>(rng() % 3);
    MockBackend mock;
    for (int t = 0; t <= T; ++t) {
      Json issues = Json::parse(testing::issues_json(material[t]));
      if (rng() % 2) issues.push_back({{"type", "system"}, {"message", "noise"}});
      mock.add(behavior(Role::Reflector, kAny, kAny, t, issues.dump()));
    }
    mock.add(behavior(Role::Repairer, kAny, kAny, kAny, R"({"report": "revised"})"));
    AgentContext ctx{mock, templates, "cxr_report", routing};
    Draft d;
    d.text = "draft";
    const auto result = reflect_repair_loop(make_case("c"), d, ctx, T);
    ++runs;

    int first_clean = -1;
    for (int t = 0; t <= T; ++t)
      if (material[t] == 0) {
        first_clean = t;
        break;
      }
    // Reflections happen at t = 0..T-1 (and t = 0 even when T = 0).
    const int last_reflected = std::max(0, T - 1);
    const bool expect_early = first_clean >= 0 && first_clean <= last_reflected;
    const int expect_repairs = expect_early ? first_clean : T;
    if (result.repairs > T) ++bound_violations;
    if (result.state.stopped_early != expect_early || result.repairs != expect_repairs) ++early_mismatches;
  }

  // Strictly decreasing issues: each repair removes at least one defect, so
  // T = initial count suffices.
  int convergence_failures = 0;
  for (int n = 1; n <= 6; ++n) {
    for (int fixes = 1; fixes <= 2; ++fixes) {
      DefectBackend backend(fixes);
      AgentContext ctx{backend, templates, "cxr_report", routing};
      Draft d;
      for (int i = 0; i < n; ++i) d.text += "DEFECT" + std::to_string(i) + " ";
      const auto result = reflect_repair_loop(make_case("c"), d, ctx, n);
      ++runs;
      if (result.repairs > n) ++bound_violations;
      const auto after = reflect(make_case("c"), result.state.draft, result.state.boxes, ctx, 0, n + 1);
      if (has_material(after) || DefectBackend::count(result.state.draft) != 0) ++convergence_failures;
    }
  }
  const bool ok = bound_violations == 0 && early_mismatches == 0 && convergence_failures == 0;
  return {ok, std::to_string(runs) + " runs; bound violations " + std::to_string(bound_violations) +
                  ", early-stop mismatches " + std::to_string(early_mismatches) + ", non-converged " +
                  std::to_string(convergence_failures)};
}

Outcome pass_at_k_monotonicity() {
  const auto start = Clock::now();
  const auto model = ErrorModel::load(std::filesystem::path(R4_SOURCE_DIR) / "data" / "error_model.json");
  int monotone = 0, diminishing = 0;
  std::string curves;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto rows = simulate_pass_at_k(model, WeightTable{}, {3, 10000, seed});
    const double s1 = rows[0].mean_best_score, s2 = rows[1].mean_best_score, s3 = rows[2].mean_best_score;
    monotone += s1 <= s2 && s2 <= s3;
    diminishing += (s2 - s1) > (s3 - s2);
    if (seed == 1) curves = fmt(s1, 4) + " / " + fmt(s2, 4) + " / " + fmt(s3, 4);
  }
  const double elapsed = seconds_since(start);
  const bool ok = monotone == 10 && diminishing >= 8 && elapsed < 30.0;
  return {ok, "monotone in " + std::to_string(monotone) + "/10 seeds, diminishing gain in " +
                  std::to_string(diminishing) + "/10 (seed 1 curve " + curves + "), " + fmt(elapsed, 3) + " s"};
}

MockBackend batch_backend() {
  return MockBackend({behavior(Role::Retriever, kAny, kAny, kAny, R"({"report": "Right pleural effusion. No pneumothorax."})"),
                      behavior(Role::Retriever, "c2", 1, kAny, R"({"report": "Small right pleural effusion."})"),
                      behavior(Role::BBox, kAny, kAny, kAny,
                               R"([{"label":"pleural effusion","description":"right","confidence":0.81,"x_min":0.55,"y_min":0.5,"x_max":0.95,"y_max":0.9}])"),
                      behavior(Role::Reflector, kAny, kAny, kAny, "[]"),
                      behavior(Role::Reflector, "c2", 0, 0, testing::issues_json(1, "laterality")),
                      behavior(Role::Reflector, "c2", 2, 0, testing::issues_json(2)),
                      behavior(Role::Reflector, "c2", 1, 0, testing::issues_json(1, "unsupported")),
                      behavior(Role::Repairer, kAny, kAny, kAny, R"({"report": "Small right pleural effusion, repaired."})")});
}

Outcome self_improvement() {
  auto mock = batch_backend();
  PipelineConfig cfg;
  Pipeline pipeline(cfg, mock);
  auto c1 = make_case("c1", "CXR", {"shortness of breath"}, "Is there a pleural effusion?");
  auto c2 = make_case("c2", "CXR", {"follow-up of known effusion"}, "Has the right effusion changed?");
  c1.mode_hint = c2.mode_hint = Mode::Few;
  MemoryStore store;
  const auto batch = pipeline.run_batch({c1, c2}, store, {});
  if (batch.cases.size() != 2 || !batch.cases[0].ok || !batch.cases[1].ok) return {false, "batch did not complete"};
  const auto used1 = batch.cases[0].drafts.at(0).meta.fewshots_used;
  const auto used2 = batch.cases[1].drafts.at(0).meta.fewshots_used;
  const auto growth = batch.summary.store_size_after - batch.summary.store_size_before;
  const bool ok = used1 == 0 && used2 >= 1 && growth == 2 && store.size() == 2;
  return {ok, "fewshots_used case1 " + std::to_string(used1) + ", case2 " + std::to_string(used2) + "; store growth " +
                  std::to_string(growth)};
}

Outcome deterministic_replay() {
  auto run_once = [](TempDir& dir) {
    dir.write("img.png", "PNG");
    std::string cases;
    for (int i = 0; i < 5; ++i)
      cases += R"({"case_id":"c)" + std::to_string(i) + R"(","image_path":"img.png","query":"effusion?","metadata":{"modality":"CXR"},"mode_hint":"few"})" "\n";
    dir.write("cases.jsonl", cases);
    Json script = Json::array(
        {{{"role", "retriever"}, {"response", {{"report", "Right pleural effusion."}}}},
         {{"role", "retriever"}, {"pass_index", 1}, {"latency_ms", 5}, {"response", {{"report", "Left effusion."}}}},
         {{"role", "bbox"}, {"response", Json::parse(R"([{"label":"effusion","confidence":0.7,"x_min":0.1,"y_min":0.1,"x_max":0.4,"y_max":0.5}])")}},
         {{"role", "reflector"}, {"response", Json::parse(testing::issues_json(1, "laterality"))}},
         {{"role", "reflector"}, {"pass_index", 1}, {"latency_ms", 3}, {"response", Json::array()}},
         {{"role", "reflector"}, {"case_id", "c3"}, {"failure", "malformed_json"}},
         {{"role", "repairer"}, {"response", {{"report", "Right pleural effusion, revised."}}}},
         {{"role", "retriever"}, {"case_id", "c4"}, {"failure", "transport_error"}}});
    dir.write("script.json", script.dump());
    dir.write("config.json", R"({"k": 3, "T": 2, "base_seed": 5, "backend": {"kind": "mock", "mock_script": "script.json"},
                                 "memory": {"path": "memory.json"}})");
    std::ostringstream out, err;
    cli::run({"run", "--cases", (dir / "cases.jsonl").string(), "--config", (dir / "config.json").string(), "--out",
              (dir / "out.jsonl").string()},
             out, err);
    return std::make_pair(testing::slurp(dir / "out.jsonl"), testing::slurp(dir / "memory.json"));
  };
  TempDir a, b;
  const auto first = run_once(a);
  const auto second = run_once(b);
  const bool ok = !first.first.empty() && first.first == second.first && first.second == second.second &&
                  MemoryStore::load(a / "memory.json") == MemoryStore::load(b / "memory.json");
  return {ok, "outputs " + std::to_string(first.first.size()) + " bytes " + (first.first == second.first ? "identical" : "DIFFER") +
                  ", memory stores " + (first.second == second.second ? "identical" : "DIFFER")};
}

Outcome memory_retrieval() {
  std::mt19937_64 rng(555);
  const std::vector<std::string> vocab{"effusion", "left",  "right",  "opacity", "nodule", "edema",   "cxr",
                                       "ct",       "chest", "lobe",   "mass",    "normal", "fracture", "atelectasis"};
  const std::vector<std::string> tasks{"cxr_report", "longitudinal_followup"};
  const std::vector<std::string> specs{"chest_radiology", "general", "oncology_followup"};
  auto words = [&](int max) {
    std::string s;
    for (int i = 0, n = 1 + static_cast<int>(rng() % max); i < n; ++i) s += vocab[rng() % vocab.size()] + " ";
    return s;
  };
  const int stores = 600;
  int mismatches = 0;
  std::size_t largest = 0;
  for (int s = 0; s < stores; ++s) {
    const std::optional<std::size_t> capacity = rng() % 4 == 0 ? std::optional<std::size_t>(1 + rng() % 400) : std::nullopt;
    MemoryStore store(capacity);
    const std::size_t n = rng() % 1001;
    for (std::size_t i = 0; i < n; ++i) {
      std::set<std::string> tags;
      if (rng() % 3 == 0) tags.insert(vocab[rng() % vocab.size()]);
      store.insert({tasks[rng() % tasks.size()], specs[rng() % specs.size()], words(5), "r", tags, 0});
    }
    largest = std::max(largest, store.size());
    for (int q = 0; q < 3; ++q) {
      const auto cue = words(4);
      const auto& task = tasks[rng() % tasks.size()];
      const auto& spec = specs[rng() % specs.size()];
      const std::size_t k = rng() % 8;
      std::vector<std::int64_t> got;
      for (const auto& m : top_k(store, cue, task, spec, k)) got.push_back(m.created_seq);
      if (got != testing::oracle_top_k(store.items(), cue, task, spec, k)) ++mismatches;
    }
  }
  return {mismatches == 0, std::to_string(stores) + " stores (largest " + std::to_string(largest) + " items), " +
                               std::to_string(stores * 3) + " queries, " + std::to_string(mismatches) + " mismatches"};
}

Outcome text_metric_identities() {
  std::mt19937_64 rng(31337);
  int identity_failures = 0;
  for (int i = 0; i < 100; ++i) {
    const auto r = testing::random_report(rng);
    const auto s = text_metrics(r, r);
    if (s.bleu != 1.0 || s.rouge_l != 1.0) ++identity_failures;
  }
  const double hand = text_metrics("no acute disease", "no acute cardiopulmonary disease").rouge_l;
  const double hand_expected = 2 * (1.0 * 0.75) / (1.0 + 0.75);
  const bool judge_ok = judge_aggregate({8, 8, 8, 8, 8}) == 8.0 && judge_aggregate({6, 8, 7, 9, 5}) == 7.0 &&
                        judge_aggregate({1, 1, 1, 1, 1}) == 1.0;
  const bool ok = identity_failures == 0 && std::abs(hand - 0.857) <= 1e-3 && std::abs(hand - hand_expected) < 1e-12 &&
                  judge_ok;
  return {ok, "identity failures " + std::to_string(identity_failures) + "/100, ROUGE-L hand case " + fmt(hand, 6) +
                  ", judge means " + (judge_ok ? "exact" : "WRONG")};
}

Outcome robustness() {
  // Reflector output that cannot be used must not abort a case.
  const std::vector<std::function<ScriptedBehavior()>> bad_reflections{
      [] { return behavior(Role::Reflector, kAny, kAny, kAny, "The report looks reasonable overall."); },
      [] { return behavior(Role::Reflector, kAny, kAny, kAny, R"({"type": "missing", "message": "not a list"})"); },
      [] { return behavior(Role::Reflector, kAny, kAny, kAny, R"([{"type": "missing"}, 7, "x"])"); },
      [] { return behavior(Role::Reflector, kAny, kAny, kAny, R"([{"type": "vibes", "message": "odd"}])"); },
      [] { return failing(Role::Reflector, kAny, kAny, kAny, ScriptedFailure::MalformedJson); },
      [] { return failing(Role::Reflector, kAny, kAny, kAny, ScriptedFailure::Empty); },
      [] { return failing(Role::Reflector, kAny, kAny, kAny, ScriptedFailure::TransportError); },
  };
  int reflector_aborts = 0, system_fallbacks = 0;
  for (const auto& bad : bad_reflections) {
    MockBackend mock({behavior(Role::Retriever, kAny, kAny, kAny, "Report."), behavior(Role::BBox, kAny, kAny, kAny, "[]"),
                      behavior(Role::Repairer, kAny, kAny, kAny, R"({"report": "Report, revised."})"), bad()});
    Pipeline pipeline(PipelineConfig{}, mock);
    MemoryStore store;
    const auto r = pipeline.run_case(make_case("c"), store);
    if (!r.ok) ++reflector_aborts;
    for (const auto& e : r.output.trace)
      if (e.kind == "scoring" && e.data.dump().find("\"system\"") != std::string::npos) {
        ++system_fallbacks;
        break;
      }
  }

  // Router output that cannot be used must fall back to the heuristic.
  const std::vector<std::string> bad_routes{"prose",
                                            "",
                                            "[1, 2]",
                                            R"({"s": "dermatology", "m": "cot", "F": []})",
                                            R"({"s": "general", "m": "loud", "F": []})",
                                            R"({"s": "general", "m": "cot", "F": ["teleport"]})",
                                            R"({"s": 3, "m": "cot", "F": []})",
                                            R"({"s": "general", "m": "cot", "F": "require_bboxes"})",
                                            R"({"m": "cot", "F": []})",
                                            "{\"unterminated\": [1, 2"};
  RouterOptions refine;
  refine.refinement_enabled = true;
  int router_mismatches = 0;
  const std::vector<CaseInput> cases{make_case("a", "CT", {"oncology"}), make_case("b", "CXR"), make_case("c", "MR"),
                                     make_case("d", "CXR", {"coronary disease"})};
  for (const auto& text : bad_routes) {
    for (const auto& c : cases) {
      MockBackend mock;
      if (text.empty()) mock.add(failing(Role::Router, kAny, kAny, kAny, ScriptedFailure::Empty));
      else mock.add(behavior(Role::Router, kAny, kAny, kAny, text));
      const auto r = route(c, &mock, RuleTable::defaults(), refine);
      if (!(r.decision == heuristic_route(c, RuleTable::defaults())) || !r.fallback_reason) ++router_mismatches;
    }
  }
  const bool ok = reflector_aborts == 0 && system_fallbacks > 0 && router_mismatches == 0;
  return {ok, std::to_string(bad_reflections.size()) + " malformed reflector scripts: " + std::to_string(reflector_aborts) +
                  " aborted (" + std::to_string(system_fallbacks) + " via system issue); " +
                  std::to_string(bad_routes.size() * cases.size()) + " malformed router replies: " +
                  std::to_string(router_mismatches) + " without heuristic fallback"};
}

}  // namespace
}  // namespace r4::acceptance

int main() {
  using namespace r4::acceptance;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"non-reproducibility stated; protocol fidelity", non_reproducibility_and_protocol_fidelity},
      {"metric oracle equivalence", metric_oracle_equivalence},
      {"IoU unit values", iou_unit_values},
      {"scoring properties", scoring_properties},
      {"loop bounds", loop_bounds},
      {"pass@k monotonicity", pass_at_k_monotonicity},
      {"self-improvement observability", self_improvement},
      {"deterministic replay", deterministic_replay},
      {"memory retrieval correctness", memory_retrieval},
      {"text metric identities", text_metric_identities},
      {"robustness", robustness},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail << "\n";
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed\n";
  return failures == 0 ? 0 : 1;
}
