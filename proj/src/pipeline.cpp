// SPDX-License-Identifier: Apache-2.0
#include "r4/pipeline.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

namespace r4 {

// ---------------------------------------------------------------------------
// Configuration

std::unique_ptr<Backend> BackendSettings::make() const {
  switch (kind) {
    case Kind::Mock: return std::make_unique<MockBackend>(MockBackend::from_file(mock_script));
    case Kind::Http: return std::make_unique<HttpBackend>(http);
    case Kind::None: break;
  }
  throw Error(ErrorKind::InvalidConfig, "no backend configured");
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

BackendSettings backend_from_json(const Json& j, const std::filesystem::path& base) {
  BackendSettings b;
  if (j.is_null()) return b;
  const auto kind = j.value("kind", std::string("none"));
  if (kind == "mock") {
    b.kind = BackendSettings::Kind::Mock;
    b.mock_script = resolve(base, j.value("mock_script", std::string{}));
  } else if (kind == "http") {
    b.kind = BackendSettings::Kind::Http;
    b.http.url = j.at("url").get<std::string>();
    b.http.model = j.value("model", std::string{});
    b.http.response_path = j.value("response_path", b.http.response_path);
    b.http.api_key_env = j.value("api_key_env", b.http.api_key_env);
    b.http.timeout_seconds = j.value("timeout_s", b.http.timeout_seconds);
  } else if (kind != "none") {
    throw Error(ErrorKind::InvalidConfig, "unknown backend kind " + kind);
  }
  return b;
}

Json backend_to_json(const BackendSettings& b) {
  switch (b.kind) {
    case BackendSettings::Kind::Mock: return Json{{"kind", "mock"}, {"mock_script", b.mock_script.string()}};
    case BackendSettings::Kind::Http:
      return Json{{"kind", "http"},
                  {"url", b.http.url},
                  {"model", b.http.model},
                  {"response_path", b.http.response_path},
                  {"api_key_env", b.http.api_key_env},
                  {"timeout_s", b.http.timeout_seconds}};
    case BackendSettings::Kind::None: break;
  }
  return Json{{"kind", "none"}};
}

}  // namespace

void PipelineConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidConfig, m); };
  if (k < 1) fail("k must be >= 1");
  if (max_repairs < 0) fail("T must be >= 0");
  if (jobs < 1) fail("jobs must be >= 1");
  if (temperature < 0.0) fail("temperature must be >= 0");
  if (max_output < 1) fail("max_output must be positive");
  if (specializations.empty()) fail("at least one specialization is required");
  if (evaluation.iou_threshold <= 0.0 || evaluation.iou_threshold > 1.0) fail("iou_threshold must be in (0,1]");
  if (evaluation.num_classes < 1) fail("num_classes must be positive");
  if (backend.kind == BackendSettings::Kind::Mock && !std::filesystem::is_regular_file(backend.mock_script))
    fail("mock script not found: " + backend.mock_script.string());
  if (!routing_rules.empty() && !std::filesystem::is_regular_file(routing_rules))
    fail("routing rule file not found: " + routing_rules.string());
  if (!templates_dir.empty() && !std::filesystem::is_directory(templates_dir))
    fail("template directory not found: " + templates_dir.string());
  if (!lexicon.empty() && !std::filesystem::is_regular_file(lexicon))
    fail("lexicon not found: " + lexicon.string());
}

PipelineConfig PipelineConfig::from_json(const Json& j, const std::filesystem::path& base) {
  static const std::set<std::string> kKeys{
      "k",          "T",        "k_fewshot",      "base_seed",     "temperature",     "max_output",
      "refinement_enabled", "curate", "reflect_with_boxes", "concurrent_passes", "jobs", "specializations",
      "backend",    "judge_backend", "scoring",   "routing_rules", "templates_dir",   "memory",
      "lexicon",    "curation", "evaluation"};
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!kKeys.count(key)) throw Error(ErrorKind::InvalidConfig, "unknown config key " + key);

  PipelineConfig c;
  try {
    c.k = j.value("k", c.k);
    c.max_repairs = j.value("T", c.max_repairs);
    const auto k_fewshot = j.value("k_fewshot", static_cast<long long>(c.k_fewshot));
    if (k_fewshot < 0) throw Error(ErrorKind::InvalidConfig, "k_fewshot must be >= 0");
    c.k_fewshot = static_cast<std::size_t>(k_fewshot);
    c.base_seed = j.value("base_seed", c.base_seed);
    c.temperature = j.value("temperature", c.temperature);
    c.max_output = j.value("max_output", c.max_output);
    c.refinement_enabled = j.value("refinement_enabled", c.refinement_enabled);
    c.curate = j.value("curate", c.curate);
    c.reflect_with_boxes = j.value("reflect_with_boxes", c.reflect_with_boxes);
    c.concurrent_passes = j.value("concurrent_passes", c.concurrent_passes);
    c.jobs = j.value("jobs", c.jobs);
    if (j.contains("specializations")) c.specializations = j["specializations"].get<std::vector<std::string>>();
    if (j.contains("scoring") && j["scoring"].contains("weights"))
      c.weights = WeightTable::from_json(j["scoring"]["weights"]);
    c.backend = backend_from_json(j.value("backend", Json()), base);
    c.judge_backend = backend_from_json(j.value("judge_backend", Json()), base);
    c.routing_rules = resolve(base, j.value("routing_rules", std::string{}));
    c.templates_dir = resolve(base, j.value("templates_dir", std::string{}));
    c.lexicon = resolve(base, j.value("lexicon", std::string{}));
    if (auto m = j.find("memory"); m != j.end()) {
      c.memory_path = resolve(base, m->value("path", std::string{}));
      if (m->contains("capacity") && !(*m)["capacity"].is_null())
        c.memory_capacity = (*m)["capacity"].get<std::size_t>();
    }
    if (auto cu = j.find("curation"); cu != j.end()) {
      c.curation.max_entities = cu->value("max_entities", c.curation.max_entities);
      if (cu->contains("metadata_keys"))
        c.curation.metadata_keys = (*cu)["metadata_keys"].get<std::vector<std::string>>();
    }
    if (auto e = j.find("evaluation"); e != j.end()) {
      c.evaluation.iou_threshold = e->value("iou_threshold", c.evaluation.iou_threshold);
      c.evaluation.fp_confidence_threshold = e->value("fp_confidence_threshold", c.evaluation.fp_confidence_threshold);
      c.evaluation.num_classes = e->value("num_classes", c.evaluation.num_classes);
      c.evaluation.class_aliases = resolve(base, e->value("class_aliases", std::string{}));
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, e.what());
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::InvalidConfig, e.what());
  }
  return from_json(j, path.parent_path());
}

Json PipelineConfig::to_json() const {
  Json j{{"k", k},
         {"T", max_repairs},
         {"k_fewshot", k_fewshot},
         {"base_seed", base_seed},
         {"temperature", temperature},
         {"max_output", max_output},
         {"refinement_enabled", refinement_enabled},
         {"curate", curate},
         {"reflect_with_boxes", reflect_with_boxes},
         {"concurrent_passes", concurrent_passes},
         {"jobs", jobs},
         {"specializations", specializations},
         {"backend", backend_to_json(backend)},
         {"judge_backend", backend_to_json(judge_backend)},
         {"scoring", {{"weights", weights.to_json()}}},
         {"routing_rules", routing_rules.string()},
         {"templates_dir", templates_dir.string()},
         {"lexicon", lexicon.string()},
         {"curation", {{"max_entities", curation.max_entities}, {"metadata_keys", curation.metadata_keys}}},
         {"evaluation",
          {{"iou_threshold", evaluation.iou_threshold},
           {"fp_confidence_threshold", evaluation.fp_confidence_threshold},
           {"num_classes", evaluation.num_classes},
           {"class_aliases", evaluation.class_aliases.string()}}}};
  j["memory"] = Json{{"path", memory_path.string()},
                     {"capacity", memory_capacity ? Json(*memory_capacity) : Json(nullptr)}};
  return j;
}

// ---------------------------------------------------------------------------
// Results

Json CaseResult::to_json() const {
  Json trace = Json::array();
  for (const auto& ev : output.trace) {
    Json rec = ev.data.is_object() ? ev.data : Json{{"data", ev.data}};
    rec["event"] = ev.kind;
    trace.push_back(std::move(rec));
  }
  Json j{{"case_id", case_id},
         {"report", output.report.text},
         {"boxes", boxes_to_json(output.boxes)},
         {"trace", std::move(trace)},
         {"status", ok ? "ok" : "failed"}};
  if (ok)
    j["provenance"] = Json{{"pass_index", output.report.provenance.pass_index},
                           {"repair_iteration", output.report.provenance.repair_iteration}};
  if (error) j["error"] = *error;
  return j;
}

Json BatchSummary::to_json() const {
  return Json{{"cases", cases},
              {"succeeded", succeeded},
              {"failed", failed},
              {"total_repairs", total_repairs},
              {"mean_repairs", succeeded ? static_cast<double>(total_repairs) / static_cast<double>(succeeded) : 0.0},
              {"early_stops", early_stops},
              {"store_size_before", store_size_before},
              {"store_size_after", store_size_after}};
}

void write_results(const std::filesystem::path& path, const std::vector<CaseResult>& results) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  for (const auto& r : results) out << r.to_json().dump() << '\n';
  if (!out.flush()) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

RuleTable load_rules(const PipelineConfig& config) {
  return config.routing_rules.empty() ? RuleTable::defaults()
                                      : RuleTable::from_file(config.routing_rules, config.specializations);
}

EntityLexicon load_lexicon(const PipelineConfig& config) {
  if (config.lexicon.empty()) return EntityLexicon::defaults();
  try {
    return EntityLexicon::from_json(Json::parse(read_file(config.lexicon)));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, config.lexicon.string() + ": " + e.what());
  }
}

}  // namespace

Pipeline::Pipeline(PipelineConfig config, Backend& backend)
    : config_(std::move(config)),
      backend_(backend),
      rules_(load_rules(config_)),
      templates_(config_.templates_dir),
      lexicon_(load_lexicon(config_)) {
  config_.validate();
}

CaseResult Pipeline::run_case_impl(const CaseInput& c, const MemoryStore& snapshot) const {
  CaseResult result;
  result.case_id = c.case_id;
  auto& trace = result.output.trace;

  // Route
  RouterOptions router_opts;
  router_opts.refinement_enabled = config_.refinement_enabled;
  router_opts.specializations = config_.specializations;
  router_opts.seed = config_.base_seed;
  const auto routed = route(c, &backend_, rules_, router_opts);
  auto routing_event = to_json(routed.decision);
  const auto task = resolve_task(c, routed.decision);
  routing_event["task"] = task;
  trace.push_back({"routing", routing_event});
  if (routed.fallback_reason)
    trace.push_back({"warning", Json{{"stage", "router"}, {"message", *routed.fallback_reason}}});

  AgentContext ctx{backend_, templates_, task, routed.decision, config_.temperature, config_.base_seed,
                   config_.max_output};

  // Retrieve
  RetrieverOptions ropts;
  ropts.k = config_.k;
  ropts.k_fewshot = config_.k_fewshot;
  ropts.concurrent = config_.concurrent_passes;
  ropts.cue = config_.curation;
  try {
    result.drafts = generate_drafts(c, snapshot, ctx, ropts);
  } catch (const Error& e) {
    result.error = Error(ErrorKind::CaseFailed, e.what()).what();
    return result;
  }
  for (const auto& d : result.drafts) {
    auto ev = to_json(d);
    trace.push_back({"draft", std::move(ev)});
  }

  // Reflect and score every usable draft.
  const ReflectOptions reflect_opts{config_.reflect_with_boxes};
  std::vector<Candidate> candidates(result.drafts.size());
  {
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < result.drafts.size(); ++i) {
      const auto& d = result.drafts[i];
      candidates[i].pass_index = d.pass_index;
      candidates[i].is_error = !d.ok();
      if (!d.ok()) continue;
      auto work = [&, i] {
        candidates[i].issues = reflect(c, result.drafts[i].text, result.drafts[i].boxes, ctx,
                                       result.drafts[i].pass_index, 0, reflect_opts);
      };
      if (config_.concurrent_passes) workers.emplace_back(work);
      else work();
    }
    for (auto& w : workers) w.join();
  }
  for (const auto& cand : candidates) {
    Json ev{{"pass_index", cand.pass_index}, {"issues", to_json(cand.issues)}};
    ev["score"] = cand.is_error ? Json(nullptr) : Json(score(cand.issues, config_.weights));
    if (cand.is_error) ev["error"] = true;
    trace.push_back({"scoring", std::move(ev)});
  }

  std::size_t chosen = 0;
  try {
    chosen = select(candidates, config_.weights);
  } catch (const Error& e) {
    result.error = Error(ErrorKind::CaseFailed, e.what()).what();
    return result;
  }
  const auto& selected = result.drafts[chosen];
  trace.push_back({"selection", Json{{"pass_index", selected.pass_index},
                                     {"score", score(candidates[chosen].issues, config_.weights)}}});

  // Reflect-repair. The selected draft's scoring reflection is the t=0 reflection.
  auto loop = reflect_repair_loop(
      c, selected, ctx, config_.max_repairs,
      config_.reflect_with_boxes ? std::optional(candidates[chosen].issues) : std::nullopt, reflect_opts);
  for (auto& ev : loop.events) trace.push_back(std::move(ev));

  result.ok = true;
  result.repairs = loop.repairs;
  result.stopped_early = loop.state.stopped_early;
  result.output.report = {loop.state.draft, {selected.pass_index, loop.repairs}};
  result.output.boxes = std::move(loop.state.boxes);
  for (const auto& b : result.output.boxes)
    if (!is_valid(b)) throw Error(ErrorKind::DegenerateBox, "invalid box escaped validation");
  return result;
}

void Pipeline::curate_into(const CaseInput& c, CaseResult& result, MemoryStore& store) const {
  std::string task, spec;
  for (const auto& ev : result.output.trace)
    if (ev.kind == "routing") {
      task = ev.data.at("task").get<std::string>();
      spec = ev.data.at("specialization").get<std::string>();
    }
  const auto& item = store.curate(task, spec, c.query, c.history, c.metadata, result.output.report.text, lexicon_,
                                  config_.curation);
  result.output.trace.push_back(
      {"curation", Json{{"created_seq", item.created_seq}, {"cue", item.cue}, {"tags", item.tags}}});
}

CaseResult Pipeline::run_case(const CaseInput& c, MemoryStore& store, bool curate) const {
  auto result = run_case_impl(c, store);
  if (result.ok && curate) curate_into(c, result, store);
  return result;
}

BatchResult Pipeline::run_batch(const std::vector<CaseInput>& cases, MemoryStore& store,
                                const BatchOptions& options) const {
  BatchResult batch;
  batch.summary.cases = cases.size();
  batch.summary.store_size_before = store.size();
  batch.cases.resize(cases.size());

  auto after_case = [&](const CaseInput& c, CaseResult& r) {
    if (r.ok && options.curate) {
      curate_into(c, r, store);
      if (!options.persist_path.empty()) store.persist(options.persist_path);
    }
  };

  if (options.jobs <= 1) {
    for (std::size_t i = 0; i < cases.size(); ++i) {
      batch.cases[i] = run_case_impl(cases[i], store);
      after_case(cases[i], batch.cases[i]);
    }
  } else {
    std::mutex store_mutex;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < cases.size(); i = next++) {
        MemoryStore snapshot;
        {
          std::lock_guard lock(store_mutex);
          snapshot = store;
        }
        auto r = run_case_impl(cases[i], snapshot);
        std::lock_guard lock(store_mutex);
        after_case(cases[i], r);
        batch.cases[i] = std::move(r);
      }
    };
    std::vector<std::thread> threads;
    for (int t = 0; t < options.jobs; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  for (const auto& r : batch.cases) {
    if (r.ok) {
      ++batch.summary.succeeded;
      batch.summary.total_repairs += static_cast<std::size_t>(r.repairs);
      if (r.stopped_early) ++batch.summary.early_stops;
    } else {
      ++batch.summary.failed;
    }
  }
  batch.summary.store_size_after = store.size();
  return batch;
}

BatchResult Pipeline::run_batch(const std::filesystem::path& cases_jsonl, MemoryStore& store,
                                const BatchOptions& options) const {
  return run_batch(load_cases(cases_jsonl), store, options);
}

}  // namespace r4
