// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "r4/evaluator.hpp"
#include "r4/pipeline.hpp"
#include "r4/simulate.hpp"

namespace r4::cli {

namespace {

struct RunArgs {
  std::string cases;
  std::string config;
  std::string mock_script;
  std::string out = "r4_outputs.jsonl";
  std::string summary;
  bool no_curate = false;
  std::optional<std::int64_t> seed;
  int jobs = 0;
};

struct EvalArgs {
  std::string outputs;
  std::string gt_boxes;
  std::string gt_reports;
  std::string config;
  std::string out;
  bool judge = false;
};

struct MemoryArgs {
  std::string config;
  std::string store;
  std::int64_t show_id = 0;
  std::size_t keep = 0;
  std::string export_path;
};

struct SimulateArgs {
  std::string error_model;
  std::string config;
  std::string out;
  int k_max = 3;
  int trials = 10000;
  std::uint64_t seed = 0;
};

void print_summary(std::ostream& out, const BatchSummary& s) {
  char line[96];
  out << "+----------------------+----------+\n";
  auto row = [&](const char* name, double value, bool integral = true) {
    if (integral) std::snprintf(line, sizeof line, "| %-20s | %8.0f |\n", name, value);
    else std::snprintf(line, sizeof line, "| %-20s | %8.3f |\n", name, value);
    out << line;
  };
  row("cases", static_cast<double>(s.cases));
  row("succeeded", static_cast<double>(s.succeeded));
  row("failed", static_cast<double>(s.failed));
  row("total repairs", static_cast<double>(s.total_repairs));
  row("mean repairs", s.succeeded ? static_cast<double>(s.total_repairs) / static_cast<double>(s.succeeded) : 0.0,
      false);
  row("early stops", static_cast<double>(s.early_stops));
  row("memory before", static_cast<double>(s.store_size_before));
  row("memory after", static_cast<double>(s.store_size_after));
  out << "+----------------------+----------+\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  f << text;
}

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  PipelineConfig config;
  std::vector<CaseInput> cases;
  std::unique_ptr<Backend> backend;
  MemoryStore store;
  try {
    config = PipelineConfig::load(a.config);
    if (!a.mock_script.empty()) {
      config.backend.kind = BackendSettings::Kind::Mock;
      config.backend.mock_script = a.mock_script;
    }
    if (a.seed) config.base_seed = *a.seed;
    if (a.jobs > 0) config.jobs = a.jobs;
    config.validate();
    backend = config.backend.make();
    cases = load_cases(a.cases);
    store = MemoryStore::load_or_empty(config.memory_path, config.memory_capacity);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  }

  try {
    Pipeline pipeline(config, *backend);
    BatchOptions options;
    options.curate = config.curate && !a.no_curate;
    options.persist_path = config.memory_path;
    options.jobs = config.jobs;
    auto batch = pipeline.run_batch(cases, store, options);
    write_results(a.out, batch.cases);
    const auto summary_path = a.summary.empty() ? a.out + ".summary.json" : a.summary;
    write_text(summary_path, batch.summary.to_json().dump(2) + "\n");
    print_summary(out, batch.summary);
    for (const auto& r : batch.cases)
      if (!r.ok) err << "case " << r.case_id << " failed: " << r.error.value_or("unknown error") << "\n";
    return batch.summary.failed > 0 ? kCaseFailures : kSuccess;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  }
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  try {
    if (a.gt_boxes.empty() && a.gt_reports.empty())
      throw Error(ErrorKind::InvalidConfig, "eval needs --gt-boxes and/or --gt-reports");
    auto config = PipelineConfig::load(a.config);
    EvaluationInputs inputs;
    inputs.outputs = load_predictions(a.outputs);
    if (!a.gt_boxes.empty()) inputs.truth_boxes = load_ground_truth_csv(a.gt_boxes);
    if (!a.gt_reports.empty()) inputs.truth_reports = load_reference_reports(a.gt_reports);

    std::unique_ptr<Backend> judge;
    if (a.judge) {
      if (!inputs.truth_reports) throw Error(ErrorKind::InvalidConfig, "--judge needs --gt-reports");
      const auto& settings =
          config.judge_backend.kind != BackendSettings::Kind::None ? config.judge_backend : config.backend;
      judge = settings.make();
      inputs.judge = judge.get();
    }

    auto aliases = config.evaluation.class_aliases.empty()
                       ? ClassAliases::vinbigdata()
                       : ClassAliases::from_json(Json::parse(read_file(config.evaluation.class_aliases)));
    EvaluationOptions options{config.evaluation.iou_threshold, config.evaluation.fp_confidence_threshold,
                              config.evaluation.num_classes};
    const auto report = evaluate(inputs, aliases, options).dump(2) + "\n";
    if (a.out.empty()) out << report;
    else write_text(a.out, report);
    return kSuccess;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
  } catch (const Json::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return kUsageError;
}

std::filesystem::path store_path(const MemoryArgs& a) {
  if (!a.store.empty()) return a.store;
  if (a.config.empty()) throw Error(ErrorKind::InvalidConfig, "pass --store or --config");
  auto config = PipelineConfig::load(a.config);
  if (config.memory_path.empty()) throw Error(ErrorKind::InvalidConfig, "config has no memory.path");
  return config.memory_path;
}

MemoryStore open_store(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw Error(ErrorKind::IoError, "no memory store at " + path.string());
  return MemoryStore::load(path);
}

std::string join_tags(const std::set<std::string>& tags) {
  std::string out;
  for (const auto& t : tags) out += (out.empty() ? "" : ",") + t;
  return out;
}

int cmd_memory(const std::string& sub, const MemoryArgs& a, std::ostream& out, std::ostream& err) {
  try {
    const auto path = store_path(a);
    auto store = open_store(path);
    if (sub == "list") {
      out << "seq\ttask\tspecialization\tcue\ttags\n";
      for (const auto& item : store.items())
        out << item.created_seq << "\t" << item.task << "\t" << item.specialization << "\t" << item.cue << "\t"
            << join_tags(item.tags) << "\n";
    } else if (sub == "show") {
      const auto* item = store.find(a.show_id);
      if (!item) throw Error(ErrorKind::InvalidConfig, "no memory item with seq " + std::to_string(a.show_id));
      out << to_json(*item).dump(2) << "\n";
    } else if (sub == "prune") {
      store.prune(a.keep);
      store.persist(path);
      out << "kept " << store.size() << " item(s)\n";
    } else if (sub == "export") {
      store.persist(a.export_path);
      out << "exported " << store.size() << " item(s) to " << a.export_path << "\n";
    }
    return kSuccess;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
  }
  return kUsageError;
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  try {
    const auto model = ErrorModel::load(a.error_model);
    WeightTable weights;
    if (!a.config.empty()) weights = PipelineConfig::load(a.config).weights;
    const auto rows = simulate_pass_at_k(model, weights, {a.k_max, a.trials, a.seed});
    const auto csv = simulation_csv(rows);
    if (a.out.empty()) out << csv;
    else write_text(a.out, csv);
    return kSuccess;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
  }
  return kUsageError;
}

int cmd_validate(const std::string& config_path, std::ostream& out, std::ostream& err) {
  try {
    auto config = PipelineConfig::load(config_path);
    if (config.backend.kind == BackendSettings::Kind::Mock) (void)MockBackend::from_file(config.backend.mock_script);
    MockBackend probe;
    Pipeline pipeline(config, probe);
    if (!config.evaluation.class_aliases.empty())
      (void)ClassAliases::from_json(Json::parse(read_file(config.evaluation.class_aliases)));
    out << config.to_json().dump(2) << "\n";
    out << "routing rules: " << pipeline.rules().rules().size() << "\nconfig OK\n";
    return kSuccess;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
  } catch (const Json::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return kUsageError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Route, retrieve, reflect and repair: report + box generation and evaluation", "r4"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Process a JSONL batch of cases");
  run_cmd->add_option("--cases", run_args.cases, "Case JSONL file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--config", run_args.config, "Main config file")->required();
  run_cmd->add_option("--mock-script", run_args.mock_script, "Use the scripted mock backend")->check(CLI::ExistingFile);
  run_cmd->add_option("--out", run_args.out, "Per-case output JSONL")->capture_default_str();
  run_cmd->add_option("--summary", run_args.summary, "Summary JSON (default: <out>.summary.json)");
  run_cmd->add_flag("--no-curate", run_args.no_curate, "Do not add exemplars to memory");
  run_cmd->add_option("--seed", run_args.seed, "Override base_seed");
  run_cmd->add_option("--jobs", run_args.jobs, "Concurrent cases (memory reads use per-case snapshots)");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Score pipeline outputs against ground truth");
  eval_cmd->add_option("--outputs", eval_args.outputs, "Pipeline output JSONL")->required();
  eval_cmd->add_option("--gt-boxes", eval_args.gt_boxes, "Ground-truth box CSV");
  eval_cmd->add_option("--gt-reports", eval_args.gt_reports, "Reference report JSONL");
  eval_cmd->add_flag("--judge", eval_args.judge, "Also run the LLM judge");
  eval_cmd->add_option("--config", eval_args.config, "Main config file")->required();
  eval_cmd->add_option("--out", eval_args.out, "Write the report here instead of stdout");

  MemoryArgs mem_args;
  auto* mem_cmd = app.add_subcommand("memory", "Inspect or manage the exemplar memory");
  mem_cmd->require_subcommand(1);
  mem_cmd->add_option("--config", mem_args.config, "Main config file (memory.path)");
  mem_cmd->add_option("--store", mem_args.store, "Memory store file");
  auto* mem_list = mem_cmd->add_subcommand("list", "Print seq, task, specialization, cue and tags");
  auto* mem_show = mem_cmd->add_subcommand("show", "Print one item");
  mem_show->add_option("id", mem_args.show_id, "Item sequence number")->required();
  auto* mem_prune = mem_cmd->add_subcommand("prune", "Keep only the N most recent items");
  mem_prune->add_option("--keep", mem_args.keep, "Items to keep")->required();
  auto* mem_export = mem_cmd->add_subcommand("export", "Copy the store to PATH");
  mem_export->add_option("path", mem_args.export_path, "Destination")->required();

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Monte-Carlo pass@k curves from an issue error model");
  sim_cmd->add_option("--error-model", sim_args.error_model, "JSON {issue_type: probability}")->required();
  sim_cmd->add_option("--k-max", sim_args.k_max, "Largest k")->capture_default_str();
  sim_cmd->add_option("--trials", sim_args.trials, "Trials per curve")->capture_default_str();
  sim_cmd->add_option("--seed", sim_args.seed, "RNG seed")->capture_default_str();
  sim_cmd->add_option("--config", sim_args.config, "Config providing scoring.weights");
  sim_cmd->add_option("--out", sim_args.out, "CSV path (default stdout)");

  std::string validate_config;
  auto* val_cmd = app.add_subcommand("validate-config", "Check a config and everything it references");
  val_cmd->add_option("--config", validate_config, "Main config file")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsageError;
  }

  if (*run_cmd) return cmd_run(run_args, out, err);
  if (*eval_cmd) return cmd_eval(eval_args, out, err);
  if (*mem_cmd) {
    for (auto* sub : {mem_list, mem_show, mem_prune, mem_export})
      if (*sub) return cmd_memory(sub->get_name(), mem_args, out, err);
  }
  if (*sim_cmd) return cmd_simulate(sim_args, out, err);
  if (*val_cmd) return cmd_validate(validate_config, out, err);
  return kUsageError;
}

}  // namespace r4::cli
