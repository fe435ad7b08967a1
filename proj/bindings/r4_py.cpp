// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "r4/error.hpp"
#include "r4/evaluator.hpp"
#include "r4/pipeline.hpp"
#include "r4/simulate.hpp"

namespace py = pybind11;

namespace {

using Geometry = std::tuple<double, double, double, double>;

r4::BoxGeometry geom(const Geometry& g) {
  return {std::get<0>(g), std::get<1>(g), std::get<2>(g), std::get<3>(g)};
}

py::object to_py(const r4::Json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

r4::Json from_py(const py::handle& obj) {
  return r4::Json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::dict box_dict(const r4::BBox& b) {
  return to_py(r4::box_to_json(b));
}

std::vector<r4::Issue> issues_from(const std::vector<std::string>& types) {
  std::vector<r4::Issue> out;
  for (const auto& t : types) {
    auto type = r4::parse_issue_type(t);
    if (!type) throw r4::Error(r4::ErrorKind::InvalidConfig, "unknown issue type " + t);
    out.push_back({*type, "", t, ""});
  }
  return out;
}

r4::WeightTable weights_from(const std::optional<py::dict>& weights) {
  return weights ? r4::WeightTable::from_json(from_py(*weights)) : r4::WeightTable{};
}

r4::CaseInput case_from(const py::dict& d) {
  auto j = from_py(d);
  r4::CaseInput c;
  c.case_id = j.value("case_id", std::string("case"));
  c.image = {"\x89PNG", "image/png"};
  if (j.contains("query") && j["query"].is_string()) c.query = j["query"].get<std::string>();
  if (j.contains("history")) c.history = j["history"].get<std::vector<std::string>>();
  if (j.contains("metadata")) c.metadata = j["metadata"].get<std::map<std::string, std::string>>();
  if (j.contains("mode_hint")) c.mode_hint = r4::parse_mode(j["mode_hint"].get<std::string>());
  return c;
}

}  // namespace

PYBIND11_MODULE(_r4, m) {
  m.doc() = "Routed report and box generation with reflection, repair and exemplar memory.";

  py::register_exception<r4::Error>(m, "R4Error");

  m.def("tokenize", [](const std::string& text) { return r4::tokenize(text); });
  m.def("tokenize_sequence", [](const std::string& text) { return r4::tokenize_sequence(text); });

  m.def(
      "validate_bbox",
      [](const std::string& label, double confidence, const Geometry& g, const std::string& description) {
        return box_dict(r4::validate_bbox(
            r4::RawBox{label, description, confidence, std::get<0>(g), std::get<1>(g), std::get<2>(g), std::get<3>(g)}));
      },
      py::arg("label"), py::arg("confidence"), py::arg("geometry"), py::arg("description") = "");
  m.def("iou", [](const Geometry& a, const Geometry& b) { return r4::iou(geom(a), geom(b)); });

  m.def(
      "average_precision",
      [](const std::vector<std::tuple<std::string, double, Geometry>>& predictions,
         const std::vector<std::tuple<std::string, Geometry>>& truths, double iou_threshold) {
        std::vector<r4::ScoredBox> p;
        for (const auto& [id, conf, g] : predictions) p.push_back({id, conf, geom(g)});
        std::vector<r4::GroundTruthBox> t;
        for (const auto& [id, g] : truths) t.push_back({id, 0, geom(g)});
        return r4::average_precision(p, t, iou_threshold);
      },
      py::arg("predictions"), py::arg("truths"), py::arg("iou_threshold") = 0.5,
      "Predictions are (case_id, confidence, (x0, y0, x1, y1)); truths are (case_id, geometry). None without truths.");
  m.def(
      "map50",
      [](const std::map<int, std::vector<std::tuple<std::string, double, Geometry>>>& predictions,
         const std::map<int, std::vector<std::tuple<std::string, Geometry>>>& truths, int num_classes,
         double iou_threshold) {
        std::map<int, std::vector<r4::ScoredBox>> p;
        for (const auto& [cls, boxes] : predictions)
          for (const auto& [id, conf, g] : boxes) p[cls].push_back({id, conf, geom(g)});
        std::map<int, std::vector<r4::GroundTruthBox>> t;
        for (const auto& [cls, boxes] : truths)
          for (const auto& [id, g] : boxes) t[cls].push_back({id, cls, geom(g)});
        const auto r = r4::map50(p, t, num_classes, iou_threshold);
        py::dict out;
        out["map50"] = r.map50;
        out["map50_raw"] = r.map50_raw;
        out["per_class_ap"] = r.per_class_ap;
        return out;
      },
      py::arg("predictions"), py::arg("truths"), py::arg("num_classes") = 14, py::arg("iou_threshold") = 0.5);
  m.def("text_metrics", [](const std::string& candidate, const std::string& reference) {
    const auto s = r4::text_metrics(candidate, reference);
    py::dict out;
    out["bleu"] = s.bleu;
    out["rouge_l"] = s.rouge_l;
    return out;
  });
  m.def("judge_aggregate", [](const std::array<double, 5>& v) {
    return r4::judge_aggregate({v[0], v[1], v[2], v[3], v[4]});
  }, "Mean of (coverage, consistency, diagnostic, style, conciseness).");

  m.def(
      "score", [](const std::vector<std::string>& issue_types, const std::optional<py::dict>& weights) {
        return r4::score(issues_from(issue_types), weights_from(weights));
      },
      py::arg("issue_types"), py::arg("weights") = py::none());
  m.def(
      "select",
      [](const std::vector<std::optional<std::vector<std::string>>>& candidates, const std::optional<py::dict>& weights) {
        std::vector<r4::Candidate> cands;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
          r4::Candidate c;
          c.pass_index = static_cast<int>(i);
          if (candidates[i]) c.issues = issues_from(*candidates[i]);
          else c.is_error = true;
          cands.push_back(std::move(c));
        }
        return r4::select(cands, weights_from(weights));
      },
      py::arg("candidates"), py::arg("weights") = py::none(),
      "Each candidate is a list of issue types, or None for a failed draft.");

  m.def("extract_json", [](const std::string& text) { return to_py(r4::extract_json(text)); });

  m.def(
      "heuristic_route",
      [](const py::dict& case_fields, const std::optional<std::filesystem::path>& rules) {
        const auto table = rules ? r4::RuleTable::from_file(*rules, r4::default_specializations())
                                 : r4::RuleTable::defaults();
        return to_py(r4::to_json(r4::heuristic_route(case_from(case_fields), table)));
      },
      py::arg("case"), py::arg("rules") = py::none(),
      "Routes a case given as {case_id, query, history, metadata, mode_hint}.");

  py::class_<r4::MemoryStore>(m, "MemoryStore")
      .def(py::init<std::optional<std::size_t>>(), py::arg("capacity") = py::none())
      .def_static("load", &r4::MemoryStore::load)
      .def("persist", &r4::MemoryStore::persist)
      .def("__len__", &r4::MemoryStore::size)
      .def(
          "insert",
          [](r4::MemoryStore& s, const std::string& task, const std::string& spec, const std::string& cue,
             const std::string& report, const std::set<std::string>& tags) {
            return s.insert({task, spec, cue, report, tags, 0}).created_seq;
          },
          py::arg("task"), py::arg("specialization"), py::arg("cue"), py::arg("report"),
          py::arg("tags") = std::set<std::string>{})
      .def(
          "curate",
          [](r4::MemoryStore& s, const std::string& task, const std::string& spec, const std::string& report,
             const std::map<std::string, std::string>& metadata) {
            return to_py(r4::to_json(s.curate(task, spec, std::nullopt, {}, metadata, report)));
          },
          py::arg("task"), py::arg("specialization"), py::arg("report"),
          py::arg("metadata") = std::map<std::string, std::string>{})
      .def("items", [](const r4::MemoryStore& s) { return to_py(s.to_json()["items"]); })
      .def("prune", &r4::MemoryStore::prune)
      .def(
          "top_k",
          [](const r4::MemoryStore& s, const std::string& cue, const std::string& task, const std::string& spec,
             std::size_t k) {
            py::list out;
            for (const auto& item : r4::top_k(s, cue, task, spec, k)) out.append(to_py(r4::to_json(item)));
            return out;
          },
          py::arg("cue"), py::arg("task"), py::arg("specialization"), py::arg("k"));

  m.def(
      "run_batch",
      [](const std::filesystem::path& cases, const std::filesystem::path& config_path,
         const std::optional<std::filesystem::path>& mock_script, const std::optional<std::filesystem::path>& out,
         bool curate) {
        auto config = r4::PipelineConfig::load(config_path);
        if (mock_script) {
          config.backend.kind = r4::BackendSettings::Kind::Mock;
          config.backend.mock_script = *mock_script;
        }
        auto backend = config.backend.make();
        auto store = r4::MemoryStore::load_or_empty(config.memory_path, config.memory_capacity);
        r4::BatchResult batch;
        {
          py::gil_scoped_release release;
          r4::Pipeline pipeline(config, *backend);
          r4::BatchOptions options;
          options.curate = curate && config.curate;
          options.persist_path = config.memory_path;
          options.jobs = config.jobs;
          batch = pipeline.run_batch(cases, store, options);
          if (out) r4::write_results(*out, batch.cases);
        }
        py::list results;
        for (const auto& r : batch.cases) results.append(to_py(r.to_json()));
        py::dict d;
        d["summary"] = to_py(batch.summary.to_json());
        d["results"] = results;
        return d;
      },
      py::arg("cases"), py::arg("config"), py::arg("mock_script") = py::none(), py::arg("out") = py::none(),
      py::arg("curate") = true);

  m.def(
      "simulate",
      [](const py::dict& error_model, int k_max, int trials, std::uint64_t seed, const std::optional<py::dict>& weights) {
        const auto rows = r4::simulate_pass_at_k(r4::ErrorModel::from_json(from_py(error_model)), weights_from(weights),
                                                 {k_max, trials, seed});
        py::list out;
        for (const auto& r : rows) {
          py::dict d;
          d["k"] = r.k;
          d["mean_best_score"] = r.mean_best_score;
          d["localization_hit_rate"] = r.localization_hit_rate;
          out.append(d);
        }
        return out;
      },
      py::arg("error_model"), py::arg("k_max") = 3, py::arg("trials") = 10000, py::arg("seed") = 0,
      py::arg("weights") = py::none());
}
