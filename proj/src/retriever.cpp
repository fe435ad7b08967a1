// SPDX-License-Identifier: Apache-2.0
#include "r4/retriever.hpp"

#include <future>

namespace r4 {

Json to_json(const Draft& d) {
  Json j{{"pass_index", d.pass_index},
         {"text", d.text},
         {"boxes", boxes_to_json(d.boxes)},
         {"fewshots_used", d.meta.fewshots_used},
         {"mode", to_string(d.meta.mode)},
         {"task", d.meta.task},
         {"specialization", d.meta.specialization},
         {"temperature", d.meta.temperature},
         {"seed", d.meta.seed}};
  if (d.error) j["error"] = *d.error;
  if (!d.warnings.empty()) j["warnings"] = d.warnings;
  return j;
}

std::vector<BBox> dedup_boxes(std::vector<BBox> boxes, double iou_threshold) {
  std::vector<BBox> kept;
  for (auto& box : boxes) {
    bool merged = false;
    for (auto& k : kept) {
      if (to_lower(k.label) == to_lower(box.label) && iou(k.geom, box.geom) > iou_threshold) {
        if (box.confidence > k.confidence) k = box;
        merged = true;
        break;
      }
    }
    if (!merged) kept.push_back(std::move(box));
  }
  return kept;
}

BoxDetection parse_boxes(const Json& value) {
  BoxDetection out;
  const Json* list = &value;
  if (value.is_object() && value.contains("boxes")) list = &value["boxes"];
  if (!list->is_array()) {
    out.warnings.push_back("box response is not a list");
    return out;
  }
  std::size_t index = 0;
  for (const auto& rec : *list) {
    try {
      out.boxes.push_back(validate_bbox(raw_box_from_json(rec)));
    } catch (const Error& e) {
      out.warnings.push_back("dropped box " + std::to_string(index) + ": " + e.what());
    }
    ++index;
  }
  out.boxes = dedup_boxes(std::move(out.boxes));
  return out;
}

BoxDetection detect_boxes(const CaseInput& c, const std::string& draft_text, const AgentContext& ctx,
                          int pass_index) {
  BoxDetection out;
  try {
    const auto tmpl = ctx.templates.get(ctx.template_id(Role::BBox));
    const auto prompt = build_prompt(tmpl, c, {}, {{"draft", draft_text}});
    const auto text = complete_with_retry(ctx.backend, ctx.request(Role::BBox, c, pass_index, 0, prompt));
    return parse_boxes(extract_json(text));
  } catch (const Error& e) {
    out.warnings.push_back(std::string("box detection: ") + e.what());
  }
  return out;
}

std::string draft_text_from_response(const std::string& response) {
  auto parsed = Json::parse(response, nullptr, false);
  if (parsed.is_discarded()) {
    try {
      parsed = extract_json(response);
    } catch (const Error&) {
      parsed = Json();
    }
  }
  if (parsed.is_object()) {
    if (auto it = parsed.find("report"); it != parsed.end() && it->is_string()) return it->get<std::string>();
  }
  const auto first = response.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = response.find_last_not_of(" \t\r\n");
  return response.substr(first, last - first + 1);
}

namespace {

Draft run_pass(const CaseInput& c, const std::vector<MemoryItem>& fewshots, const AgentContext& ctx, int j) {
  Draft d;
  d.pass_index = j;
  d.meta = {fewshots.size(), ctx.routing.mode, ctx.task, ctx.routing.specialization, ctx.temperature,
            ctx.base_seed + j};
  try {
    const auto tmpl = ctx.templates.get(ctx.template_id(Role::Retriever));
    const auto prompt = build_prompt(tmpl, c, fewshots);
    d.text = draft_text_from_response(
        complete_with_retry(ctx.backend, ctx.request(Role::Retriever, c, j, 0, prompt)));
    if (d.text.empty()) throw Error(ErrorKind::EmptyResponse, "retriever returned no report text");
  } catch (const Error& e) {
    d.error = e.what();
    return d;
  }
  auto boxes = detect_boxes(c, d.text, ctx, j);
  d.boxes = std::move(boxes.boxes);
  d.warnings = std::move(boxes.warnings);
  return d;
}

}  // namespace

std::vector<Draft> generate_drafts(const CaseInput& c, const MemoryStore& store, const AgentContext& ctx,
                                   const RetrieverOptions& options) {
  if (options.k < 1) throw Error(ErrorKind::InvalidConfig, "k must be at least 1");

  std::vector<MemoryItem> fewshots;
  if (ctx.routing.mode == Mode::Few)
    fewshots = top_k(store, case_cue(c, options.cue), ctx.task, ctx.routing.specialization, options.k_fewshot);

  std::vector<Draft> drafts;
  drafts.reserve(static_cast<std::size_t>(options.k));
  if (options.concurrent && options.k > 1) {
    std::vector<std::future<Draft>> futures;
    for (int j = 0; j < options.k; ++j)
      futures.push_back(std::async(std::launch::async, [&, j] { return run_pass(c, fewshots, ctx, j); }));
    for (auto& f : futures) drafts.push_back(f.get());
  } else {
    for (int j = 0; j < options.k; ++j) drafts.push_back(run_pass(c, fewshots, ctx, j));
  }

  bool any_ok = false;
  for (const auto& d : drafts) any_ok = any_ok || d.ok();
  if (!any_ok) throw Error(ErrorKind::AllPassesFailed, "all " + std::to_string(options.k) + " passes failed");
  return drafts;
}

}  // namespace r4
