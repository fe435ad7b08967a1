// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "r4/backend.hpp"
#include "r4/prompt.hpp"
#include "r4/router.hpp"

namespace r4 {

/// What every agent call needs besides the case: where to send it, which
/// templates to use, and the routing state.
struct AgentContext {
  Backend& backend;
  const TemplateLibrary& templates;
  std::string task;
  RoutingDecision routing;
  double temperature = 0.2;
  std::int64_t base_seed = 0;
  int max_output = 1024;

  TemplateId template_id(Role role) const { return {task, routing.specialization, routing.mode, role}; }

  ModelRequest request(Role role, const CaseInput& c, int pass_index, int repair_iteration,
                       std::string prompt) const {
    ModelRequest req;
    req.key = {role, c.case_id, pass_index, repair_iteration};
    req.prompt = std::move(prompt);
    req.image = c.image;
    req.temperature = temperature;
    req.seed = base_seed + pass_index;
    req.max_output = max_output;
    return req;
  }
};

}  // namespace r4
