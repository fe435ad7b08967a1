// SPDX-License-Identifier: Apache-2.0
#include "r4/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace r4 {

WeightTable::WeightTable()
    : weights_{{IssueType::Missing, 3.0},      {IssueType::Contradiction, 3.0}, {IssueType::Negation, 2.0},
               {IssueType::Laterality, 2.0},   {IssueType::Localization, 2.0},  {IssueType::Unsupported, 1.0},
               {IssueType::System, 0.0}} {}

WeightTable::WeightTable(const std::map<IssueType, double>& weights) : WeightTable() {
  for (const auto& [type, w] : weights) {
    if (!std::isfinite(w) || w < 0.0)
      throw Error(ErrorKind::InvalidConfig, "weight for " + std::string(to_string(type)) + " must be >= 0");
    if (type == IssueType::System && w != 0.0)
      throw Error(ErrorKind::InvalidConfig, "system issues always weigh 0");
    weights_[type] = w;
  }
}

WeightTable WeightTable::from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "scoring.weights must be an object");
  std::map<IssueType, double> weights;
  for (const auto& [name, value] : j.items()) {
    auto type = parse_issue_type(name);
    if (!type) throw Error(ErrorKind::InvalidConfig, "unknown issue type in weights: " + name);
    if (!value.is_number()) throw Error(ErrorKind::InvalidConfig, "weight for " + name + " must be a number");
    weights[*type] = value.get<double>();
  }
  return WeightTable(weights);
}

Json WeightTable::to_json() const {
  Json j = Json::object();
  for (const auto& [type, w] : weights_) j[std::string(r4::to_string(type))] = w;
  return j;
}

WeightTable WeightTable::scaled(double factor) const {
  auto copy = *this;
  for (auto& [type, w] : copy.weights_) w *= factor;
  return copy;
}

double score(const std::vector<Issue>& issues, const WeightTable& weights) {
  double penalty = 0.0;
  for (const auto& issue : issues) penalty += weights[issue.type];
  return -penalty;
}

std::size_t select(const std::vector<Candidate>& candidates, const WeightTable& weights) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::optional<std::size_t> best;
  double best_score = kNegInf;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.is_error) continue;
    const double s = score(c.issues, weights);
    if (!best) {
      best = i;
      best_score = s;
      continue;
    }
    const auto& b = candidates[*best];
    // Scores are sums of weights; compare with a relative tolerance so that
    // rescaling the weight table cannot split or merge ties through rounding.
    const double tol = 1e-9 * std::max({1.0, std::abs(s), std::abs(best_score)});
    const bool tie = std::abs(s - best_score) <= tol;
    const bool better = (!tie && s > best_score) ||
                        (tie && (c.issues.size() < b.issues.size() ||
                                 (c.issues.size() == b.issues.size() && c.pass_index < b.pass_index)));
    if (better) {
      best = i;
      best_score = s;
    }
  }
  if (!best) throw Error(ErrorKind::NoUsableDraft, "every draft errored");
  return *best;
}

}  // namespace r4
