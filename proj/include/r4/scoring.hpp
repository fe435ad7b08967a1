// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <vector>

#include "r4/reflector.hpp"

namespace r4 {

/// Nonnegative penalty per issue type. System issues always weigh 0.
class WeightTable {
 public:
  /// missing 3, contradiction 3, negation 2, laterality 2, localization 2, unsupported 1.
  WeightTable();
  /// Entries absent from `weights` keep their defaults. Throws Error(InvalidConfig)
  /// on negative weights or a nonzero system weight.
  explicit WeightTable(const std::map<IssueType, double>& weights);

  static WeightTable from_json(const Json& j);
  Json to_json() const;

  double operator[](IssueType type) const { return weights_.at(type); }
  WeightTable scaled(double factor) const;

 private:
  std::map<IssueType, double> weights_;
};

/// −Σ w[type] over the issues.
double score(const std::vector<Issue>& issues, const WeightTable& weights);

struct Candidate {
  int pass_index = 0;
  std::vector<Issue> issues;
  bool is_error = false;
};

/// Best candidate by score, then fewer issues, then lower pass index. Error
/// candidates score −∞. Returns the position in `candidates`.
/// Throws Error(NoUsableDraft).
std::size_t select(const std::vector<Candidate>& candidates, const WeightTable& weights);

}  // namespace r4
