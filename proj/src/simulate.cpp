// SPDX-License-Identifier: Apache-2.0
#include "r4/simulate.hpp"

#include <cmath>
#include <cstdio>
#include <random>

namespace r4 {

ErrorModel ErrorModel::from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "error model must be a JSON object");
  ErrorModel model;
  for (const auto& [name, value] : j.items()) {
    auto type = parse_issue_type(name);
    if (!type) throw Error(ErrorKind::InvalidConfig, "unknown issue type " + name);
    if (!value.is_number()) throw Error(ErrorKind::InvalidConfig, "probability for " + name + " must be a number");
    const double p = value.get<double>();
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::InvalidConfig, "probability for " + name + " outside [0,1]");
    model.probability[*type] = p;
  }
  return model;
}

ErrorModel ErrorModel::load(const std::filesystem::path& path) {
  try {
    return from_json(Json::parse(read_file(path)));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::InvalidConfig, e.what());
  }
}

std::vector<SimulationRow> simulate_pass_at_k(const ErrorModel& model, const WeightTable& weights,
                                              const SimulationOptions& options) {
  if (options.k_max < 1) throw Error(ErrorKind::InvalidConfig, "k-max must be >= 1");
  if (options.trials < 1) throw Error(ErrorKind::InvalidConfig, "trials must be >= 1");

  std::mt19937_64 rng(options.seed);
  // 53-bit uniform in [0,1), identical on every standard library.
  auto uniform = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

  const auto k_max = static_cast<std::size_t>(options.k_max);
  std::vector<double> score_sum(k_max, 0.0);
  std::vector<double> hit_sum(k_max, 0.0);
  std::vector<Candidate> pool(k_max);

  for (int trial = 0; trial < options.trials; ++trial) {
    for (std::size_t j = 0; j < k_max; ++j) {
      pool[j] = Candidate{static_cast<int>(j), {}, false};
      for (const auto& [type, p] : model.probability)
        if (uniform() < p) pool[j].issues.push_back(Issue{type, "", "simulated", ""});
    }
    for (std::size_t k = 1; k <= k_max; ++k) {
      const std::vector<Candidate> first(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
      const auto& best = first[select(first, weights)];
      score_sum[k - 1] += score(best.issues, weights);
      bool localized = true;
      for (const auto& i : best.issues) localized = localized && i.type != IssueType::Localization;
      hit_sum[k - 1] += localized ? 1.0 : 0.0;
    }
  }

  std::vector<SimulationRow> rows;
  for (std::size_t k = 1; k <= k_max; ++k)
    rows.push_back({static_cast<int>(k), score_sum[k - 1] / options.trials, hit_sum[k - 1] / options.trials});
  return rows;
}

std::string simulation_csv(const std::vector<SimulationRow>& rows) {
  std::string out = "k,mean_best_score,localization_hit_rate\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f\n", r.k, r.mean_best_score, r.localization_hit_rate);
    out += buf;
  }
  return out;
}

}  // namespace r4
