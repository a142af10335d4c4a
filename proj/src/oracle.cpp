#include "refereval/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "refereval/error.hpp"

namespace refereval {

OracleCase random_oracle_case(int batch_size, Engine& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> posteriors(static_cast<std::size_t>(batch_size));
  for (double& p : posteriors) p = unit(rng);
  const double c_tp = 2.0 * unit(rng);
  const double c_tn = 2.0 * unit(rng);
  DecisionCosts costs(c_tp, c_tn + 1.0 + 10.0 * unit(rng), c_tn, c_tp + 1.0 + 10.0 * unit(rng),
                      0.5 * unit(rng));
  TablePerf table;
  for (int w = 1; w <= std::max(1, batch_size); ++w) {
    table.loads.push_back(w);
    table.tpr.push_back(0.5 + 0.5 * unit(rng));
    table.fpr.push_back(0.5 * unit(rng));
  }
  return {Batch::from_posteriors(posteriors), std::move(table), costs};
}

namespace {

double subset_cost(const Batch& batch, unsigned mask, const HumanPerfModel& perf,
                   const DecisionCosts& costs) {
  std::vector<int> referred;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (mask & (1u << i)) referred.push_back(batch[i].task_id);
  }
  return team_cost(make_plan(batch, std::move(referred), costs), batch, perf, costs);
}

void guard(const Batch& batch) {
  if (batch.size() > static_cast<std::size_t>(kOracleMaxBatch)) {
    throw DomainError("combinatorial_guard", "exhaustive search is limited to K <= " +
                                                 std::to_string(kOracleMaxBatch));
  }
}

}  // namespace

double exhaustive_minimum(const Batch& batch, const LoadSet& load_set,
                          const HumanPerfModel& perf, const DecisionCosts& costs) {
  guard(batch);
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << batch.size()); ++mask) {
    if (!load_set.contains(std::popcount(mask))) continue;
    best = std::min(best, subset_cost(batch, mask, perf, costs));
  }
  return best;
}

double exhaustive_fixed_load(const Batch& batch, int w, const HumanPerfModel& perf,
                             const DecisionCosts& costs) {
  guard(batch);
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << batch.size()); ++mask) {
    if (std::popcount(mask) != w) continue;
    best = std::min(best, subset_cost(batch, mask, perf, costs));
  }
  return best;
}

OracleTally run_oracle(int batch_size, int trials, std::uint64_t seed, double tolerance) {
  if (batch_size < 1 || batch_size > kOracleMaxBatch) {
    throw DomainError("combinatorial_guard", "K must lie in [1, " +
                                                 std::to_string(kOracleMaxBatch) + "]");
  }
  OracleTally tally;
  for (int trial = 0; trial < trials; ++trial) {
    Engine rng = make_stream(seed, {static_cast<std::uint64_t>(trial)});
    OracleCase c = random_oracle_case(batch_size, rng);
    const HumanPerfModel perf(c.table);
    const LoadSet loads = LoadSet::full(batch_size);
    ++tally.trials;

    const AllocationResult oa = optimal_referral(c.batch, loads, perf, c.costs);
    const double err = std::abs(team_cost(oa.plan, c.batch, perf, c.costs) -
                                exhaustive_minimum(c.batch, loads, perf, c.costs));
    tally.max_abs_error = std::max(tally.max_abs_error, err);
    if (err <= tolerance) ++tally.allocation_matches;

    bool all = true;
    for (int w = 0; w <= batch_size; ++w) {
      const auto top = top_w_referral(c.batch, w, perf, c.costs);
      const double e = std::abs(team_cost(make_plan(c.batch, top.referred, c.costs), c.batch, perf, c.costs) -
                                exhaustive_fixed_load(c.batch, w, perf, c.costs));
      tally.max_abs_error = std::max(tally.max_abs_error, e);
      all = all && e <= tolerance;
    }
    if (all) ++tally.fixed_load_matches;
  }
  return tally;
}

}  // namespace refereval
