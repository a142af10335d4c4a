#pragma once

// Exhaustive-enumeration checks of the referral optimizers on small random
// instances. Used by `refereval oracle`.

#include <cstdint>

#include "refereval/policies.hpp"

namespace refereval {

inline constexpr int kOracleMaxBatch = 12;

struct OracleCase {
  Batch batch;
  TablePerf table;
  DecisionCosts costs;
};

// Random posteriors, random valid costs and a random table perf model over
// {1..K}.
OracleCase random_oracle_case(int batch_size, Engine& rng);

// Minimum team cost over every referral subset whose size is in the load set.
double exhaustive_minimum(const Batch& batch, const LoadSet& load_set,
                          const HumanPerfModel& perf, const DecisionCosts& costs);

// Minimum team cost over every subset of size exactly w.
double exhaustive_fixed_load(const Batch& batch, int w, const HumanPerfModel& perf,
                             const DecisionCosts& costs);

struct OracleTally {
  int trials = 0;
  int allocation_matches = 0;   // optimal_referral vs exhaustive minimum
  int fixed_load_matches = 0;   // every w: top-w referral vs exhaustive minimum at w
  double max_abs_error = 0.0;
};

// Throws DomainError("combinatorial_guard") for batch sizes above kOracleMaxBatch.
OracleTally run_oracle(int batch_size, int trials, std::uint64_t seed, double tolerance = 1e-9);

}  // namespace refereval
