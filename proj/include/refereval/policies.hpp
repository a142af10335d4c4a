#pragma once

#include <span>
#include <utility>
#include <vector>

#include "refereval/core.hpp"
#include "refereval/rng.hpp"

namespace refereval {

struct TopWReferral {
  std::vector<int> referred;  // sorted by task id
  double delta = 0.0;         // sum of the referred tasks' referral indices
};

// The w tasks with the largest referral indices at load w. Equal indices
// prefer the lower task id. Throws DomainError if w > K.
TopWReferral top_w_referral(const Batch& batch, int w, const HumanPerfModel& perf,
                            const DecisionCosts& costs);

// Same selection from precomputed rates (hot path for simulations).
TopWReferral top_w_referral(const Batch& batch, int w, Rates rates,
                            const DecisionCosts& costs);

struct AllocationResult {
  ReferralPlan plan;
  int load = 0;
  double delta = 0.0;
  std::vector<std::pair<int, double>> per_load_delta;  // (w, Delta(w)) for every w in the load set
};

// Optimal referral: best top-w referral over the load set, ties to the
// smaller load; unreferred tasks take the automation's Bayes decision.
AllocationResult optimal_referral(const Batch& batch, const LoadSet& load_set,
                                  const HumanPerfModel& perf,
                                  const DecisionCosts& costs);

// Minimum expected team cost at a fixed load (top-w referral + Bayes decisions).
double fixed_load_cost(const Batch& batch, int w, Rates rates,
                       const DecisionCosts& costs);

// Expected cost of a task sent to the automation or the human without
// looking at its observation.
double blind_auto_cost(const Prior& prior, const AutomationPerfModel& automation,
                       const DecisionCosts& costs);
double blind_human_cost(const Prior& prior, Rates rates, const DecisionCosts& costs);

// Blind allocation load: argmin over the load set of
// (K - w) * blind_auto_cost + w * blind_human_cost(w); ties to the smaller w.
int ba_workload(const Prior& prior, const AutomationPerfModel& automation,
                const HumanPerfModel& perf, const DecisionCosts& costs,
                const LoadSet& load_set);

// Uniformly random size-w referral; the rest decided by the automation.
ReferralPlan ba_select(const Batch& batch, int w_ba, const DecisionCosts& costs,
                       Engine& rng);

// Static allocation load from sampled batches: argmin over the load set of
// the average fixed-load cost. Every load is scored on the same batches.
int sa_workload(std::span<const Batch> samples, const LoadSet& load_set,
                const HumanPerfModel& perf, const DecisionCosts& costs);

// Plan for a fixed load chosen by the static policy.
ReferralPlan sa_select(const Batch& batch, int w_sa, const HumanPerfModel& perf,
                       const DecisionCosts& costs);

}  // namespace refereval
