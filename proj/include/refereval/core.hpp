#pragma once

// Expected-cost and referral-index mathematics for a human-automation team.
// All functions are pure.

#include "refereval/models.hpp"
#include "refereval/types.hpp"

namespace refereval {

// pi1 lik1 / (pi0 lik0 + pi1 lik1), evaluated in log space. Throws
// DegenerateError when the weighted evidence is zero.
double posterior_from_likelihoods(const Prior& prior, double lik0, double lik1);

// Same quantity from log-likelihoods; never underflows.
double posterior_from_log_likelihoods(const Prior& prior, double log_lik0,
                                      double log_lik1);

// Logistic transform of logit(pi1) + llr.
double posterior_from_llr(const Prior& prior, double llr);

// Expected cost of terminal decision d given posterior p.
double gamma_auto(double p, Hypothesis d, const DecisionCosts& costs);

double gamma_auto_star(double p, const DecisionCosts& costs);

// H0 when gamma_auto(p, H0) <= gamma_auto(p, H1).
Hypothesis auto_bayes_decision(double p, const DecisionCosts& costs);

// Expected cost of referring a task with posterior p to a human operating
// at the given rates, including the referral cost.
double gamma_human(double p, Rates rates, const DecisionCosts& costs);
double gamma_human(double p, int w, const HumanPerfModel& perf,
                   const DecisionCosts& costs);

double referral_index(double p, Rates rates, const DecisionCosts& costs);
double referral_index(double p, int w, const HumanPerfModel& perf,
                      const DecisionCosts& costs);

// Expected total cost of a plan, summed in task order. Throws DomainError if
// the plan does not cover exactly the batch's task ids.
double team_cost(const ReferralPlan& plan, const Batch& batch,
                 const HumanPerfModel& perf, const DecisionCosts& costs);

// Plan that refers the given ids and decides the rest by auto_bayes_decision.
ReferralPlan make_plan(const Batch& batch, std::vector<int> referred,
                       const DecisionCosts& costs);

}  // namespace refereval
