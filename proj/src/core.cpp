#include "refereval/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "refereval/error.hpp"

namespace refereval {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1 / (1 + exp(-x)) without overflow for large |x|.
double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double safe_log(double x) { return x > 0.0 ? std::log(x) : -kInf; }

}  // namespace

double posterior_from_log_likelihoods(const Prior& prior, double log_lik0,
                                      double log_lik1) {
  const double a = safe_log(prior.pi1()) + log_lik1;
  const double b = safe_log(prior.pi0()) + log_lik0;
  if (a == -kInf && b == -kInf) {
    throw DegenerateError("degenerate_evidence",
                          "prior-weighted evidence is zero under both hypotheses");
  }
  if (a == -kInf) return 0.0;
  if (b == -kInf) return 1.0;
  return logistic(a - b);
}

double posterior_from_likelihoods(const Prior& prior, double lik0, double lik1) {
  if (!(lik0 >= 0.0) || !(lik1 >= 0.0)) {
    throw DomainError("likelihoods must be nonnegative");
  }
  return posterior_from_log_likelihoods(prior, safe_log(lik0), safe_log(lik1));
}

double posterior_from_llr(const Prior& prior, double llr) {
  if (prior.pi1() == 0.0) return 0.0;
  if (prior.pi1() == 1.0) return 1.0;
  return logistic(std::log(prior.pi1()) - std::log(prior.pi0()) + llr);
}

double gamma_auto(double p, Hypothesis d, const DecisionCosts& costs) {
  return (1.0 - p) * costs.of(d, Hypothesis::kH0) + p * costs.of(d, Hypothesis::kH1);
}

double gamma_auto_star(double p, const DecisionCosts& costs) {
  return std::min(gamma_auto(p, Hypothesis::kH0, costs),
                  gamma_auto(p, Hypothesis::kH1, costs));
}

Hypothesis auto_bayes_decision(double p, const DecisionCosts& costs) {
  // compare against rho directly; the two expected costs can round apart at the tie
  return p <= costs.indifference_posterior() ? Hypothesis::kH0 : Hypothesis::kH1;
}

double gamma_human(double p, Rates rates, const DecisionCosts& costs) {
  return costs.referral() +
         (1.0 - p) * (rates.fpr * costs.fp() + (1.0 - rates.fpr) * costs.tn()) +
         p * (rates.tpr * costs.tp() + (1.0 - rates.tpr) * costs.fn());
}

double gamma_human(double p, int w, const HumanPerfModel& perf,
                   const DecisionCosts& costs) {
  return gamma_human(p, perf.rates(w), costs);
}

double referral_index(double p, Rates rates, const DecisionCosts& costs) {
  return gamma_auto_star(p, costs) - gamma_human(p, rates, costs);
}

double referral_index(double p, int w, const HumanPerfModel& perf,
                      const DecisionCosts& costs) {
  return referral_index(p, perf.rates(w), costs);
}

double team_cost(const ReferralPlan& plan, const Batch& batch,
                 const HumanPerfModel& perf, const DecisionCosts& costs) {
  if (plan.referred.size() + plan.terminal.size() != batch.size()) {
    throw DomainError("inconsistent_plan", "plan does not cover the batch");
  }
  const int w = plan.load();
  const Rates rates = w > 0 ? perf.rates(w) : Rates{};
  double total = 0.0;
  std::size_t covered = 0;
  for (const Task& t : batch.tasks()) {
    if (plan.is_referred(t.task_id)) {
      total += gamma_human(t.posterior, rates, costs);
      ++covered;
      continue;
    }
    auto it = std::lower_bound(
        plan.terminal.begin(), plan.terminal.end(), t.task_id,
        [](const auto& entry, int id) { return entry.first < id; });
    if (it == plan.terminal.end() || it->first != t.task_id) {
      throw DomainError("inconsistent_plan",
                        "task " + std::to_string(t.task_id) + " missing from plan");
    }
    total += gamma_auto(t.posterior, it->second, costs);
    ++covered;
  }
  if (covered != batch.size()) {
    throw DomainError("inconsistent_plan", "plan does not cover the batch");
  }
  return total;
}

ReferralPlan make_plan(const Batch& batch, std::vector<int> referred,
                       const DecisionCosts& costs) {
  ReferralPlan plan;
  std::sort(referred.begin(), referred.end());
  plan.referred = std::move(referred);
  for (const Task& t : batch.tasks()) {
    if (!plan.is_referred(t.task_id)) {
      plan.terminal.emplace_back(t.task_id, auto_bayes_decision(t.posterior, costs));
    }
  }
  std::sort(plan.terminal.begin(), plan.terminal.end());
  if (plan.referred.size() + plan.terminal.size() != batch.size()) {
    throw DomainError("inconsistent_plan", "referred ids not all in batch");
  }
  return plan;
}

}  // namespace refereval
