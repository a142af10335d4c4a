#include "refereval/policies.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "refereval/error.hpp"

namespace refereval {
namespace {

struct Scored {
  double index;
  int task_id;
};

// Strict total order: larger index first, then lower task id.
bool ranks_before(const Scored& a, const Scored& b) {
  if (a.index != b.index) return a.index > b.index;
  return a.task_id < b.task_id;
}

}  // namespace

TopWReferral top_w_referral(const Batch& batch, int w, Rates rates,
                            const DecisionCosts& costs) {
  const int k = static_cast<int>(batch.size());
  if (w < 0 || w > k) {
    throw DomainError("load " + std::to_string(w) + " outside [0, " + std::to_string(k) + "]");
  }
  TopWReferral out;
  if (w == 0) return out;

  std::vector<Scored> scored;
  scored.reserve(batch.size());
  for (const Task& t : batch.tasks()) {
    scored.push_back({referral_index(t.posterior, rates, costs), t.task_id});
  }
  if (w < k) {
    std::nth_element(scored.begin(), scored.begin() + (w - 1), scored.end(), ranks_before);
  }
  scored.resize(static_cast<std::size_t>(w));
  std::sort(scored.begin(), scored.end(),
            [](const Scored& a, const Scored& b) { return a.task_id < b.task_id; });
  out.referred.reserve(scored.size());
  for (const Scored& s : scored) {
    out.referred.push_back(s.task_id);
    out.delta += s.index;
  }
  return out;
}

TopWReferral top_w_referral(const Batch& batch, int w, const HumanPerfModel& perf,
                            const DecisionCosts& costs) {
  if (w < 0 || w > static_cast<int>(batch.size())) {
    throw DomainError("load " + std::to_string(w) + " outside [0, " +
                      std::to_string(batch.size()) + "]");
  }
  if (w == 0) return {};
  return top_w_referral(batch, w, perf.rates(w), costs);
}

AllocationResult optimal_referral(const Batch& batch, const LoadSet& load_set,
                                  const HumanPerfModel& perf,
                                  const DecisionCosts& costs) {
  AllocationResult result;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> best_referred;
  bool any = false;
  for (int w : load_set.loads()) {
    if (w > static_cast<int>(batch.size())) break;
    TopWReferral top = top_w_referral(batch, w, perf, costs);
    result.per_load_delta.emplace_back(w, top.delta);
    if (top.delta > best) {
      best = top.delta;
      best_referred = std::move(top.referred);
      result.load = w;
      any = true;
    }
  }
  if (!any) throw DomainError("no feasible load for a batch of this size");
  result.delta = best;
  result.plan = make_plan(batch, std::move(best_referred), costs);
  return result;
}

double fixed_load_cost(const Batch& batch, int w, Rates rates,
                       const DecisionCosts& costs) {
  double base = 0.0;
  for (const Task& t : batch.tasks()) base += gamma_auto_star(t.posterior, costs);
  return base - top_w_referral(batch, w, rates, costs).delta;
}

double blind_auto_cost(const Prior& prior, const AutomationPerfModel& a,
                       const DecisionCosts& c) {
  return prior.pi1() * (a.tpr * c.tp() + (1.0 - a.tpr) * c.fn()) +
         prior.pi0() * (a.fpr * c.fp() + (1.0 - a.fpr) * c.tn());
}

double blind_human_cost(const Prior& prior, Rates r, const DecisionCosts& c) {
  return c.referral() + prior.pi1() * (r.tpr * c.tp() + (1.0 - r.tpr) * c.fn()) +
         prior.pi0() * (r.fpr * c.fp() + (1.0 - r.fpr) * c.tn());
}

int ba_workload(const Prior& prior, const AutomationPerfModel& automation,
                const HumanPerfModel& perf, const DecisionCosts& costs,
                const LoadSet& load_set) {
  const int k = load_set.batch_size();
  const double auto_cost = blind_auto_cost(prior, automation, costs);
  int best_w = load_set.min();
  double best = std::numeric_limits<double>::infinity();
  for (int w : load_set.loads()) {
    const double human = w > 0 ? blind_human_cost(prior, perf.rates(w), costs) : 0.0;
    const double total = (k - w) * auto_cost + w * human;
    if (total < best) {
      best = total;
      best_w = w;
    }
  }
  return best_w;
}

ReferralPlan ba_select(const Batch& batch, int w_ba, const DecisionCosts& costs,
                       Engine& rng) {
  if (w_ba < 0 || w_ba > static_cast<int>(batch.size())) {
    throw DomainError("blind load " + std::to_string(w_ba) + " exceeds the batch size");
  }
  std::vector<int> ids;
  ids.reserve(batch.size());
  for (const Task& t : batch.tasks()) ids.push_back(t.task_id);
  std::vector<int> chosen;
  chosen.reserve(static_cast<std::size_t>(w_ba));
  std::sample(ids.begin(), ids.end(), std::back_inserter(chosen), w_ba, rng);
  return make_plan(batch, std::move(chosen), costs);
}

int sa_workload(std::span<const Batch> samples, const LoadSet& load_set,
                const HumanPerfModel& perf, const DecisionCosts& costs) {
  if (samples.empty()) throw DomainError("static allocation needs at least one sample batch");
  int best_w = load_set.min();
  double best = std::numeric_limits<double>::infinity();
  for (int w : load_set.loads()) {
    const Rates rates = w > 0 ? perf.rates(w) : Rates{};
    double sum = 0.0;
    for (const Batch& b : samples) sum += fixed_load_cost(b, w, rates, costs);
    const double mean = sum / static_cast<double>(samples.size());
    if (mean < best) {
      best = mean;
      best_w = w;
    }
  }
  return best_w;
}

ReferralPlan sa_select(const Batch& batch, int w_sa, const HumanPerfModel& perf,
                       const DecisionCosts& costs) {
  return make_plan(batch, top_w_referral(batch, w_sa, perf, costs).referred, costs);
}

}  // namespace refereval
