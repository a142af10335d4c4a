#include "refereval/types.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "refereval/error.hpp"

namespace refereval {

std::string_view to_string(Hypothesis h) {
  return h == Hypothesis::kH1 ? "H1" : "H0";
}

Hypothesis hypothesis_from_string(std::string_view s) {
  if (s == "H0") return Hypothesis::kH0;
  if (s == "H1") return Hypothesis::kH1;
  throw DomainError("unknown hypothesis label '" + std::string(s) + "'");
}

Prior::Prior(double pi1) : pi1_(pi1) {
  if (!(pi1 >= 0.0 && pi1 <= 1.0)) {
    throw DomainError("prior pi1 must lie in [0, 1], got " + std::to_string(pi1));
  }
}

DecisionCosts::DecisionCosts(double c_tp, double c_fp, double c_tn, double c_fn,
                             double c_r)
    : c_tp_(c_tp), c_fp_(c_fp), c_tn_(c_tn), c_fn_(c_fn), c_r_(c_r) {
  for (double c : {c_tp, c_fp, c_tn, c_fn, c_r}) {
    if (!std::isfinite(c) || c < 0.0) {
      throw DomainError("invalid_costs", "decision costs must be finite and nonnegative");
    }
  }
  if (!(c_fp > c_tn) || !(c_fn > c_tp)) {
    throw DomainError("invalid_costs",
                      "costs require c_fp > c_tn and c_fn > c_tp");
  }
}

double DecisionCosts::of(Hypothesis decision, Hypothesis truth) const {
  if (decision == Hypothesis::kH1) {
    return truth == Hypothesis::kH1 ? c_tp_ : c_fp_;
  }
  return truth == Hypothesis::kH1 ? c_fn_ : c_tn_;
}

DecisionCosts DecisionCosts::scaled(double lambda) const {
  return DecisionCosts(lambda * c_tp_, lambda * c_fp_, lambda * c_tn_,
                       lambda * c_fn_, lambda * c_r_);
}

double DecisionCosts::indifference_posterior() const {
  const double a = c_fp_ - c_tn_;
  return a / (a + c_fn_ - c_tp_);
}

Batch::Batch(std::vector<Task> tasks) : tasks_(std::move(tasks)) {
  std::set<int> seen;
  for (const Task& t : tasks_) {
    if (!seen.insert(t.task_id).second) {
      throw DomainError("duplicate task id " + std::to_string(t.task_id));
    }
    if (!(t.posterior >= 0.0 && t.posterior <= 1.0)) {
      throw DomainError("posterior of task " + std::to_string(t.task_id) +
                        " outside [0, 1]");
    }
  }
}

Batch Batch::from_posteriors(std::span<const double> posteriors) {
  std::vector<Task> tasks;
  tasks.reserve(posteriors.size());
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    tasks.push_back({static_cast<int>(i), posteriors[i], std::nullopt});
  }
  return Batch(std::move(tasks));
}

LoadSet::LoadSet(std::vector<int> loads, int batch_size)
    : loads_(std::move(loads)), batch_size_(batch_size) {
  std::sort(loads_.begin(), loads_.end());
  loads_.erase(std::unique(loads_.begin(), loads_.end()), loads_.end());
  if (loads_.empty()) throw DomainError("load set must be nonempty");
  if (loads_.front() < 0 || loads_.back() > batch_size) {
    throw DomainError("load set must lie within [0, " +
                      std::to_string(batch_size) + "]");
  }
}

LoadSet LoadSet::full(int batch_size) { return range(0, batch_size, batch_size); }

LoadSet LoadSet::range(int lo, int hi, int batch_size) {
  std::vector<int> loads;
  for (int w = lo; w <= hi; ++w) loads.push_back(w);
  return LoadSet(std::move(loads), batch_size);
}

bool LoadSet::contains(int w) const {
  return std::binary_search(loads_.begin(), loads_.end(), w);
}

bool ReferralPlan::is_referred(int task_id) const {
  return std::binary_search(referred.begin(), referred.end(), task_id);
}

}  // namespace refereval
