#include "refereval/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "refereval/core.hpp"
#include "refereval/error.hpp"

namespace refereval {

double normal_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

GaussianObsModel::GaussianObsModel(double mean0_, double mean1_, double sigma_)
    : mean0(mean0_), mean1(mean1_), sigma(sigma_) {
  if (!(sigma_ > 0.0) || !std::isfinite(sigma_)) {
    throw DomainError("observation sigma must be positive");
  }
}

double GaussianObsModel::log_likelihood_ratio(double y) const {
  const double a = y - mean0;
  const double b = y - mean1;
  return (a * a - b * b) / (2.0 * sigma * sigma);
}

double GaussianObsModel::density(double y, Hypothesis h) const {
  const double m = h == Hypothesis::kH1 ? mean1 : mean0;
  const double z = (y - m) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

ObsParams human_obs_params(const HumanObsLaw& law, int w) {
  if (law.batch_size <= 0) throw DomainError("batch size must be positive");
  if (w < 0 || w > law.batch_size) {
    throw DomainError("load " + std::to_string(w) + " outside [0, " +
                      std::to_string(law.batch_size) + "]");
  }
  const double frac = static_cast<double>(w) / law.batch_size;
  if (law.variant == HumanLawCase::kCase1) {
    return {(1.0 - frac) * law.mu0, law.sigma0};
  }
  return {law.mu0, law.sigma0 * std::sqrt(1.0 + frac)};
}

GaussianObsModel HumanObsLaw::at_load(int w) const {
  const ObsParams p = human_obs_params(*this, w);
  return GaussianObsModel(0.0, p.mu, p.sigma);
}

bool satisfies_case_constraints(const HumanObsLaw& law,
                                const GaussianObsModel& automation) {
  const double k = law.batch_size;
  const double sa2 = automation.sigma * automation.sigma;
  const double s02 = law.sigma0 * law.sigma0;
  const double d0 = automation.mean1 - automation.mean0;
  if (law.variant == HumanLawCase::kCase1) {
    return d0 > 0.0 && d0 < (1.0 - 1.0 / k) * law.mu0 && s02 <= sa2;
  }
  return (1.0 + 1.0 / k) * s02 < sa2 && sa2 < 2.0 * s02;
}

double bayes_threshold_rho(const DecisionCosts& costs) {
  return costs.indifference_posterior();
}

namespace {

double log_threshold_ratio(const DecisionCosts& costs, const Prior& prior) {
  if (!(prior.pi1() > 0.0 && prior.pi1() < 1.0)) {
    throw DomainError("tau requires 0 < pi1 < 1");
  }
  return std::log(((costs.fp() - costs.tn()) * prior.pi0()) /
                  ((costs.fn() - costs.tp()) * prior.pi1()));
}

}  // namespace

double tau(const HumanObsLaw& law, int w, const DecisionCosts& costs,
           const Prior& prior) {
  const ObsParams obs = human_obs_params(law, w);
  if (obs.mu == 0.0) {
    throw DegenerateError("zero_separation",
                          "tau undefined: human mean collapsed to zero at load " +
                              std::to_string(w));
  }
  return obs.mu / 2.0 + (obs.sigma * obs.sigma / obs.mu) * log_threshold_ratio(costs, prior);
}

Rates gaussian_bayes_rates(const ObsParams& obs, const DecisionCosts& costs,
                           const Prior& prior) {
  if (obs.mu == 0.0) {
    const double r = prior.pi1() >= bayes_threshold_rho(costs) ? 1.0 : 0.0;
    return {r, r};
  }
  if (obs.mu < 0.0) throw DomainError("tau requires a positive H1 mean");
  const double t =
      obs.mu / 2.0 + (obs.sigma * obs.sigma / obs.mu) * log_threshold_ratio(costs, prior);
  return {normal_tail((t - obs.mu) / obs.sigma), normal_tail(t / obs.sigma)};
}

Rates analytic_tpr_fpr(const HumanObsLaw& law, int w, const DecisionCosts& costs,
                       const Prior& prior) {
  return gaussian_bayes_rates(human_obs_params(law, w), costs, prior);
}

Rates capacity_tpr_fpr(const CapacityPerf& model, int w) {
  if (w < 1) throw DomainError("capacity model requires w >= 1");
  if (model.capacity < 1) throw DomainError("capacity must be >= 1");
  if (w <= model.capacity) return {model.tree_tpr, model.tree_fpr};
  const double share = static_cast<double>(model.capacity) / w;
  return {share * model.tree_tpr + (1.0 - share) * model.guess_tpr,
          share * model.tree_fpr + (1.0 - share) * model.guess_fpr};
}

Rates interp_perf(const TablePerf& table, int w) {
  const auto& x = table.loads;
  if (x.empty()) throw DomainError("empty_table", "performance table is empty");
  if (table.tpr.size() != x.size() || table.fpr.size() != x.size()) {
    throw DomainError("performance table columns differ in length");
  }
  if (w <= x.front()) return {table.tpr.front(), table.fpr.front()};
  if (w >= x.back()) return {table.tpr.back(), table.fpr.back()};
  const auto hi = static_cast<std::size_t>(
      std::upper_bound(x.begin(), x.end(), w) - x.begin());
  const std::size_t lo = hi - 1;
  if (x[lo] == w) return {table.tpr[lo], table.fpr[lo]};
  const double t = static_cast<double>(w - x[lo]) / (x[hi] - x[lo]);
  return {table.tpr[lo] + t * (table.tpr[hi] - table.tpr[lo]),
          table.fpr[lo] + t * (table.fpr[hi] - table.fpr[lo])};
}

HumanPerfModel::HumanPerfModel(Variant model, std::optional<std::vector<int>> domain)
    : model_(std::move(model)), domain_(std::move(domain)) {
  if (domain_) std::sort(domain_->begin(), domain_->end());
  if (const auto* t = std::get_if<TablePerf>(&model_)) {
    if (t->loads.empty()) throw DomainError("empty_table", "performance table is empty");
    if (!std::is_sorted(t->loads.begin(), t->loads.end()) ||
        std::adjacent_find(t->loads.begin(), t->loads.end()) != t->loads.end()) {
      throw DomainError("performance table loads must be strictly increasing");
    }
    if (t->tpr.size() != t->loads.size() || t->fpr.size() != t->loads.size()) {
      throw DomainError("performance table columns differ in length");
    }
    for (std::size_t i = 0; i < t->loads.size(); ++i) {
      if (!(t->tpr[i] >= 0.0 && t->tpr[i] <= 1.0 && t->fpr[i] >= 0.0 && t->fpr[i] <= 1.0)) {
        throw DomainError("performance table rates must lie in [0, 1]");
      }
    }
  }
  if (const auto* c = std::get_if<CapacityPerf>(&model_); c && c->capacity < 1) {
    throw DomainError("capacity must be >= 1");
  }
}

bool HumanPerfModel::in_domain(int w) const {
  if (!domain_) return true;
  return std::binary_search(domain_->begin(), domain_->end(), w);
}

Rates HumanPerfModel::rates(int w) const {
  if (!in_domain(w)) {
    throw DomainError("load " + std::to_string(w) +
                      " outside the performance model's load set");
  }
  struct Visitor {
    int w;
    Rates operator()(const AnalyticPerf& m) const {
      return analytic_tpr_fpr(m.law, w, m.costs, m.prior);
    }
    Rates operator()(const TablePerf& m) const { return interp_perf(m, w); }
    Rates operator()(const CapacityPerf& m) const { return capacity_tpr_fpr(m, w); }
  };
  return std::visit(Visitor{w}, model_);
}

AutomationPerfModel automation_rates(const GaussianObsModel& model,
                                     const DecisionCosts& costs,
                                     const Prior& prior) {
  // The automation decides H1 iff its posterior exceeds the indifference
  // posterior; the boundary has probability zero under a continuous model.
  const ObsParams shifted{model.mean1 - model.mean0, model.sigma};
  const Rates r = gaussian_bayes_rates(shifted, costs, prior);
  return {r.tpr, r.fpr};
}

double sample_observation(Hypothesis h, const GaussianObsModel& model, Engine& rng) {
  std::normal_distribution<double> noise(0.0, model.sigma);
  return (h == Hypothesis::kH1 ? model.mean1 : model.mean0) + noise(rng);
}

Hypothesis simulate_human_decision(double human_posterior, const DecisionCosts& costs) {
  return human_posterior >= bayes_threshold_rho(costs) ? Hypothesis::kH1 : Hypothesis::kH0;
}

Hypothesis simulate_human_on_task(Hypothesis truth, const HumanObsLaw& law, int w,
                                  const DecisionCosts& costs, const Prior& prior,
                                  Engine& rng) {
  const ObsParams obs = human_obs_params(law, w);
  std::normal_distribution<double> noise(0.0, obs.sigma);
  const double y = (truth == Hypothesis::kH1 ? obs.mu : 0.0) + noise(rng);
  const double llr = (y * y - (y - obs.mu) * (y - obs.mu)) / (2.0 * obs.sigma * obs.sigma);
  return simulate_human_decision(posterior_from_llr(prior, llr), costs);
}

}  // namespace refereval
