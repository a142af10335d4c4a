#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "refereval/rng.hpp"
#include "refereval/types.hpp"

namespace refereval {

// Standard normal tail Q(x) = P(Z > x), via erfc.
double normal_tail(double x);

// Two-hypothesis Gaussian observation model with a shared standard deviation.
struct GaussianObsModel {
  double mean0 = 0.0;
  double mean1 = 1.0;
  double sigma = 1.0;

  GaussianObsModel() = default;
  GaussianObsModel(double mean0, double mean1, double sigma);

  // ln p(y | H1) - ln p(y | H0). Exact in the tails, no density evaluation.
  double log_likelihood_ratio(double y) const;
  double density(double y, Hypothesis h) const;
};

enum class HumanLawCase { kCase1, kCase2 };

// Load-dependent human observation law.
//   case 1: mu_h(w) = (1 - w/K) mu0, sigma_h(w) = sigma0
//   case 2: mu_h(w) = mu0 (= d0),     sigma_h(w)^2 = (1 + w/K) sigma0^2
struct HumanObsLaw {
  HumanLawCase variant = HumanLawCase::kCase1;
  double mu0 = 3.0;
  double sigma0 = 1.0;
  int batch_size = 20;

  GaussianObsModel at_load(int w) const;
};

struct ObsParams {
  double mu = 0.0;
  double sigma = 1.0;
};

ObsParams human_obs_params(const HumanObsLaw& law, int w);

// Whether the law satisfies its case's constraints relative to an automation
// model (case 1: 0 < d0 < (1-1/K) mu0 and sigma0^2 <= sigma_a^2; case 2:
// (1+1/K) sigma0^2 < sigma_a^2 < 2 sigma0^2).
bool satisfies_case_constraints(const HumanObsLaw& law,
                                const GaussianObsModel& automation);

// Human Bayes threshold on her own posterior; same value as the automation's
// indifference posterior.
double bayes_threshold_rho(const DecisionCosts& costs);

double tau(const HumanObsLaw& law, int w, const DecisionCosts& costs,
           const Prior& prior);

// TPR/FPR of a Bayes decision maker with a Gaussian observation model.
// At zero separation the posterior equals the prior for every observation,
// so both rates are 1 when pi1 >= rho and 0 otherwise.
Rates gaussian_bayes_rates(const ObsParams& obs, const DecisionCosts& costs,
                           const Prior& prior);

Rates analytic_tpr_fpr(const HumanObsLaw& law, int w,
                       const DecisionCosts& costs, const Prior& prior);

struct AnalyticPerf {
  HumanObsLaw law;
  DecisionCosts costs;
  Prior prior;
};

// Loads need not be contiguous; rates are linearly interpolated between
// knots and clamped outside [loads.front(), loads.back()].
struct TablePerf {
  std::vector<int> loads;
  std::vector<double> tpr;
  std::vector<double> fpr;
};

// Follows the decision tree on up to `capacity` tasks per round; the rest are
// labelled by a fair coin.
struct CapacityPerf {
  double tree_tpr = 0.87;
  double tree_fpr = 0.046;
  int capacity = 10;
  double guess_tpr = 0.5;
  double guess_fpr = 0.5;
};

Rates capacity_tpr_fpr(const CapacityPerf& model, int w);
Rates interp_perf(const TablePerf& table, int w);

// Load-dependent human TPR/FPR. Optionally restricted to a declared load
// domain; queries outside it raise DomainError.
class HumanPerfModel {
 public:
  using Variant = std::variant<AnalyticPerf, TablePerf, CapacityPerf>;

  explicit HumanPerfModel(Variant model,
                          std::optional<std::vector<int>> domain = std::nullopt);

  Rates rates(int w) const;
  bool in_domain(int w) const;

  const Variant& model() const { return model_; }
  const std::optional<std::vector<int>>& domain() const { return domain_; }

 private:
  Variant model_;
  std::optional<std::vector<int>> domain_;
};

struct AutomationPerfModel {
  double tpr = 0.0;
  double fpr = 0.0;
};

// Rates of the automation's Bayes decision on a Gaussian model.
AutomationPerfModel automation_rates(const GaussianObsModel& model,
                                     const DecisionCosts& costs,
                                     const Prior& prior);

double sample_observation(Hypothesis h, const GaussianObsModel& model,
                          Engine& rng);

// Human rule on her own posterior: H1 iff p >= rho.
Hypothesis simulate_human_decision(double human_posterior,
                                   const DecisionCosts& costs);

// Full simulated-human pipeline for one task: fresh observation under the
// load-w law, Bayes posterior with the system prior, threshold rule.
Hypothesis simulate_human_on_task(Hypothesis truth, const HumanObsLaw& law,
                                  int w, const DecisionCosts& costs,
                                  const Prior& prior, Engine& rng);

}  // namespace refereval
