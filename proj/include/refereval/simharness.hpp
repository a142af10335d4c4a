#pragma once

// Randomized policy-comparison study: sample problem instances, generate
// batches, run the OA/BA/SA policies, score realized and expected costs.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "refereval/policies.hpp"

namespace refereval {

enum class Policy { kOA, kBA, kSA };

std::string_view policy_name(Policy p);
Policy policy_from_name(std::string_view name);

// A scalar that is either fixed (lo == hi) or drawn from U(lo, hi).
struct UniformParam {
  double lo = 0.0;
  double hi = 0.0;

  double sample(Engine& rng) const;
};

struct StudyConfig {
  int n_instances = 25;
  int n_batches = 2000;
  int sa_samples = 2000;
  std::uint64_t seed = 1;
  std::vector<Policy> policies{Policy::kOA, Policy::kBA, Policy::kSA};
};

// Scenario configuration. Defaults reproduce the randomized study: pi0 = 0.8,
// d0 = mu0 = 3, sigma_a ~ U(1.5, 2), sigma0 ~ U(1, 1.5), c_fp, c_fn ~ U(8, 12),
// c_tp, c_tn ~ U(0, 2), c_r ~ U(0, 0.5), K = 20, case-1 human law.
struct ScenarioConfig {
  double pi1 = 0.2;
  double d0 = 3.0;
  UniformParam sigma_a{1.5, 2.0};
  HumanLawCase law_case = HumanLawCase::kCase1;
  double mu0 = 3.0;
  UniformParam sigma0{1.0, 1.5};
  UniformParam c_tp{0.0, 2.0};
  UniformParam c_fp{8.0, 12.0};
  UniformParam c_tn{0.0, 2.0};
  UniformParam c_fn{8.0, 12.0};
  UniformParam c_r{0.0, 0.5};
  int batch_size = 20;
  std::optional<std::vector<int>> load_set;  // defaults to {0..K}
  StudyConfig study;
};

ScenarioConfig scenario_from_json(const nlohmann::json& doc);
nlohmann::json scenario_to_json(const ScenarioConfig& config);

struct ProblemInstance {
  Prior prior;
  GaussianObsModel automation;
  HumanObsLaw human_law;
  DecisionCosts costs;
  int batch_size;
  LoadSet load_set;
};

nlohmann::json instance_to_json(const ProblemInstance& instance);

ProblemInstance sample_problem_instance(const ScenarioConfig& config, Engine& rng);

// K i.i.d. states, automation observations, and posteriors; true states kept.
Batch generate_batch(const ProblemInstance& instance, Engine& rng);

HumanPerfModel analytic_perf(const ProblemInstance& instance);

// Static allocation load estimated from n_samples batches, each drawn from
// its own stream derived from (seed, sample index).
int sa_workload(const ProblemInstance& instance, const LoadSet& load_set,
                int n_samples, std::uint64_t seed, int workers = 1);

struct BatchOutcome {
  double realized_cost = 0.0;
  double expected_cost = 0.0;
  int load = 0;
};

// Scores a plan: referred tasks get fresh simulated-human decisions at load
// |N|; realized = sum of C(D_k, H_k) + c_r |N|; expected = team_cost.
BatchOutcome run_policy_on_batch(const ReferralPlan& plan, const Batch& batch,
                                 const ProblemInstance& instance,
                                 const HumanPerfModel& perf, Engine& human_rng);

struct StudyRow {
  int instance_id = 0;
  Policy policy = Policy::kOA;
  int batch_id = 0;
  double realized_cost = 0.0;
  double expected_cost = 0.0;
  int load = 0;

  bool operator==(const StudyRow&) const = default;
};

struct InstanceSummary {
  int instance_id = 0;
  int w_ba = -1;
  int w_sa = -1;
  nlohmann::json parameters;
};

struct StudyResults {
  std::uint64_t seed = 0;
  std::vector<StudyRow> rows;
  std::vector<InstanceSummary> instances;
};

// Rows are ordered by (instance, batch, policy order in the config). The
// output is a pure function of the config and master seed.
StudyResults run_study(const ScenarioConfig& config, std::uint64_t master_seed,
                       int workers = 1);

// Delimited text with header
//   instance_id,policy,batch_id,realized_cost,expected_cost,load
// plus a sidecar `<path>.meta.json` holding `metadata` and per-instance
// parameters.
void export_results(const StudyResults& results, const std::filesystem::path& path,
                    const nlohmann::json& metadata);

std::vector<StudyRow> read_results(const std::filesystem::path& path);

}  // namespace refereval
