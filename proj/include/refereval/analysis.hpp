#pragma once

// Estimation of human TPR/FPR from session logs and the paired-comparison
// statistics used to compare allocation policies on participant data.

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "refereval/microworld.hpp"

namespace refereval {

struct LoadCounts {
  int w = 0;
  long n_h1 = 0;
  long n_h1_hit = 0;
  long n_h0 = 0;
  long n_h0_fa = 0;
  double tpr = 0.0;
  double fpr = 0.0;
  bool valid = false;  // both denominators nonzero
};

struct PerfEstimate {
  std::vector<LoadCounts> per_load;  // every load observed in the logs
  std::vector<int> load_set;         // target loads of the interpolated table
  TablePerf table;                   // knots: valid loads only
  std::vector<std::string> excluded_sessions;
};

struct EstimateOptions {
  bool include_auto_resolved = true;
  double min_completion = 0.55;  // share of assigned tasks the participant labelled
  std::vector<int> load_set{6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
};

// Share of the non-practice tasks assigned in `truth` that carry a human
// decision in the log.
double completion_rate(const SessionLog& log, const Schedule& truth);

// Pooled counts per load over every non-practice round of the schedule.
// Sessions below the completion threshold are dropped and listed. Throws
// DomainError("no_data") when no load has both denominators.
PerfEstimate estimate_perf(std::span<const SessionLog> logs, const Schedule& truth,
                           const EstimateOptions& options = {});

// {"kind": "table", "loads", "tpr", "fpr", "load_set", "counts": [...]}
nlohmann::json perf_estimate_to_json(const PerfEstimate& estimate);

// Reads any perf document: {"kind": "table"|"capacity"|"analytic", ...}.
// Table documents yield an interpolated model over their knots.
HumanPerfModel perf_model_from_json(const nlohmann::json& doc);

enum class Alternative { kGreater, kTwoSided };

struct PairedTestResult {
  double t0 = 0.0;
  int df = 0;
  double p_value = 1.0;
  double mean_diff = 0.0;
  double s_d = 0.0;
  int n = 0;
};

// Student-t distribution function.
double student_t_cdf(double t, double df);

// t0 = mean / (s_d / sqrt(n)) with the standard sample deviation s_d.
// Throws DomainError("insufficient_data") for n < 2 and
// DegenerateError("degenerate_variance") when s_d = 0.
PairedTestResult paired_t_test(std::span<const double> diffs,
                               Alternative alternative = Alternative::kGreater);

nlohmann::json paired_result_to_json(const PairedTestResult& r);

struct SubjectCosts {
  std::vector<double> ba;
  std::vector<double> oa;
};

struct SubjectSummary {
  std::string subject;
  double mean_ba = 0.0, sd_ba = 0.0;
  double mean_oa = 0.0, sd_oa = 0.0;
};

struct ComparisonReport {
  std::vector<SubjectSummary> subjects;
  std::vector<std::string> excluded;  // subjects lacking one of the policies
  PairedTestResult average_case;      // d = mean_ba - mean_oa
  PairedTestResult worst_case;        // d = (mean_ba + sd_ba) - (mean_oa - sd_oa)
};

ComparisonReport compare_policies(const std::map<std::string, SubjectCosts>& costs,
                                  Alternative alternative = Alternative::kGreater);

nlohmann::json comparison_to_json(const ComparisonReport& report);

// Realized cost of every complete OA or BA round of a session: human labels
// on referred tasks, automation labels on the rest, plus c_r per referral.
// Rounds with a referred task that has no event are skipped.
SubjectCosts round_costs(const SessionLog& log, const Schedule& truth);

struct SummaryStats {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  std::vector<double> outliers;  // beyond 1.5 IQR from the quartiles
};

// Quartiles interpolate linearly between order statistics. Throws
// DomainError("empty") on empty input.
SummaryStats summary_stats(std::span<const double> values);

// Synthetic participant following the capacity model: in each non-practice
// round it labels min(w, capacity) randomly chosen tasks at the tree rates
// and leaves the rest for auto-resolution, which is applied at the round end.
SessionLog simulate_capacity_session(const Schedule& schedule, const CapacityPerf& model,
                                     const std::string& session_id,
                                     const std::string& participant, Engine& rng);

}  // namespace refereval
