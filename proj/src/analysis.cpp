#include "refereval/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>

#include "refereval/error.hpp"

namespace refereval {

using nlohmann::json;

namespace {

struct TaskTruth {
  int round_id;
  int load;
  bool practice;
  Hypothesis truth;
};

std::unordered_map<int, TaskTruth> index_assigned(const Schedule& truth) {
  std::unordered_map<int, TaskTruth> out;
  for (const Round& r : truth.rounds) {
    for (const MicroworldTask& t : r.tasks) {
      out[t.task_id] = {r.round_id, r.load(), r.practice(), t.true_state};
    }
  }
  return out;
}

}  // namespace

double completion_rate(const SessionLog& log, const Schedule& truth) {
  std::set<std::pair<int, int>> assigned;
  for (const Round& r : truth.rounds) {
    if (r.practice()) continue;
    for (const auto& t : r.tasks) assigned.insert({r.round_id, t.task_id});
  }
  if (assigned.empty()) return 0.0;
  std::set<std::pair<int, int>> labelled;
  for (const DecisionEvent& e : log.events) {
    if (e.source == EventSource::kHuman && e.decision && assigned.count({e.round_id, e.task_id})) {
      labelled.insert({e.round_id, e.task_id});
    }
  }
  return static_cast<double>(labelled.size()) / static_cast<double>(assigned.size());
}

PerfEstimate estimate_perf(std::span<const SessionLog> logs, const Schedule& truth,
                           const EstimateOptions& options) {
  const auto assigned = index_assigned(truth);
  std::map<int, LoadCounts> counts;
  PerfEstimate out;
  out.load_set = options.load_set;
  for (const SessionLog& log : logs) {
    if (completion_rate(log, truth) < options.min_completion) {
      out.excluded_sessions.push_back(log.session_id);
      continue;
    }
    for (const DecisionEvent& e : log.events) {
      if (!e.decision || e.practice) continue;
      if (e.source == EventSource::kAutoResolve && !options.include_auto_resolved) continue;
      const auto it = assigned.find(e.task_id);
      if (it == assigned.end() || it->second.round_id != e.round_id || it->second.practice) continue;
      LoadCounts& c = counts[it->second.load];
      c.w = it->second.load;
      const bool said_h1 = *e.decision == Hypothesis::kH1;
      if (it->second.truth == Hypothesis::kH1) {
        ++c.n_h1;
        c.n_h1_hit += said_h1;
      } else {
        ++c.n_h0;
        c.n_h0_fa += said_h1;
      }
    }
  }
  for (auto& [w, c] : counts) {
    c.valid = c.n_h1 > 0 && c.n_h0 > 0;
    if (c.n_h1 > 0) c.tpr = static_cast<double>(c.n_h1_hit) / static_cast<double>(c.n_h1);
    if (c.n_h0 > 0) c.fpr = static_cast<double>(c.n_h0_fa) / static_cast<double>(c.n_h0);
    out.per_load.push_back(c);
    if (c.valid) {
      out.table.loads.push_back(w);
      out.table.tpr.push_back(c.tpr);
      out.table.fpr.push_back(c.fpr);
    }
  }
  if (out.table.loads.empty()) {
    throw DomainError("no_data", "no task load has decisions on both hypotheses");
  }
  return out;
}

json perf_estimate_to_json(const PerfEstimate& e) {
  json counts = json::array();
  for (const LoadCounts& c : e.per_load) {
    json row = {{"w", c.w},     {"n_h1", c.n_h1}, {"n_h1_hit", c.n_h1_hit}, {"n_h0", c.n_h0},
                {"n_h0_fa", c.n_h0_fa}, {"valid", c.valid}};
    row["tpr"] = c.n_h1 > 0 ? json(c.tpr) : json(nullptr);
    row["fpr"] = c.n_h0 > 0 ? json(c.fpr) : json(nullptr);
    counts.push_back(row);
  }
  json interpolated = json::array();
  for (int w : e.load_set) {
    const Rates r = interp_perf(e.table, w);
    interpolated.push_back({{"w", w}, {"tpr", r.tpr}, {"fpr", r.fpr}});
  }
  return {{"kind", "table"},
          {"loads", e.table.loads},
          {"tpr", e.table.tpr},
          {"fpr", e.table.fpr},
          {"load_set", e.load_set},
          {"interpolated", interpolated},
          {"counts", counts},
          {"excluded_sessions", e.excluded_sessions}};
}

HumanPerfModel perf_model_from_json(const json& doc) {
  try {
    const auto kind = doc.at("kind").get<std::string>();
    if (kind == "table") {
      TablePerf t{doc.at("loads").get<std::vector<int>>(), doc.at("tpr").get<std::vector<double>>(),
                  doc.at("fpr").get<std::vector<double>>()};
      return HumanPerfModel(std::move(t));
    }
    if (kind == "capacity") {
      CapacityPerf c;
      c.tree_tpr = doc.value("tree_tpr", c.tree_tpr);
      c.tree_fpr = doc.value("tree_fpr", c.tree_fpr);
      c.capacity = doc.value("capacity", c.capacity);
      c.guess_tpr = doc.value("guess_tpr", c.guess_tpr);
      c.guess_fpr = doc.value("guess_fpr", c.guess_fpr);
      return HumanPerfModel(c);
    }
    throw DomainError("perf", "unsupported perf kind '" + kind + "' (expected table or capacity)");
  } catch (const json::exception& e) {
    throw DomainError("perf", std::string("malformed perf document: ") + e.what());
  }
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw DomainError("degrees of freedom must be positive");
  const boost::math::students_t dist(df);
  return boost::math::cdf(dist, t);
}

PairedTestResult paired_t_test(std::span<const double> diffs, Alternative alternative) {
  const std::size_t n = diffs.size();
  if (n < 2) throw DomainError("insufficient_data", "paired t-test needs at least two differences");
  PairedTestResult r;
  r.n = static_cast<int>(n);
  r.df = r.n - 1;
  r.mean_diff = std::accumulate(diffs.begin(), diffs.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double d : diffs) ss += (d - r.mean_diff) * (d - r.mean_diff);
  r.s_d = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(r.s_d > 0.0)) {
    throw DegenerateError("degenerate_variance", "all differences are equal");
  }
  r.t0 = r.mean_diff / (r.s_d / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(r.df);
  if (alternative == Alternative::kGreater) {
    r.p_value = boost::math::cdf(boost::math::complement(dist, r.t0));
  } else {
    r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t0))));
  }
  return r;
}

json paired_result_to_json(const PairedTestResult& r) {
  return {{"t0", r.t0}, {"df", r.df}, {"p_value", r.p_value},
          {"mean_diff", r.mean_diff}, {"s_d", r.s_d}, {"n", r.n}};
}

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

ComparisonReport compare_policies(const std::map<std::string, SubjectCosts>& costs,
                                  Alternative alternative) {
  ComparisonReport report;
  std::vector<double> avg, worst;
  for (const auto& [subject, c] : costs) {
    if (c.ba.empty() || c.oa.empty()) {
      report.excluded.push_back(subject);
      continue;
    }
    SubjectSummary s;
    s.subject = subject;
    s.mean_ba = mean_of(c.ba);
    s.sd_ba = sd_of(c.ba, s.mean_ba);
    s.mean_oa = mean_of(c.oa);
    s.sd_oa = sd_of(c.oa, s.mean_oa);
    avg.push_back(s.mean_ba - s.mean_oa);
    worst.push_back((s.mean_ba + s.sd_ba) - (s.mean_oa - s.sd_oa));
    report.subjects.push_back(std::move(s));
  }
  report.average_case = paired_t_test(avg, alternative);
  report.worst_case = paired_t_test(worst, alternative);
  return report;
}

json comparison_to_json(const ComparisonReport& r) {
  json subjects = json::array();
  for (const SubjectSummary& s : r.subjects) {
    subjects.push_back({{"subject", s.subject}, {"mean_ba", s.mean_ba}, {"sd_ba", s.sd_ba},
                        {"mean_oa", s.mean_oa}, {"sd_oa", s.sd_oa}});
  }
  return {{"n_subjects", r.subjects.size()},
          {"average_case", paired_result_to_json(r.average_case)},
          {"worst_case", paired_result_to_json(r.worst_case)},
          {"subjects", subjects},
          {"excluded", r.excluded}};
}

SubjectCosts round_costs(const SessionLog& log, const Schedule& truth) {
  std::map<std::pair<int, int>, Hypothesis> labels;
  for (const DecisionEvent& e : log.events) {
    if (e.decision) labels.emplace(std::pair{e.round_id, e.task_id}, *e.decision);
  }
  SubjectCosts out;
  for (const Round& r : truth.rounds) {
    if (r.kind != RoundKind::kOA && r.kind != RoundKind::kBA) continue;
    double cost = 0.0;
    bool complete = true;
    for (const MicroworldTask& t : r.tasks) {
      const auto it = labels.find({r.round_id, t.task_id});
      if (it == labels.end()) {
        complete = false;
        break;
      }
      cost += truth.costs.of(it->second, t.true_state) + truth.costs.referral();
    }
    if (!complete) continue;
    for (const AutomatedDecision& a : r.automated) cost += truth.costs.of(a.decision, a.task.true_state);
    (r.kind == RoundKind::kBA ? out.ba : out.oa).push_back(cost);
  }
  return out;
}

SummaryStats summary_stats(std::span<const double> values) {
  if (values.empty()) throw DomainError("empty", "summary statistics of an empty sequence");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const auto quantile = [&](double q) {
    const double h = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  SummaryStats s;
  s.mean = mean_of(v);
  s.std = sd_of(v, s.mean);
  s.median = quantile(0.5);
  s.q1 = quantile(0.25);
  s.q3 = quantile(0.75);
  const double iqr = s.q3 - s.q1;
  for (double x : values) {
    if (x < s.q1 - 1.5 * iqr || x > s.q3 + 1.5 * iqr) s.outliers.push_back(x);
  }
  return s;
}

SessionLog simulate_capacity_session(const Schedule& schedule, const CapacityPerf& model,
                                     const std::string& session_id,
                                     const std::string& participant, Engine& rng) {
  SessionLog log;
  log.session_id = session_id;
  log.participant = participant;
  std::int64_t clock_ms = 0;
  for (const Round& r : schedule.rounds) {
    if (r.practice()) continue;
    const auto duration_ms = static_cast<std::int64_t>(r.duration_s * 1000.0);
    std::vector<std::size_t> order(r.tasks.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(model.capacity)));
    const std::int64_t step = order.empty() ? 0 : duration_ms / static_cast<std::int64_t>(order.size() + 1);
    std::int64_t t = clock_ms;
    std::vector<DecisionEvent> events;
    for (std::size_t i : order) {
      const MicroworldTask& task = r.tasks[i];
      const double p_h1 = task.true_state == Hypothesis::kH1 ? model.tree_tpr : model.tree_fpr;
      DecisionEvent e;
      t += step;
      e.timestamp_ms = t;
      e.session_id = session_id;
      e.participant = participant;
      e.round_id = r.round_id;
      e.task_id = task.task_id;
      e.decision = std::bernoulli_distribution(p_h1)(rng) ? Hypothesis::kH1 : Hypothesis::kH0;
      events.push_back(e);
    }
    clock_ms += duration_ms;
    auto resolved = resolve_unclassified(r, events, session_id, participant, clock_ms, rng);
    for (auto& e : events) log.events.push_back(std::move(e));
    for (auto& e : resolved) log.events.push_back(std::move(e));
  }
  return log;
}

}  // namespace refereval
