// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fail.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <thread>

#include "refereval/analysis.hpp"
#include "refereval/oracle.hpp"
#include "refereval/simharness.hpp"

using namespace refereval;
using nlohmann::json;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail, double seconds) {
  std::printf("%s %-28s %s (%.1fs)\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str(), seconds);
  std::fflush(stdout);
  if (!ok) ++failures;
}

template <class F>
void criterion(const std::string& name, F&& body) {
  const auto start = std::chrono::steady_clock::now();
  bool ok = false;
  std::string detail;
  try {
    ok = body(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report(ok, name, detail, s);
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

json load_config(const std::string& name) {
  std::ifstream in(std::string(REFEREVAL_CONFIG_DIR) + "/" + name);
  if (!in) throw std::runtime_error("cannot open " + name);
  return json::parse(in);
}

int workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// Team cost of the subset `mask`, written from the cost definitions.
double subset_cost(const Batch& batch, unsigned mask, const HumanPerfModel& perf, const DecisionCosts& c) {
  const int w = std::popcount(mask);
  const Rates r = w ? perf.rates(w) : Rates{};
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double p = batch.tasks()[i].posterior;
    if (mask & (1u << i)) {
      total += c.referral() + (1 - p) * (r.fpr * c.fp() + (1 - r.fpr) * c.tn()) +
               p * (r.tpr * c.tp() + (1 - r.tpr) * c.fn());
    } else {
      total += std::min((1 - p) * c.tn() + p * c.fn(), (1 - p) * c.fp() + p * c.tp());
    }
  }
  return total;
}

}  // namespace

int main() {
  criterion("optimal_allocation_exact", [](std::string& detail) {
    int matches = 0;
    double worst = 0.0;
    const int n = 1000;
    for (int trial = 0; trial < n; ++trial) {
      Engine rng = make_stream(2024, {1, static_cast<std::uint64_t>(trial)});
      const int k = 1 + trial % 6;
      const OracleCase c = random_oracle_case(k, rng);
      const HumanPerfModel perf(c.table);
      double best = std::numeric_limits<double>::infinity();
      for (unsigned mask = 0; mask < (1u << k); ++mask) best = std::min(best, subset_cost(c.batch, mask, perf, c.costs));
      const auto oa = optimal_referral(c.batch, LoadSet::full(k), perf, c.costs);
      const double err = std::abs(team_cost(oa.plan, c.batch, perf, c.costs) - best);
      worst = std::max(worst, err);
      matches += err <= 1e-9;
    }
    detail = fmt("%d/%d instances match, max |err| %.2e", matches, n, worst);
    return matches == n;
  });

  criterion("fixed_load_top_w_exact", [](std::string& detail) {
    int matches = 0;
    double worst = 0.0;
    const int n = 500;
    for (int trial = 0; trial < n; ++trial) {
      Engine rng = make_stream(2024, {2, static_cast<std::uint64_t>(trial)});
      const int k = 1 + trial % 8;
      const OracleCase c = random_oracle_case(k, rng);
      const HumanPerfModel perf(c.table);
      bool all = true;
      for (int w = 0; w <= k; ++w) {
        double best = std::numeric_limits<double>::infinity();
        for (unsigned mask = 0; mask < (1u << k); ++mask) {
          if (std::popcount(mask) == w) best = std::min(best, subset_cost(c.batch, mask, perf, c.costs));
        }
        const auto top = top_w_referral(c.batch, w, perf, c.costs);
        const double err = std::abs(team_cost(make_plan(c.batch, top.referred, c.costs), c.batch, perf, c.costs) - best);
        worst = std::max(worst, err);
        all = all && err <= 1e-9;
      }
      matches += all;
    }
    detail = fmt("%d/%d instances match at every w, max |err| %.2e", matches, n, worst);
    return matches == n;
  });

  {
    // randomized policy comparison at full scale
    const auto start = std::chrono::steady_clock::now();
    StudyResults results;
    std::string error;
    try {
      const ScenarioConfig config = scenario_from_json(load_config("scenario_default.json"));
      results = run_study(config, config.study.seed, workers());
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!error.empty()) {
      report(false, "study_oa_le_ba", "exception: " + error, secs);
      report(false, "study_oa_15pct_below_ba", "exception: " + error, 0);
      report(false, "study_oa_sa_within_5pct", "exception: " + error, 0);
    } else {
      const int n_inst = static_cast<int>(results.instances.size());
      std::vector<std::array<double, 3>> sum(n_inst, {0, 0, 0});
      std::vector<std::array<int, 3>> cnt(n_inst, {0, 0, 0});
      for (const StudyRow& r : results.rows) {
        const int p = static_cast<int>(r.policy);
        sum[r.instance_id][p] += r.expected_cost;
        ++cnt[r.instance_id][p];
      }
      int ordered = 0, fifteen = 0, close = 0;
      double min_gain = 1.0, max_gain = 0.0, max_sa_gap = 0.0;
      for (int i = 0; i < n_inst; ++i) {
        const double oa = sum[i][static_cast<int>(Policy::kOA)] / cnt[i][static_cast<int>(Policy::kOA)];
        const double ba = sum[i][static_cast<int>(Policy::kBA)] / cnt[i][static_cast<int>(Policy::kBA)];
        const double sa = sum[i][static_cast<int>(Policy::kSA)] / cnt[i][static_cast<int>(Policy::kSA)];
        const double gain = (ba - oa) / ba;
        const double gap = (sa - oa) / oa;
        ordered += oa <= ba;
        fifteen += gain >= 0.15;
        close += std::abs(gap) <= 0.05;
        min_gain = std::min(min_gain, gain);
        max_gain = std::max(max_gain, gain);
        max_sa_gap = std::max(max_sa_gap, std::abs(gap));
      }
      report(ordered == n_inst && n_inst == 25, "study_oa_le_ba",
             fmt("mean OA <= mean BA in %d/%d instances", ordered, n_inst), secs);
      report(fifteen >= 20, "study_oa_15pct_below_ba",
             fmt("OA >= 15%% below BA in %d/%d instances (need 20); gain range %.1f%%..%.1f%%", fifteen,
                 n_inst, 100 * min_gain, 100 * max_gain),
             0);
      report(close >= 20, "study_oa_sa_within_5pct",
             fmt("|SA - OA| <= 5%% in %d/%d instances (need 20); max gap %.2f%%", close, n_inst,
                 100 * max_sa_gap),
             0);
    }
  }

  criterion("analytic_rates_oracle", [](std::string& detail) {
    const DecisionCosts costs(0.5, 10.0, 0.8, 9.0, 0.2);
    const Prior prior(0.2);
    const int samples = 100000;
    int ok = 0, checked = 0;
    double worst_z = 0.0;
    for (HumanLawCase lc : {HumanLawCase::kCase1, HumanLawCase::kCase2}) {
      const HumanObsLaw law{lc, 3.0, 1.25, 20};
      for (int w = 0; w <= 20; ++w) {
        const Rates a = analytic_tpr_fpr(law, w, costs, prior);
        Engine rng = make_stream(77, {static_cast<std::uint64_t>(lc == HumanLawCase::kCase1), static_cast<std::uint64_t>(w)});
        long tp = 0, fp = 0;
        for (int s = 0; s < samples; ++s) {
          tp += simulate_human_on_task(Hypothesis::kH1, law, w, costs, prior, rng) == Hypothesis::kH1;
          fp += simulate_human_on_task(Hypothesis::kH0, law, w, costs, prior, rng) == Hypothesis::kH1;
        }
        for (auto [analytic, hits] : {std::pair{a.tpr, tp}, std::pair{a.fpr, fp}}) {
          const double mc = static_cast<double>(hits) / samples;
          const double se = std::sqrt(analytic * (1 - analytic) / samples);
          const bool good = se > 0 ? std::abs(mc - analytic) <= 3 * se : mc == analytic;
          if (se > 0) worst_z = std::max(worst_z, std::abs(mc - analytic) / se);
          ok += good;
          ++checked;
        }
      }
    }
    detail = fmt("%d/%d rates within 3 SE over w = 0..20, both cases; max |z| %.2f", ok, checked, worst_z);
    return ok == checked;
  });

  criterion("capacity_model_values", [](std::string& detail) {
    const CapacityPerf m;
    bool ok = true;
    for (int w = 1; w <= 10; ++w) {
      const Rates r = capacity_tpr_fpr(m, w);
      ok = ok && r.tpr == 0.87 && r.fpr == 0.046;
    }
    const Rates r15 = capacity_tpr_fpr(m, 15);
    ok = ok && std::abs(r15.tpr - 0.7467) <= 1e-4 && std::abs(r15.fpr - 0.1973) <= 1e-4;
    detail = fmt("w<=10 exact; w=15 -> (%.4f, %.4f)", r15.tpr, r15.fpr);
    return ok;
  });

  criterion("tree_calibration", [](std::string& detail) {
    const ExperimentConfig cfg = experiment_config_from_json(load_config("experiment_reference.json"));
    Engine rng = make_stream(5, {1});
    const Rates h = tree_rates_monte_carlo(cfg.world.human_tree, cfg.world.schema, 100000, rng);
    const Rates a = tree_rates_monte_carlo(cfg.world.auto_tree, cfg.world.schema, 100000, rng);
    detail = fmt("human %.4f/%.4f, automation %.4f/%.4f", h.tpr, h.fpr, a.tpr, a.fpr);
    return std::abs(h.tpr - 0.87) <= 0.02 && std::abs(h.fpr - 0.046) <= 0.01 &&
           std::abs(a.tpr - 0.81) <= 0.02 && std::abs(a.fpr - 0.18) <= 0.02;
  });

  criterion("synthetic_replay", [](std::string& detail) {
    const ExperimentConfig base = experiment_config_from_json(load_config("experiment_reference.json"));
    const CapacityPerf model;
    const HumanPerfModel perf(model);
    const int reps = 100, participants = 14;
    int significant = 0;
    double min_t = std::numeric_limits<double>::infinity();
    for (int r = 0; r < reps; ++r) {
      ExperimentConfig cfg = base;
      cfg.seed = 1000 + r;
      Engine trng = make_stream(cfg.seed, {stream::kTasks});
      const Schedule schedule = build_experiment2(cfg, perf, trng).schedule;
      std::map<std::string, SubjectCosts> costs;
      for (int p = 0; p < participants; ++p) {
        Engine prng = make_stream(cfg.seed, {stream::kParticipant, static_cast<std::uint64_t>(p)});
        const std::string who = "synthetic-" + std::to_string(p);
        const SessionLog log = simulate_capacity_session(schedule, model, who, who, prng);
        costs[who] = round_costs(log, schedule);
      }
      const ComparisonReport rep = compare_policies(costs);
      min_t = std::min(min_t, rep.average_case.t0);
      significant += rep.average_case.t0 > 0 && rep.average_case.p_value < 0.05;
    }
    detail = fmt("%d/%d replications with t0 > 0 and p < 0.05 (need 95); min t0 %.2f", significant, reps, min_t);
    return significant >= 95;
  });

  criterion("paired_t_hand_example", [](std::string& detail) {
    const std::vector<double> d{2, 0, 2, 0};
    const PairedTestResult r = paired_t_test(d);
    detail = fmt("t0 = %.4f, df = %d", r.t0, r.df);
    return std::abs(r.t0 - 1.7321) <= 1e-4 && r.df == 3;
  });

  criterion("study_determinism", [](std::string& detail) {
    ScenarioConfig config = scenario_from_json(load_config("scenario_default.json"));
    config.study.n_instances = 6;
    config.study.n_batches = 300;
    config.study.sa_samples = 300;
    const auto dir = std::filesystem::temp_directory_path() / "refereval_acceptance";
    std::filesystem::create_directories(dir);
    std::vector<std::string> bytes;
    for (int w : {1, 4, 8}) {
      const auto path = dir / ("study_" + std::to_string(w) + ".csv");
      export_results(run_study(config, 11, w), path, json::object());
      std::ifstream in(path, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      bytes.push_back(ss.str());
    }
    std::filesystem::remove_all(dir);
    const bool same = bytes[0] == bytes[1] && bytes[0] == bytes[2];
    detail = fmt("results %s across 1, 4, 8 workers (%zu bytes)", same ? "identical" : "differ", bytes[0].size());
    return same && !bytes[0].empty();
  });

  std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "OK", failures);
  return failures ? 1 : 0;
}
