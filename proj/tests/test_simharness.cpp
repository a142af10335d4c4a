#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "refereval/error.hpp"
#include "refereval/simharness.hpp"

using namespace refereval;
using nlohmann::json;

namespace {

ScenarioConfig small_config() {
  ScenarioConfig c;
  c.study.n_instances = 3;
  c.study.n_batches = 40;
  c.study.sa_samples = 50;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("scenario defaults reproduce the randomized study") {
  const ScenarioConfig c = scenario_from_json(json::object());
  CHECK(c.pi1 == 0.2);
  CHECK(c.d0 == 3.0);
  CHECK(c.mu0 == 3.0);
  CHECK(c.sigma_a.lo == 1.5);
  CHECK(c.sigma_a.hi == 2.0);
  CHECK(c.sigma0.lo == 1.0);
  CHECK(c.sigma0.hi == 1.5);
  CHECK(c.c_fp.lo == 8.0);
  CHECK(c.c_fn.hi == 12.0);
  CHECK(c.c_r.hi == 0.5);
  CHECK(c.batch_size == 20);
  CHECK(c.study.n_instances == 25);
  CHECK(c.study.n_batches == 2000);
}

TEST_CASE("scenario JSON round trip and validation") {
  json doc = {{"prior", {{"pi1", 0.3}}},
              {"human_law", {{"case", "case2"}, {"sigma0", 1.2}}},
              {"costs", {{"c_fp", 9.0}, {"c_fn", 11.0}}},
              {"K", 12},
              {"load_set", {2, 4, 6}},
              {"study", {{"n_instances", 2}, {"policies", {"oa", "sa"}}}}};
  const ScenarioConfig c = scenario_from_json(doc);
  CHECK(c.law_case == HumanLawCase::kCase2);
  CHECK(c.sigma0.lo == c.sigma0.hi);
  CHECK(c.load_set == std::vector<int>{2, 4, 6});
  CHECK(c.study.policies.size() == 2);
  const ScenarioConfig back = scenario_from_json(scenario_to_json(c));
  CHECK(scenario_to_json(back) == scenario_to_json(c));

  CHECK_THROWS_AS(scenario_from_json({{"bogus", 1}}), DomainError);
  CHECK_THROWS_AS(scenario_from_json({{"automation", {{"sigma", {2.0, 1.0}}}}}), DomainError);
  CHECK_THROWS_AS(scenario_from_json({{"K", 4}, {"load_set", {5}}}), DomainError);
  CHECK_THROWS_AS(scenario_from_json({{"study", {{"policies", {"xx"}}}}}), DomainError);
  CHECK_THROWS_AS(scenario_from_json({{"costs", json::object()}, {"cost_distributions", json::object()}}),
                  DomainError);
}

TEST_CASE("sampled instances stay within their ranges") {
  const ScenarioConfig c;
  Engine rng(1);
  for (int i = 0; i < 200; ++i) {
    const ProblemInstance in = sample_problem_instance(c, rng);
    CHECK(in.automation.sigma >= 1.5);
    CHECK(in.automation.sigma <= 2.0);
    CHECK(in.human_law.sigma0 >= 1.0);
    CHECK(in.human_law.sigma0 <= 1.5);
    CHECK(in.costs.fp() >= 8.0);
    CHECK(in.costs.fn() <= 12.0);
    CHECK(in.costs.referral() <= 0.5);
    CHECK(in.load_set.loads().size() == 21);
  }
}

TEST_CASE("batch posteriors are calibrated") {
  // among tasks with posterior in a bin, the H1 share matches the mean posterior
  ScenarioConfig c;
  Engine rng(3);
  const ProblemInstance in = sample_problem_instance(c, rng);
  double sum_p = 0.0, hits = 0.0;
  int n = 0;
  for (int b = 0; b < 3000; ++b) {
    const Batch batch = generate_batch(in, rng);
    for (const Task& t : batch.tasks()) {
      if (t.posterior > 0.3 && t.posterior < 0.7) {
        sum_p += t.posterior;
        hits += *t.true_state == Hypothesis::kH1;
        ++n;
      }
    }
  }
  REQUIRE(n > 1000);
  const double se = std::sqrt(0.25 / n);
  CHECK(std::abs(hits / n - sum_p / n) < 4 * se);
}

TEST_CASE("realized cost adds referral costs to decision costs") {
  const ProblemInstance in{Prior(0.2), GaussianObsModel(0.0, 3.0, 1.5),
                           HumanObsLaw{HumanLawCase::kCase1, 3.0, 1.0, 3},
                           DecisionCosts(1.0, 8.0, 0.5, 12.0, 0.25), 3, LoadSet::full(3)};
  // an extremely confident automation: p = 0 on an H1 task costs c_fn
  const Batch batch({{0, 0.0, Hypothesis::kH1}, {1, 1.0, Hypothesis::kH1}, {2, 0.0, Hypothesis::kH0}});
  const HumanPerfModel perf = analytic_perf(in);
  Engine rng(1);
  const BatchOutcome none = run_policy_on_batch(make_plan(batch, {}, in.costs), batch, in, perf, rng);
  CHECK(none.realized_cost == doctest::Approx(12.0 + 1.0 + 0.5));
  CHECK(none.load == 0);
  const BatchOutcome one = run_policy_on_batch(make_plan(batch, {1}, in.costs), batch, in, perf, rng);
  const double human = one.realized_cost - 12.0 - 0.5 - 0.25;
  CHECK((human == doctest::Approx(1.0) || human == doctest::Approx(12.0)));
}

TEST_CASE("study output is independent of the worker count") {
  const ScenarioConfig c = small_config();
  const StudyResults a = run_study(c, 42, 1);
  const StudyResults b = run_study(c, 42, 4);
  const StudyResults d = run_study(c, 42, 8);
  CHECK(a.rows == b.rows);
  CHECK(a.rows == d.rows);
  CHECK(a.rows.size() == 3u * 40u * 3u);
  const StudyResults other = run_study(c, 43, 4);
  CHECK_FALSE(other.rows == a.rows);
}

TEST_CASE("rows are ordered by instance, batch, policy") {
  const StudyResults r = run_study(small_config(), 7, 2);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const StudyRow& row = r.rows[i];
    CHECK(row.instance_id == static_cast<int>(i / 120));
    CHECK(row.batch_id == static_cast<int>((i / 3) % 40));
    CHECK(row.policy == std::vector<Policy>{Policy::kOA, Policy::kBA, Policy::kSA}[i % 3]);
  }
  for (const auto& inst : r.instances) {
    for (const StudyRow& row : r.rows) {
      if (row.instance_id != inst.instance_id) continue;
      if (row.policy == Policy::kBA) CHECK(row.load == inst.w_ba);
      if (row.policy == Policy::kSA) CHECK(row.load == inst.w_sa);
    }
  }
}

TEST_CASE("OA expected cost never exceeds the fixed-load policies batch by batch") {
  const StudyResults r = run_study(small_config(), 5, 4);
  for (std::size_t i = 0; i + 2 < r.rows.size(); i += 3) {
    CHECK(r.rows[i].expected_cost <= r.rows[i + 2].expected_cost + 1e-9);
  }
}

TEST_CASE("results export round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "refereval_sim_test";
  std::filesystem::create_directories(dir);
  const StudyResults r = run_study(small_config(), 9, 4);
  export_results(r, dir / "out.csv", {{"note", "test"}});
  CHECK(read_results(dir / "out.csv") == r.rows);
  const json meta = json::parse(slurp(dir / "out.csv.meta.json"));
  CHECK(meta.at("seed") == 9);
  CHECK(meta.at("instances").size() == 3);
  CHECK(meta.at("note") == "test");

  export_results(r, dir / "again.csv", {{"note", "test"}});
  CHECK(slurp(dir / "out.csv") == slurp(dir / "again.csv"));

  std::ofstream(dir / "bad.csv") << "nope\n";
  CHECK_THROWS_AS(read_results(dir / "bad.csv"), IoError);
  std::filesystem::remove_all(dir);
}
