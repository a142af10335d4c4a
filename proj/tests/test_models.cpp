#include <doctest.h>

#include <cmath>

#include "refereval/core.hpp"
#include "refereval/error.hpp"
#include "refereval/models.hpp"

using namespace refereval;

namespace {

const DecisionCosts kExp2{0.0, 8.0, 0.0, 12.0, 0.0};

// Reference Q-function by Simpson integration of the normal density, to stay
// independent of the erfc path in the library.
double q_reference(double x) {
  const double lo = x, hi = x + 40.0;
  const int n = 200000;
  const double h = (hi - lo) / n;
  auto f = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); };
  double s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("normal tail") {
  CHECK(normal_tail(0.0) == doctest::Approx(0.5));
  for (double x : {-2.0, -0.5, 0.3, 1.0, 1.96, 3.5}) {
    CHECK(normal_tail(x) == doctest::Approx(q_reference(x)).epsilon(1e-9));
  }
  CHECK(normal_tail(1.0) + normal_tail(-1.0) == doctest::Approx(1.0));
}

TEST_CASE("Gaussian log-likelihood ratio matches the density ratio") {
  const GaussianObsModel m(0.0, 3.0, 1.7);
  for (double y : {-2.0, 0.0, 1.5, 4.0}) {
    CHECK(m.log_likelihood_ratio(y) ==
          doctest::Approx(std::log(m.density(y, Hypothesis::kH1) / m.density(y, Hypothesis::kH0))));
  }
  CHECK_THROWS_AS(GaussianObsModel(0.0, 1.0, 0.0), DomainError);
}

TEST_CASE("human observation laws") {
  const HumanObsLaw c1{HumanLawCase::kCase1, 3.0, 1.2, 20};
  CHECK(human_obs_params(c1, 0).mu == doctest::Approx(3.0));
  CHECK(human_obs_params(c1, 5).mu == doctest::Approx(2.25));
  CHECK(human_obs_params(c1, 20).mu == 0.0);
  CHECK(human_obs_params(c1, 7).sigma == doctest::Approx(1.2));
  const HumanObsLaw c2{HumanLawCase::kCase2, 3.0, 1.2, 20};
  CHECK(human_obs_params(c2, 10).mu == doctest::Approx(3.0));
  CHECK(human_obs_params(c2, 10).sigma * human_obs_params(c2, 10).sigma ==
        doctest::Approx(1.5 * 1.44));
  CHECK_THROWS_AS(human_obs_params(c1, 21), DomainError);
  CHECK_THROWS_AS(human_obs_params(c1, -1), DomainError);
}

TEST_CASE("case constraints") {
  const HumanObsLaw c1{HumanLawCase::kCase1, 3.0, 1.0, 20};
  CHECK(satisfies_case_constraints(c1, GaussianObsModel(0.0, 2.5, 1.5)));
  CHECK_FALSE(satisfies_case_constraints(c1, GaussianObsModel(0.0, 2.9, 1.5)));
  CHECK_FALSE(satisfies_case_constraints(c1, GaussianObsModel(0.0, 2.5, 0.9)));
  const HumanObsLaw c2{HumanLawCase::kCase2, 3.0, 1.0, 20};
  CHECK(satisfies_case_constraints(c2, GaussianObsModel(0.0, 3.0, 1.2)));
  CHECK_FALSE(satisfies_case_constraints(c2, GaussianObsModel(0.0, 3.0, 1.5)));
}

TEST_CASE("Bayes threshold and tau") {
  CHECK(bayes_threshold_rho(kExp2) == doctest::Approx(0.4));
  const HumanObsLaw law{HumanLawCase::kCase1, 3.0, 1.25, 20};
  const Prior prior(0.2);
  // mu/2 + sigma^2/mu ln[(c_fp - c_tn) pi0 / ((c_fn - c_tp) pi1)] at w = 4: mu = 2.4
  const double expected = 1.2 + (1.5625 / 2.4) * std::log((8.0 * 0.8) / (12.0 * 0.2));
  CHECK(tau(law, 4, kExp2, prior) == doctest::Approx(expected));
  CHECK_THROWS_AS(tau(law, 20, kExp2, prior), DegenerateError);
}

TEST_CASE("analytic rates agree with the threshold rule") {
  const HumanObsLaw law{HumanLawCase::kCase1, 3.0, 1.25, 20};
  const Prior prior(0.2);
  for (int w = 0; w < 20; ++w) {
    const double t = tau(law, w, kExp2, prior);
    const double mu = human_obs_params(law, w).mu;
    const Rates r = analytic_tpr_fpr(law, w, kExp2, prior);
    CHECK(r.tpr == doctest::Approx(q_reference((t - mu) / 1.25)).epsilon(1e-8));
    CHECK(r.fpr == doctest::Approx(q_reference(t / 1.25)).epsilon(1e-8));
  }
  // the posterior-threshold rule and the observation-threshold rule coincide
  const GaussianObsModel m = law.at_load(6);
  const double t = tau(law, 6, kExp2, prior);
  CHECK(posterior_from_llr(prior, m.log_likelihood_ratio(t)) == doctest::Approx(0.4));
}

TEST_CASE("zero-separation human follows the prior") {
  const HumanObsLaw law{HumanLawCase::kCase1, 3.0, 1.25, 20};
  const Rates low = analytic_tpr_fpr(law, 20, kExp2, Prior(0.2));
  CHECK(low.tpr == 0.0);
  CHECK(low.fpr == 0.0);
  const Rates high = analytic_tpr_fpr(law, 20, kExp2, Prior(0.5));
  CHECK(high.tpr == 1.0);
  CHECK(high.fpr == 1.0);
}

TEST_CASE("Bayes risk of the human grows with load") {
  const Prior prior(0.2);
  const DecisionCosts costs(1.0, 10.0, 1.0, 10.0, 0.1);
  for (HumanLawCase c : {HumanLawCase::kCase1, HumanLawCase::kCase2}) {
    const HumanObsLaw law{c, 3.0, 1.25, 20};
    double prev = -1.0;
    for (int w = 0; w <= 20; ++w) {
      const Rates r = analytic_tpr_fpr(law, w, costs, prior);
      const double risk = 0.2 * (r.tpr * 1.0 + (1 - r.tpr) * 10.0) +
                          0.8 * (r.fpr * 10.0 + (1 - r.fpr) * 1.0);
      CHECK(risk >= prev - 1e-12);
      prev = risk;
    }
  }
}

TEST_CASE("capacity model") {
  const CapacityPerf m;
  for (int w = 1; w <= 10; ++w) {
    const Rates r = capacity_tpr_fpr(m, w);
    CHECK(r.tpr == 0.87);
    CHECK(r.fpr == 0.046);
  }
  const Rates r15 = capacity_tpr_fpr(m, 15);
  CHECK(r15.tpr == doctest::Approx(10.0 / 15 * 0.87 + 5.0 / 15 * 0.5));
  CHECK(r15.fpr == doctest::Approx(10.0 / 15 * 0.046 + 5.0 / 15 * 0.5));
  CHECK_THROWS_AS(capacity_tpr_fpr(m, 0), DomainError);
}

TEST_CASE("table interpolation") {
  const TablePerf t{{6, 9}, {0.9, 0.6}, {0.05, 0.2}};
  CHECK(interp_perf(t, 7).tpr == doctest::Approx(0.8));
  CHECK(interp_perf(t, 8).fpr == doctest::Approx(0.15));
  CHECK(interp_perf(t, 3).tpr == 0.9);   // clamped below
  CHECK(interp_perf(t, 12).tpr == 0.6);  // clamped above
  CHECK_THROWS_AS(interp_perf(TablePerf{}, 3), DomainError);
  CHECK_THROWS_AS(HumanPerfModel(TablePerf{{6, 6}, {0.9, 0.8}, {0.1, 0.1}}), DomainError);
  CHECK_THROWS_AS(HumanPerfModel(TablePerf{{6}, {1.2}, {0.1}}), DomainError);
}

TEST_CASE("declared load domain") {
  const HumanPerfModel m(CapacityPerf{}, std::vector<int>{6, 9, 12, 15});
  CHECK(m.in_domain(9));
  CHECK_FALSE(m.in_domain(7));
  CHECK_THROWS_AS(m.rates(7), DomainError);
  CHECK(m.rates(15).tpr == doctest::Approx(0.7467).epsilon(1e-4));
}

TEST_CASE("automation rates") {
  const GaussianObsModel m(0.0, 3.0, 1.75);
  const Prior prior(0.2);
  const auto a = automation_rates(m, kExp2, prior);
  const double t = 1.5 + (1.75 * 1.75 / 3.0) * std::log(6.4 / 2.4);
  CHECK(a.tpr == doctest::Approx(q_reference((t - 3.0) / 1.75)).epsilon(1e-8));
  CHECK(a.fpr == doctest::Approx(q_reference(t / 1.75)).epsilon(1e-8));
}

TEST_CASE("simulated human decision rule") {
  CHECK(simulate_human_decision(0.4, kExp2) == Hypothesis::kH1);
  CHECK(simulate_human_decision(0.39, kExp2) == Hypothesis::kH0);
  Engine a(5), b(5);
  const HumanObsLaw law{HumanLawCase::kCase1, 3.0, 1.25, 20};
  for (int i = 0; i < 50; ++i) {
    CHECK(simulate_human_on_task(Hypothesis::kH1, law, 4, kExp2, Prior(0.2), a) ==
          simulate_human_on_task(Hypothesis::kH1, law, 4, kExp2, Prior(0.2), b));
  }
}
