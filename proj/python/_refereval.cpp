#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "refereval/analysis.hpp"
#include "refereval/error.hpp"
#include "refereval/oracle.hpp"
#include "refereval/policies.hpp"
#include "refereval/simharness.hpp"

namespace py = pybind11;
using namespace refereval;
using nlohmann::json;

namespace {

HumanPerfModel perf_from(const std::string& doc) { return perf_model_from_json(json::parse(doc)); }

py::dict allocation_dict(const AllocationResult& r) {
  py::dict d;
  d["load"] = r.load;
  d["delta"] = r.delta;
  d["referred"] = r.plan.referred;
  std::vector<std::pair<int, std::string>> terminal;
  for (const auto& [id, h] : r.plan.terminal) terminal.emplace_back(id, std::string(to_string(h)));
  d["terminal"] = terminal;
  d["per_load_delta"] = r.per_load_delta;
  return d;
}

py::dict paired_dict(const PairedTestResult& r) {
  py::dict d;
  d["t0"] = r.t0;
  d["df"] = r.df;
  d["p_value"] = r.p_value;
  d["mean_diff"] = r.mean_diff;
  d["s_d"] = r.s_d;
  d["n"] = r.n;
  return d;
}

}  // namespace

PYBIND11_MODULE(_refereval, m) {
  m.doc() = "Decision-referral engine: cost functions, referral policies, human models, statistics.";

  static py::exception<Error> error_type(m, "Error", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error_type.ptr())("[" + e.code() + "] " + e.what());
      exc.attr("code") = e.code();
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  py::enum_<Hypothesis>(m, "Hypothesis").value("H0", Hypothesis::kH0).value("H1", Hypothesis::kH1);

  py::class_<Prior>(m, "Prior")
      .def(py::init<double>(), py::arg("pi1"))
      .def_property_readonly("pi0", &Prior::pi0)
      .def_property_readonly("pi1", &Prior::pi1);

  py::class_<DecisionCosts>(m, "DecisionCosts")
      .def(py::init<double, double, double, double, double>(), py::arg("c_tp"), py::arg("c_fp"),
           py::arg("c_tn"), py::arg("c_fn"), py::arg("c_r") = 0.0)
      .def_property_readonly("c_tp", &DecisionCosts::tp)
      .def_property_readonly("c_fp", &DecisionCosts::fp)
      .def_property_readonly("c_tn", &DecisionCosts::tn)
      .def_property_readonly("c_fn", &DecisionCosts::fn)
      .def_property_readonly("c_r", &DecisionCosts::referral)
      .def("indifference_posterior", &DecisionCosts::indifference_posterior);

  py::class_<Rates>(m, "Rates")
      .def(py::init([](double tpr, double fpr) { return Rates{tpr, fpr}; }), py::arg("tpr"), py::arg("fpr"))
      .def_readwrite("tpr", &Rates::tpr)
      .def_readwrite("fpr", &Rates::fpr)
      .def("__repr__", [](const Rates& r) {
        return "Rates(tpr=" + std::to_string(r.tpr) + ", fpr=" + std::to_string(r.fpr) + ")";
      });

  py::class_<HumanPerfModel>(m, "HumanPerfModel")
      .def_static("from_json", &perf_from, py::arg("doc"),
                  "Table, capacity, or analytic perf document as a JSON string.")
      .def_static("capacity",
                  [](double tpr, double fpr, int capacity) {
                    return HumanPerfModel(CapacityPerf{tpr, fpr, capacity});
                  },
                  py::arg("tree_tpr") = 0.87, py::arg("tree_fpr") = 0.046, py::arg("capacity") = 10)
      .def_static("table",
                  [](std::vector<int> loads, std::vector<double> tpr, std::vector<double> fpr) {
                    return HumanPerfModel(TablePerf{std::move(loads), std::move(tpr), std::move(fpr)});
                  },
                  py::arg("loads"), py::arg("tpr"), py::arg("fpr"))
      .def("rates", &HumanPerfModel::rates, py::arg("w"));

  m.def("gamma_auto_star", &gamma_auto_star, py::arg("p"), py::arg("costs"));
  m.def("auto_bayes_decision", &auto_bayes_decision, py::arg("p"), py::arg("costs"));
  m.def("gamma_human", py::overload_cast<double, Rates, const DecisionCosts&>(&gamma_human),
        py::arg("p"), py::arg("rates"), py::arg("costs"));
  m.def("referral_index", py::overload_cast<double, Rates, const DecisionCosts&>(&referral_index),
        py::arg("p"), py::arg("rates"), py::arg("costs"));

  m.def("optimal_referral",
        [](const std::vector<double>& posteriors, const std::vector<int>& loads, const HumanPerfModel& perf,
           const DecisionCosts& costs) {
          const Batch batch = Batch::from_posteriors(posteriors);
          const int k = static_cast<int>(posteriors.size());
          const LoadSet ls = loads.empty() ? LoadSet::full(k) : LoadSet(loads, k);
          return allocation_dict(optimal_referral(batch, ls, perf, costs));
        },
        py::arg("posteriors"), py::arg("loads"), py::arg("perf"), py::arg("costs"),
        "Referral of a batch of automation posteriors; an empty load list means 0..K.");
  m.def("top_w_referral",
        [](const std::vector<double>& posteriors, int w, const HumanPerfModel& perf, const DecisionCosts& costs) {
          return top_w_referral(Batch::from_posteriors(posteriors), w, perf, costs).referred;
        },
        py::arg("posteriors"), py::arg("w"), py::arg("perf"), py::arg("costs"));
  m.def("team_cost",
        [](const std::vector<double>& posteriors, std::vector<int> referred, const HumanPerfModel& perf,
           const DecisionCosts& costs) {
          const Batch batch = Batch::from_posteriors(posteriors);
          return team_cost(make_plan(batch, std::move(referred), costs), batch, perf, costs);
        },
        py::arg("posteriors"), py::arg("referred"), py::arg("perf"), py::arg("costs"));
  m.def("ba_workload",
        [](const Prior& prior, double auto_tpr, double auto_fpr, const HumanPerfModel& perf,
           const DecisionCosts& costs, int batch_size, std::vector<int> loads) {
          return ba_workload(prior, AutomationPerfModel{auto_tpr, auto_fpr}, perf, costs,
                             LoadSet(std::move(loads), batch_size));
        },
        py::arg("prior"), py::arg("auto_tpr"), py::arg("auto_fpr"), py::arg("perf"), py::arg("costs"),
        py::arg("batch_size"), py::arg("loads"));

  m.def("capacity_tpr_fpr",
        [](int w, double tpr, double fpr, int capacity) { return capacity_tpr_fpr(CapacityPerf{tpr, fpr, capacity}, w); },
        py::arg("w"), py::arg("tree_tpr") = 0.87, py::arg("tree_fpr") = 0.046, py::arg("capacity") = 10);
  m.def("analytic_tpr_fpr",
        [](int w, const std::string& law_case, double mu0, double sigma0, int batch_size, const DecisionCosts& costs,
           const Prior& prior) {
          const HumanLawCase c = law_case == "case2" ? HumanLawCase::kCase2 : HumanLawCase::kCase1;
          if (law_case != "case1" && law_case != "case2") throw DomainError("bad_request", "case must be case1 or case2");
          return analytic_tpr_fpr(HumanObsLaw{c, mu0, sigma0, batch_size}, w, costs, prior);
        },
        py::arg("w"), py::arg("law_case"), py::arg("mu0"), py::arg("sigma0"), py::arg("batch_size"),
        py::arg("costs"), py::arg("prior"));

  m.def("paired_t_test",
        [](const std::vector<double>& diffs, bool two_sided) {
          return paired_dict(paired_t_test(diffs, two_sided ? Alternative::kTwoSided : Alternative::kGreater));
        },
        py::arg("diffs"), py::arg("two_sided") = false);
  m.def("student_t_cdf", &student_t_cdf, py::arg("t"), py::arg("df"));
  m.def("summary_stats", [](const std::vector<double>& values) {
    const SummaryStats s = summary_stats(values);
    py::dict d;
    d["mean"] = s.mean;
    d["std"] = s.std;
    d["median"] = s.median;
    d["q1"] = s.q1;
    d["q3"] = s.q3;
    d["outliers"] = s.outliers;
    return d;
  }, py::arg("values"));

  m.def("run_study",
        [](const std::string& scenario, std::uint64_t seed, int workers) {
          const ScenarioConfig config = scenario_from_json(json::parse(scenario));
          StudyResults r;
          {
            py::gil_scoped_release release;
            r = run_study(config, seed, workers);
          }
          py::list rows;
          for (const StudyRow& row : r.rows) {
            rows.append(py::make_tuple(row.instance_id, std::string(policy_name(row.policy)), row.batch_id,
                                       row.realized_cost, row.expected_cost, row.load));
          }
          return rows;
        },
        py::arg("scenario"), py::arg("seed"), py::arg("workers") = 1,
        "Rows (instance_id, policy, batch_id, realized_cost, expected_cost, load).");

  m.def("run_oracle",
        [](int k, int trials, std::uint64_t seed) {
          const OracleTally t = run_oracle(k, trials, seed);
          py::dict d;
          d["trials"] = t.trials;
          d["allocation_matches"] = t.allocation_matches;
          d["fixed_load_matches"] = t.fixed_load_matches;
          d["max_abs_error"] = t.max_abs_error;
          return d;
        },
        py::arg("k"), py::arg("trials"), py::arg("seed"));
}
