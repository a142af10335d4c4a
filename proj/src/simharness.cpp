#include "refereval/simharness.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "refereval/error.hpp"
#include "refereval/parallel.hpp"
#include "text.hpp"

namespace refereval {

using nlohmann::json;

std::string_view policy_name(Policy p) {
  switch (p) {
    case Policy::kOA: return "oa";
    case Policy::kBA: return "ba";
    case Policy::kSA: return "sa";
  }
  return "?";
}

Policy policy_from_name(std::string_view name) {
  if (name == "oa") return Policy::kOA;
  if (name == "ba") return Policy::kBA;
  if (name == "sa") return Policy::kSA;
  throw DomainError("config", "unknown policy '" + std::string(name) + "'");
}

double UniformParam::sample(Engine& rng) const {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

namespace {

UniformParam param_from_json(const json& v, std::string_view name) {
  if (v.is_number()) {
    const double x = v.get<double>();
    return {x, x};
  }
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
    UniformParam p{v[0].get<double>(), v[1].get<double>()};
    if (!(p.lo <= p.hi)) {
      throw DomainError("config", std::string(name) + ": range must satisfy lo <= hi");
    }
    return p;
  }
  throw DomainError("config", std::string(name) + ": expected a number or [lo, hi]");
}

json param_to_json(const UniformParam& p) {
  if (p.lo == p.hi) return p.lo;
  return json::array({p.lo, p.hi});
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known,
                    std::string_view where) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || key == k;
    if (!ok) {
      throw DomainError("config", "unknown key '" + key + "' in " + std::string(where));
    }
  }
}

}  // namespace

ScenarioConfig scenario_from_json(const json& doc) {
  if (!doc.is_object()) throw DomainError("config", "scenario must be a JSON object");
  reject_unknown(doc,
                 {"prior", "automation", "human_law", "costs", "cost_distributions", "K",
                  "load_set", "study", "description"},
                 "scenario");
  ScenarioConfig c;
  try {
    if (doc.contains("prior")) c.pi1 = doc.at("prior").at("pi1").get<double>();
    if (doc.contains("automation")) {
      const json& a = doc.at("automation");
      reject_unknown(a, {"d0", "sigma"}, "automation");
      if (a.contains("d0")) c.d0 = a.at("d0").get<double>();
      if (a.contains("sigma")) c.sigma_a = param_from_json(a.at("sigma"), "automation.sigma");
    }
    if (doc.contains("human_law")) {
      const json& h = doc.at("human_law");
      reject_unknown(h, {"case", "mu0", "sigma0"}, "human_law");
      if (h.contains("case")) {
        const auto v = h.at("case").get<std::string>();
        if (v == "case1") c.law_case = HumanLawCase::kCase1;
        else if (v == "case2") c.law_case = HumanLawCase::kCase2;
        else throw DomainError("config", "human_law.case must be case1 or case2");
      }
      if (h.contains("mu0")) c.mu0 = h.at("mu0").get<double>();
      if (h.contains("sigma0")) c.sigma0 = param_from_json(h.at("sigma0"), "human_law.sigma0");
    }
    if (doc.contains("costs") && doc.contains("cost_distributions")) {
      throw DomainError("config", "give either costs or cost_distributions, not both");
    }
    for (const char* section : {"costs", "cost_distributions"}) {
      if (!doc.contains(section)) continue;
      const json& cs = doc.at(section);
      reject_unknown(cs, {"c_tp", "c_fp", "c_tn", "c_fn", "c_r"}, section);
      if (cs.contains("c_tp")) c.c_tp = param_from_json(cs.at("c_tp"), "c_tp");
      if (cs.contains("c_fp")) c.c_fp = param_from_json(cs.at("c_fp"), "c_fp");
      if (cs.contains("c_tn")) c.c_tn = param_from_json(cs.at("c_tn"), "c_tn");
      if (cs.contains("c_fn")) c.c_fn = param_from_json(cs.at("c_fn"), "c_fn");
      if (cs.contains("c_r")) c.c_r = param_from_json(cs.at("c_r"), "c_r");
    }
    if (doc.contains("K")) c.batch_size = doc.at("K").get<int>();
    if (doc.contains("load_set") && !doc.at("load_set").is_null()) {
      c.load_set = doc.at("load_set").get<std::vector<int>>();
    }
    if (doc.contains("study")) {
      const json& s = doc.at("study");
      reject_unknown(s, {"n_instances", "n_batches", "sa_samples", "seed", "policies"}, "study");
      if (s.contains("n_instances")) c.study.n_instances = s.at("n_instances").get<int>();
      if (s.contains("n_batches")) c.study.n_batches = s.at("n_batches").get<int>();
      if (s.contains("sa_samples")) c.study.sa_samples = s.at("sa_samples").get<int>();
      if (s.contains("seed")) c.study.seed = s.at("seed").get<std::uint64_t>();
      if (s.contains("policies")) {
        c.study.policies.clear();
        for (const auto& p : s.at("policies")) {
          c.study.policies.push_back(policy_from_name(p.get<std::string>()));
        }
      }
    }
  } catch (const json::exception& e) {
    throw DomainError("config", std::string("malformed scenario: ") + e.what());
  }
  if (c.batch_size < 1) throw DomainError("config", "K must be >= 1");
  if (c.study.n_instances < 0 || c.study.n_batches < 0 || c.study.sa_samples < 1) {
    throw DomainError("config", "study counts must be nonnegative and sa_samples >= 1");
  }
  if (c.study.policies.empty()) throw DomainError("config", "study.policies is empty");
  Prior(c.pi1);  // validates
  LoadSet(c.load_set.value_or(std::vector<int>{0}), c.batch_size);
  return c;
}

json scenario_to_json(const ScenarioConfig& c) {
  json policies = json::array();
  for (Policy p : c.study.policies) policies.push_back(policy_name(p));
  json doc = {
      {"prior", {{"pi1", c.pi1}}},
      {"automation", {{"d0", c.d0}, {"sigma", param_to_json(c.sigma_a)}}},
      {"human_law",
       {{"case", c.law_case == HumanLawCase::kCase1 ? "case1" : "case2"},
        {"mu0", c.mu0},
        {"sigma0", param_to_json(c.sigma0)}}},
      {"cost_distributions",
       {{"c_tp", param_to_json(c.c_tp)},
        {"c_fp", param_to_json(c.c_fp)},
        {"c_tn", param_to_json(c.c_tn)},
        {"c_fn", param_to_json(c.c_fn)},
        {"c_r", param_to_json(c.c_r)}}},
      {"K", c.batch_size},
      {"load_set", c.load_set ? json(*c.load_set) : json(nullptr)},
      {"study",
       {{"n_instances", c.study.n_instances},
        {"n_batches", c.study.n_batches},
        {"sa_samples", c.study.sa_samples},
        {"seed", c.study.seed},
        {"policies", policies}}},
  };
  return doc;
}

json instance_to_json(const ProblemInstance& in) {
  return {{"pi1", in.prior.pi1()},
          {"d0", in.automation.mean1 - in.automation.mean0},
          {"sigma_a", in.automation.sigma},
          {"mu0", in.human_law.mu0},
          {"sigma0", in.human_law.sigma0},
          {"case", in.human_law.variant == HumanLawCase::kCase1 ? "case1" : "case2"},
          {"c_tp", in.costs.tp()},
          {"c_fp", in.costs.fp()},
          {"c_tn", in.costs.tn()},
          {"c_fn", in.costs.fn()},
          {"c_r", in.costs.referral()},
          {"K", in.batch_size}};
}

ProblemInstance sample_problem_instance(const ScenarioConfig& c, Engine& rng) {
  const double sigma_a = c.sigma_a.sample(rng);
  const double sigma0 = c.sigma0.sample(rng);
  const double c_fp = c.c_fp.sample(rng);
  const double c_fn = c.c_fn.sample(rng);
  const double c_tp = c.c_tp.sample(rng);
  const double c_tn = c.c_tn.sample(rng);
  const double c_r = c.c_r.sample(rng);
  return ProblemInstance{
      Prior(c.pi1),
      GaussianObsModel(0.0, c.d0, sigma_a),
      HumanObsLaw{c.law_case, c.mu0, sigma0, c.batch_size},
      DecisionCosts(c_tp, c_fp, c_tn, c_fn, c_r),
      c.batch_size,
      c.load_set ? LoadSet(*c.load_set, c.batch_size) : LoadSet::full(c.batch_size),
  };
}

Batch generate_batch(const ProblemInstance& instance, Engine& rng) {
  std::bernoulli_distribution hostile(instance.prior.pi1());
  std::vector<Task> tasks;
  tasks.reserve(static_cast<std::size_t>(instance.batch_size));
  for (int k = 0; k < instance.batch_size; ++k) {
    const Hypothesis h = hostile(rng) ? Hypothesis::kH1 : Hypothesis::kH0;
    const double y = sample_observation(h, instance.automation, rng);
    const double p =
        posterior_from_llr(instance.prior, instance.automation.log_likelihood_ratio(y));
    tasks.push_back({k, p, h});
  }
  return Batch(std::move(tasks));
}

HumanPerfModel analytic_perf(const ProblemInstance& instance) {
  return HumanPerfModel(AnalyticPerf{instance.human_law, instance.costs, instance.prior});
}

int sa_workload(const ProblemInstance& instance, const LoadSet& load_set, int n_samples,
                std::uint64_t seed, int workers) {
  if (n_samples < 1) throw DomainError("sa_workload needs n_samples >= 1");
  std::vector<Batch> samples(static_cast<std::size_t>(n_samples));
  parallel_for(samples.size(), workers, [&](std::size_t j) {
    Engine rng = make_stream(seed, {stream::kStaticSamples, j});
    samples[j] = generate_batch(instance, rng);
  });
  return sa_workload(samples, load_set, analytic_perf(instance), instance.costs);
}

BatchOutcome run_policy_on_batch(const ReferralPlan& plan, const Batch& batch,
                                 const ProblemInstance& instance,
                                 const HumanPerfModel& perf, Engine& human_rng) {
  BatchOutcome out;
  out.load = plan.load();
  out.expected_cost = team_cost(plan, batch, perf, instance.costs);
  double realized = 0.0;
  std::size_t next_terminal = 0;
  for (const Task& t : batch.tasks()) {
    if (!t.true_state) throw DomainError("realized cost needs true states");
    Hypothesis decision;
    if (plan.is_referred(t.task_id)) {
      decision = simulate_human_on_task(*t.true_state, instance.human_law, out.load,
                                        instance.costs, instance.prior, human_rng);
      realized += instance.costs.referral();
    } else {
      // terminal is sorted by id, and batches from generate_batch are too
      auto it = plan.terminal.begin() + static_cast<std::ptrdiff_t>(next_terminal);
      if (it == plan.terminal.end() || it->first != t.task_id) {
        it = std::lower_bound(plan.terminal.begin(), plan.terminal.end(), t.task_id,
                              [](const auto& e, int id) { return e.first < id; });
      }
      decision = it->second;
      next_terminal = static_cast<std::size_t>(it - plan.terminal.begin()) + 1;
    }
    realized += instance.costs.of(decision, *t.true_state);
  }
  out.realized_cost = realized;
  return out;
}

StudyResults run_study(const ScenarioConfig& config, std::uint64_t master_seed,
                       int workers) {
  struct Setup {
    std::optional<ProblemInstance> instance;
    std::optional<HumanPerfModel> perf;
    int w_ba = -1;
    int w_sa = -1;
  };
  const auto n_inst = static_cast<std::size_t>(config.study.n_instances);
  const auto n_batch = static_cast<std::size_t>(config.study.n_batches);
  const auto& policies = config.study.policies;
  const bool need_ba = std::find(policies.begin(), policies.end(), Policy::kBA) != policies.end();
  const bool need_sa = std::find(policies.begin(), policies.end(), Policy::kSA) != policies.end();

  std::vector<Setup> setups(n_inst);
  for (std::size_t i = 0; i < n_inst; ++i) {
    Engine rng = make_stream(master_seed, {stream::kInstance, i});
    setups[i].instance = sample_problem_instance(config, rng);
    setups[i].perf = analytic_perf(*setups[i].instance);
  }
  // Per-instance constant loads, computed before any evaluation batch. The
  // static-allocation samples use their own streams, disjoint from evaluation.
  for (std::size_t i = 0; i < n_inst; ++i) {
    Setup& s = setups[i];
    const ProblemInstance& in = *s.instance;
    if (need_ba) {
      s.w_ba = ba_workload(in.prior, automation_rates(in.automation, in.costs, in.prior),
                           *s.perf, in.costs, in.load_set);
    }
    if (need_sa) {
      s.w_sa = sa_workload(in, in.load_set, config.study.sa_samples,
                           derive_seed(master_seed, {stream::kStaticSamples, i}), workers);
    }
  }

  StudyResults results;
  results.seed = master_seed;
  results.rows.resize(n_inst * n_batch * policies.size());
  parallel_for(n_inst * n_batch, workers, [&](std::size_t unit) {
    const std::size_t i = unit / n_batch;
    const std::size_t b = unit % n_batch;
    const Setup& s = setups[i];
    const ProblemInstance& in = *s.instance;
    Engine batch_rng = make_stream(master_seed, {stream::kEvalBatch, i, b});
    const Batch batch = generate_batch(in, batch_rng);
    for (std::size_t pi = 0; pi < policies.size(); ++pi) {
      const Policy policy = policies[pi];
      ReferralPlan plan;
      switch (policy) {
        case Policy::kOA:
          plan = optimal_referral(batch, in.load_set, *s.perf, in.costs).plan;
          break;
        case Policy::kBA: {
          Engine select_rng = make_stream(master_seed, {stream::kBlindSelect, i, b});
          plan = ba_select(batch, s.w_ba, in.costs, select_rng);
          break;
        }
        case Policy::kSA:
          plan = sa_select(batch, s.w_sa, *s.perf, in.costs);
          break;
      }
      Engine human_rng = make_stream(master_seed, {stream::kHuman, i, b, pi});
      const BatchOutcome o = run_policy_on_batch(plan, batch, in, *s.perf, human_rng);
      results.rows[unit * policies.size() + pi] =
          StudyRow{static_cast<int>(i), policy, static_cast<int>(b), o.realized_cost,
                   o.expected_cost, o.load};
    }
  });

  for (std::size_t i = 0; i < n_inst; ++i) {
    results.instances.push_back({static_cast<int>(i), setups[i].w_ba, setups[i].w_sa,
                                 instance_to_json(*setups[i].instance)});
  }
  return results;
}

void export_results(const StudyResults& results, const std::filesystem::path& path,
                    const json& metadata) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "instance_id,policy,batch_id,realized_cost,expected_cost,load\n";
  for (const StudyRow& r : results.rows) {
    out << r.instance_id << ',' << policy_name(r.policy) << ',' << r.batch_id << ','
        << text::format_double(r.realized_cost) << ','
        << text::format_double(r.expected_cost) << ',' << r.load << '\n';
  }
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");

  json meta = metadata;
  meta["seed"] = results.seed;
  meta["rows"] = results.rows.size();
  json instances = json::array();
  for (const auto& s : results.instances) {
    json entry = s.parameters;
    entry["instance_id"] = s.instance_id;
    if (s.w_ba >= 0) entry["w_ba"] = s.w_ba;
    if (s.w_sa >= 0) entry["w_sa"] = s.w_sa;
    instances.push_back(entry);
  }
  meta["instances"] = instances;
  const std::filesystem::path meta_path = path.string() + ".meta.json";
  std::ofstream mout(meta_path, std::ios::binary | std::ios::trunc);
  if (!mout) throw IoError("cannot open '" + meta_path.string() + "' for writing");
  mout << meta.dump(2) << '\n';
  if (!mout) throw IoError("write failed for '" + meta_path.string() + "'");
}

std::vector<StudyRow> read_results(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string line;
  if (!std::getline(in, line) ||
      line != "instance_id,policy,batch_id,realized_cost,expected_cost,load") {
    throw IoError("'" + path.string() + "' is missing the results header");
  }
  std::vector<StudyRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string_view rest(line);
    std::string_view f[6];
    for (int i = 0; i < 6; ++i) {
      const auto comma = rest.find(',');
      if ((i < 5) == (comma == std::string_view::npos)) {
        throw IoError(path.string() + ":" + std::to_string(line_no) +
                      ": expected 6 comma-separated fields");
      }
      f[i] = rest.substr(0, comma);
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
    try {
      rows.push_back({text::parse_number<int>(f[0], "instance_id"), policy_from_name(f[1]),
                      text::parse_number<int>(f[2], "batch_id"),
                      text::parse_number<double>(f[3], "realized_cost"),
                      text::parse_number<double>(f[4], "expected_cost"),
                      text::parse_number<int>(f[5], "load")});
    } catch (const Error& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace refereval
