// refereval: command-line entry point for simulation studies, perf
// estimation, experiment building, analysis, the session server and the
// brute-force oracle.

#include <glob.h>
#include <openssl/evp.h>

#include <algorithm>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "refereval/analysis.hpp"
#include "refereval/error.hpp"
#include "refereval/oracle.hpp"
#include "refereval/server.hpp"
#include "refereval/simharness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace refereval;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw IoError("cannot write '" + path.string() + "'");
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::vector<fs::path> expand_glob(const std::string& pattern) {
  glob_t g{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  std::vector<fs::path> out;
  if (rc == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  globfree(&g);
  if (out.empty()) throw DomainError("no_input", "pattern '" + pattern + "' matches no files");
  std::sort(out.begin(), out.end());
  return out;
}

void print_provenance(std::uint64_t seed, const std::string& digest) {
  std::cout << "seed: " << seed << "\n"
            << "config_digest: sha256:" << digest << "\n";
}

void configure_logging() {
  const char* level = std::getenv("REFEREVAL_LOG_LEVEL");
  const std::string v = level ? level : "info";
  if (v == "error") spdlog::set_level(spdlog::level::err);
  else if (v == "warn") spdlog::set_level(spdlog::level::warn);
  else if (v == "debug") spdlog::set_level(spdlog::level::debug);
  else spdlog::set_level(spdlog::level::info);
  spdlog::set_pattern("[%l] %v");
}

// ---- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int workers = 1;
};

int cmd_simulate(const SimulateArgs& a) {
  const std::string text = read_file(a.config);
  const ScenarioConfig config = scenario_from_json(json::parse(text));
  const std::uint64_t seed = a.seed.value_or(config.study.seed);
  const std::string digest = sha256_hex(text);
  print_provenance(seed, digest);
  spdlog::info("{} instances x {} batches, K = {}, {} workers", config.study.n_instances,
               config.study.n_batches, config.batch_size, a.workers);
  const StudyResults results = run_study(config, seed, a.workers);
  export_results(results, a.out,
                 {{"config_digest", "sha256:" + digest}, {"config", scenario_to_json(config)}});

  // per-instance means, realized first, then expected
  struct Sum {
    double realized = 0.0, expected = 0.0;
    int n = 0;
  };
  std::map<std::pair<int, Policy>, Sum> sums;
  for (const StudyRow& r : results.rows) {
    auto& s = sums[{r.instance_id, r.policy}];
    s.realized += r.realized_cost;
    s.expected += r.expected_cost;
    ++s.n;
  }
  std::cout << "instance";
  for (Policy p : config.study.policies) std::cout << "  mean_realized_" << policy_name(p);
  for (Policy p : config.study.policies) std::cout << "  mean_expected_" << policy_name(p);
  std::cout << "\n";
  for (int i = 0; i < config.study.n_instances; ++i) {
    std::cout << i;
    for (Policy p : config.study.policies) {
      const Sum& s = sums[{i, p}];
      std::cout << "  " << (s.n ? s.realized / s.n : 0.0);
    }
    for (Policy p : config.study.policies) {
      const Sum& s = sums[{i, p}];
      std::cout << "  " << (s.n ? s.expected / s.n : 0.0);
    }
    std::cout << "\n";
  }
  std::cout << "wrote " << a.out << " (" << results.rows.size() << " rows)\n";
  return 0;
}

// ---- estimate ---------------------------------------------------------------

struct EstimateArgs {
  std::string logs;
  std::string truth;
  std::string out;
  bool exclude_auto = false;
  double min_completion = 0.55;
  std::vector<int> load_set{6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
};

std::vector<SessionLog> read_logs(const std::string& pattern) {
  std::vector<SessionLog> logs;
  for (const fs::path& p : expand_glob(pattern)) logs.push_back(read_session_log(p));
  return logs;
}

int cmd_estimate(const EstimateArgs& a) {
  const std::string truth_text = read_file(a.truth);
  const Schedule truth = schedule_from_json(json::parse(truth_text), AttributeSchema{});
  print_provenance(truth.seed, sha256_hex(truth_text));
  const auto logs = read_logs(a.logs);
  EstimateOptions options;
  options.include_auto_resolved = !a.exclude_auto;
  options.min_completion = a.min_completion;
  options.load_set = a.load_set;
  const PerfEstimate estimate = estimate_perf(logs, truth, options);
  for (const auto& id : estimate.excluded_sessions) {
    spdlog::warn("session {} below the completion threshold; excluded", id);
  }
  for (const LoadCounts& c : estimate.per_load) {
    if (!c.valid) spdlog::warn("load {} lacks tasks of one hypothesis; not used as a knot", c.w);
    std::cout << "w=" << c.w << "  tpr=" << c.tpr << " (" << c.n_h1_hit << "/" << c.n_h1 << ")"
              << "  fpr=" << c.fpr << " (" << c.n_h0_fa << "/" << c.n_h0 << ")\n";
  }
  json doc = perf_estimate_to_json(estimate);
  doc["truth_digest"] = "sha256:" + sha256_hex(truth_text);
  doc["sessions"] = logs.size();
  write_file(a.out, doc.dump(2) + "\n");
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

// ---- build-experiment -------------------------------------------------------

struct BuildArgs {
  std::string config;
  std::string perf;
  std::optional<std::uint64_t> seed;
  std::string out;
};

ExperimentConfig load_experiment(const std::string& path, std::string* digest) {
  const std::string text = read_file(path);
  if (digest) *digest = sha256_hex(text);
  return experiment_config_from_json(json::parse(text));
}

int cmd_build(const BuildArgs& a) {
  std::string digest;
  ExperimentConfig config = load_experiment(a.config, &digest);
  if (a.seed) config.seed = *a.seed;
  print_provenance(config.seed, digest);
  Engine rng = make_stream(config.seed, {stream::kTasks});
  json doc;
  if (config.mode == "calibration") {
    doc = schedule_to_json(build_calibration(config, rng), config.world.schema);
  } else {
    if (a.perf.empty()) throw DomainError("usage", "experiment2 needs --perf");
    const json perf_doc = read_json(a.perf);
    const HumanPerfModel perf = perf_model_from_json(perf_doc);
    if (const auto* t = std::get_if<TablePerf>(&perf.model())) {
      for (int w : config.load_set) {
        if (w < t->loads.front() || w > t->loads.back()) {
          spdlog::warn("perf table has no knots around load {}; rates clamped", w);
        }
      }
    }
    const Experiment2Build built = build_experiment2(config, perf, rng);
    std::cout << "w_ba: " << built.schedule.w_ba << "\n";
    doc = schedule_to_json(built.schedule, config.world.schema);
  }
  doc["config_digest"] = "sha256:" + digest;
  doc["config_name"] = config.name;
  write_file(a.out, doc.dump(2) + "\n");
  std::cout << "wrote " << a.out << " (" << doc.at("rounds").size() << " rounds)\n";
  return 0;
}

// ---- analyze ----------------------------------------------------------------

struct AnalyzeArgs {
  std::string logs_a;
  std::string logs_b;
  std::string truth;
  bool two_sided = false;
  std::string out;
};

std::string subject_of(const SessionLog& log) {
  return log.participant.empty() ? log.session_id : log.participant;
}

int cmd_analyze(const AnalyzeArgs& a) {
  const std::string truth_text = read_file(a.truth);
  const Schedule truth = schedule_from_json(json::parse(truth_text), AttributeSchema{});
  print_provenance(truth.seed, sha256_hex(truth_text));
  std::map<std::string, SubjectCosts> costs;
  for (const SessionLog& log : read_logs(a.logs_a)) {
    const SubjectCosts c = round_costs(log, truth);
    auto& dst = costs[subject_of(log)].ba;
    dst.insert(dst.end(), c.ba.begin(), c.ba.end());
  }
  for (const SessionLog& log : read_logs(a.logs_b)) {
    const SubjectCosts c = round_costs(log, truth);
    auto& dst = costs[subject_of(log)].oa;
    dst.insert(dst.end(), c.oa.begin(), c.oa.end());
  }
  const ComparisonReport report =
      compare_policies(costs, a.two_sided ? Alternative::kTwoSided : Alternative::kGreater);
  for (const auto& s : report.excluded) spdlog::warn("subject {} lacks one policy; excluded", s);
  const auto line = [](const char* name, const PairedTestResult& r) {
    std::cout << name << ": t0=" << r.t0 << " df=" << r.df << " p=" << r.p_value
              << " mean_diff=" << r.mean_diff << " s_d=" << r.s_d << " n=" << r.n << "\n";
  };
  line("average_case", report.average_case);
  line("worst_case", report.worst_case);
  json doc = comparison_to_json(report);
  doc["alternative"] = a.two_sided ? "two-sided" : "greater";
  doc["truth_digest"] = "sha256:" + sha256_hex(truth_text);
  if (!a.out.empty()) write_file(a.out, doc.dump(2) + "\n");
  return 0;
}

// ---- serve ------------------------------------------------------------------

struct ServeArgs {
  std::string config;
  std::string schedule;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string journal = "sessions";
  std::int64_t grace_ms = 0;
  std::string static_dir;
};

httplib::Server* g_server = nullptr;

int cmd_serve(const ServeArgs& a) {
  std::string digest;
  const ExperimentConfig config = load_experiment(a.config, &digest);
  print_provenance(config.seed, digest);
  std::optional<Schedule> schedule;
  if (!a.schedule.empty()) schedule = schedule_from_json(read_json(a.schedule), config.world.schema);
  SessionManager sessions({a.journal, a.grace_ms});
  sessions.add_experiment(config.name, make_setup(config, std::move(schedule)));
  const std::size_t restored = sessions.recover();
  if (restored) spdlog::info("restored {} sessions from {}", restored, a.journal);

  httplib::Server server;
  bind_routes(server, sessions);
  if (!a.static_dir.empty() && !server.set_mount_point("/", a.static_dir)) {
    throw IoError("cannot serve static files from '" + a.static_dir + "'");
  }
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  spdlog::info("experiment '{}' on http://{}:{}", config.name, a.host, a.port);
  if (!server.listen(a.host, a.port)) throw IoError("cannot listen on " + a.host + ":" + std::to_string(a.port));
  return 0;
}

// ---- oracle -----------------------------------------------------------------

struct OracleArgs {
  int k = 6;
  int trials = 1000;
  std::uint64_t seed = 1;
};

int cmd_oracle(const OracleArgs& a) {
  print_provenance(a.seed, sha256_hex("oracle k=" + std::to_string(a.k) +
                                      " trials=" + std::to_string(a.trials)));
  const OracleTally t = run_oracle(a.k, a.trials, a.seed);
  const bool ok = t.allocation_matches == t.trials && t.fixed_load_matches == t.trials;
  std::cout << "optimal allocation vs exhaustive: " << t.allocation_matches << "/" << t.trials << "\n"
            << "top-w referral vs exhaustive (every w): " << t.fixed_load_matches << "/" << t.trials << "\n"
            << "max abs error: " << t.max_abs_error << "\n"
            << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? 0 : 1;
}

// ---- replay -----------------------------------------------------------------

struct ReplayArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  int participants = 14;
  std::string out;
  CapacityPerf model;
};

int cmd_replay(const ReplayArgs& a) {
  std::string digest;
  ExperimentConfig config = load_experiment(a.config, &digest);
  if (a.seed) config.seed = *a.seed;
  print_provenance(config.seed, digest);
  Engine rng = make_stream(config.seed, {stream::kTasks});
  Schedule schedule = config.mode == "calibration"
                          ? build_calibration(config, rng)
                          : build_experiment2(config, HumanPerfModel(a.model), rng).schedule;
  const fs::path dir(a.out);
  fs::create_directories(dir);
  json truth = schedule_to_json(schedule, config.world.schema);
  truth["config_digest"] = "sha256:" + digest;
  write_file(dir / "truth.json", truth.dump(2) + "\n");
  for (int p = 0; p < a.participants; ++p) {
    Engine prng = make_stream(config.seed, {stream::kParticipant, static_cast<std::uint64_t>(p)});
    const std::string id = "synthetic-" + std::to_string(p + 1);
    const SessionLog log = simulate_capacity_session(schedule, a.model, id, id, prng);
    write_file(dir / (id + ".jsonl"), session_log_to_jsonl(log));
  }
  std::cout << "wrote " << a.participants << " synthetic sessions and truth.json to " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Decision-referral engine for human-automation classification teams"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run the randomized policy-comparison study");
  simulate->add_option("--config", sim.config, "Scenario JSON")->required()->check(CLI::ExistingFile);
  simulate->add_option("--seed", sim.seed, "Master seed (default: study.seed)");
  simulate->add_option("--out", sim.out, "Results file")->required();
  simulate->add_option("--workers", sim.workers, "Worker threads")->check(CLI::PositiveNumber);

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "Estimate human TPR/FPR per load from calibration logs");
  estimate->add_option("--logs", est.logs, "Session-log glob")->required();
  estimate->add_option("--truth", est.truth, "Ground-truth schedule")->required()->check(CLI::ExistingFile);
  estimate->add_option("--out", est.out, "Perf estimate JSON")->required();
  estimate->add_flag("--exclude-auto-resolved", est.exclude_auto, "Drop auto-resolved labels from the counts");
  estimate->add_option("--min-completion", est.min_completion, "Session validity threshold")
      ->check(CLI::Range(0.0, 1.0));
  estimate->add_option("--load-set", est.load_set, "Loads of the interpolated table");

  BuildArgs bld;
  auto* build = app.add_subcommand("build-experiment", "Build an experiment schedule (truth file)");
  build->add_option("--config", bld.config, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  build->add_option("--perf", bld.perf, "Human perf document (estimate output)")->check(CLI::ExistingFile);
  build->add_option("--seed", bld.seed, "Seed (default: config seed)");
  build->add_option("--out", bld.out, "Schedule JSON")->required();

  AnalyzeArgs ana;
  auto* analyze = app.add_subcommand("analyze", "Paired comparison of BA (logs-a) and OA (logs-b) round costs");
  analyze->add_option("--logs-a", ana.logs_a, "Logs supplying the BA rounds")->required();
  analyze->add_option("--logs-b", ana.logs_b, "Logs supplying the OA rounds")->required();
  analyze->add_option("--truth", ana.truth, "Ground-truth schedule")->required()->check(CLI::ExistingFile);
  analyze->add_flag("--two-sided", ana.two_sided, "Two-sided p-values");
  analyze->add_option("--out", ana.out, "Report JSON");

  ServeArgs srv;
  auto* serve = app.add_subcommand("serve", "Run the experiment session server");
  serve->add_option("--config", srv.config, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  serve->add_option("--schedule", srv.schedule, "Schedule from build-experiment")->check(CLI::ExistingFile);
  serve->add_option("--host", srv.host);
  serve->add_option("--port", srv.port);
  serve->add_option("--journal", srv.journal, "Session journal directory");
  serve->add_option("--grace-ms", srv.grace_ms, "Deadline grace in milliseconds");
  serve->add_option("--static", srv.static_dir, "Directory served at /");

  OracleArgs orc;
  auto* oracle = app.add_subcommand("oracle", "Check the optimizers against exhaustive enumeration");
  oracle->add_option("--k", orc.k, "Batch size")->check(CLI::Range(1, kOracleMaxBatch));
  oracle->add_option("--trials", orc.trials)->check(CLI::PositiveNumber);
  oracle->add_option("--seed", orc.seed);

  ReplayArgs rep;
  auto* replay = app.add_subcommand("replay", "Generate synthetic capacity-model session logs");
  replay->add_option("--config", rep.config, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  replay->add_option("--seed", rep.seed);
  replay->add_option("--participants", rep.participants)->check(CLI::PositiveNumber);
  replay->add_option("--capacity", rep.model.capacity)->check(CLI::PositiveNumber);
  replay->add_option("--out", rep.out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*simulate) return cmd_simulate(sim);
    if (*estimate) return cmd_estimate(est);
    if (*build) return cmd_build(bld);
    if (*analyze) return cmd_analyze(ana);
    if (*serve) return cmd_serve(srv);
    if (*oracle) return cmd_oracle(orc);
    if (*replay) return cmd_replay(rep);
  } catch (const Error& e) {
    spdlog::error("{}: {}", e.code(), e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 2;
}
