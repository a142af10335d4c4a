#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "refereval/error.hpp"
#include "refereval/microworld.hpp"

using namespace refereval;
using nlohmann::json;

namespace {

json load_json(const std::string& name) {
  std::ifstream in(std::string(REFEREVAL_CONFIG_DIR) + "/" + name);
  REQUIRE(in);
  return json::parse(in);
}

const ExperimentConfig& reference() {
  static const ExperimentConfig config = experiment_config_from_json(load_json("experiment_reference.json"));
  return config;
}

// One categorical attribute x in {a, b, c}; c never occurs.
AttributeSchema tiny_schema() {
  AttributeSpec x;
  x.name = "x";
  x.kind = AttributeKind::kCategorical;
  x.categories = {"a", "b", "c"};
  x.categorical_h0 = {0.05, 0.95, 0.0};
  x.categorical_h1 = {0.5, 0.5, 0.0};
  return AttributeSchema({x});
}

const json kTinyTree = {
    {"root", "r"},
    {"nodes",
     {{{"id", "r"}, {"attribute", "x"}, {"categories", {"a"}}, {"yes", "La"}, {"no", "n1"}},
      {{"id", "n1"}, {"attribute", "x"}, {"categories", {"b"}}, {"yes", "Lb"}, {"no", "Lc"}},
      {{"id", "La"}, {"label", "H1"}},
      {{"id", "Lb"}, {"label", "H0"}},
      {{"id", "Lc"}, {"label", "H0"}}}}};

}  // namespace

TEST_CASE("single-leaf tree") {
  const AttributeSchema schema = tiny_schema();
  const DecisionTree t = DecisionTree::from_json({{"root", "L"}, {"nodes", {{{"id", "L"}, {"label", "H1"}}}}}, schema);
  Engine rng(1);
  for (int i = 0; i < 20; ++i) {
    const Classification c = t.classify(sample_attributes(schema, Hypothesis::kH0, rng));
    CHECK(c.label == Hypothesis::kH1);
    CHECK(c.depth == 0);
    CHECK(c.leaf_id == "L");
  }
}

TEST_CASE("tree parsing rejects malformed trees") {
  const AttributeSchema schema = tiny_schema();
  json cyc = kTinyTree;
  cyc["nodes"][1]["no"] = "r";
  CHECK_THROWS_AS(DecisionTree::from_json(cyc, schema), DomainError);
  json missing = kTinyTree;
  missing["nodes"][1]["yes"] = "nowhere";
  CHECK_THROWS_AS(DecisionTree::from_json(missing, schema), DomainError);
  json badattr = kTinyTree;
  badattr["nodes"][0]["attribute"] = "speed";
  CHECK_THROWS_AS(DecisionTree::from_json(badattr, schema), DomainError);
  json orphan = kTinyTree;
  orphan["nodes"].push_back({{"id", "stray"}, {"label", "H0"}});
  CHECK_THROWS_AS(DecisionTree::from_json(orphan, schema), DomainError);
}

TEST_CASE("missing attribute error names the attribute") {
  const ExperimentConfig& cfg = reference();
  json attrs = json::object();
  try {
    cfg.world.human_tree.classify_json(cfg.world.schema, attrs);
    FAIL("expected an error");
  } catch (const DomainError& e) {
    CHECK(e.code() == "missing_attribute");
    CHECK(std::string(e.what()).find("identification_response") != std::string::npos);
  }
}

TEST_CASE("leaf posteriors on a categorical schema") {
  const AttributeSchema schema = tiny_schema();
  const DecisionTree t = DecisionTree::from_json(kTinyTree, schema);
  const Prior prior(0.2);
  CHECK(leaf_posterior("La", schema, t, prior) == doctest::Approx(0.1 / 0.14));
  CHECK(leaf_posterior("Lb", schema, t, prior) == doctest::Approx(0.1 / (0.1 + 0.76)));
  CHECK_THROWS_AS(leaf_posterior("Lc", schema, t, prior), DegenerateError);
  CHECK_THROWS_AS(leaf_posterior("nope", schema, t, prior), DomainError);
  CHECK(t.leaf_depth("Lc") == 2);
}

TEST_CASE("equal visit frequencies give the prior") {
  AttributeSpec x;
  x.name = "x";
  x.kind = AttributeKind::kCategorical;
  x.categories = {"a", "b"};
  x.categorical_h0 = {0.3, 0.7};
  x.categorical_h1 = {0.3, 0.7};
  const AttributeSchema schema({x});
  json tree = {{"root", "r"},
               {"nodes",
                {{{"id", "r"}, {"attribute", "x"}, {"categories", {"a"}}, {"yes", "A"}, {"no", "B"}},
                 {{"id", "A"}, {"label", "H1"}},
                 {{"id", "B"}, {"label", "H0"}}}}};
  CHECK(leaf_posterior("A", schema, DecisionTree::from_json(tree, schema), Prior(0.2)) ==
        doctest::Approx(0.2));
}

TEST_CASE("reference trees reach their operating points") {
  const ExperimentConfig& cfg = reference();
  const Rates h = tree_rates(cfg.world.human_tree, cfg.world.schema);
  const Rates a = tree_rates(cfg.world.auto_tree, cfg.world.schema);
  CHECK(h.tpr == doctest::Approx(0.87).epsilon(0.01));
  CHECK(std::abs(h.fpr - 0.046) < 0.005);
  CHECK(std::abs(a.tpr - 0.81) < 0.01);
  CHECK(std::abs(a.fpr - 0.18) < 0.01);
  CHECK(cfg.world.auto_tree.leaf_ids().size() == 6);
  CHECK(cfg.world.human_tree.leaf_ids().size() >= 6);
}

TEST_CASE("exact leaf probabilities match Monte Carlo") {
  const ExperimentConfig& cfg = reference();
  Engine rng(17);
  const std::size_t n = 200000;
  // 12 simultaneous checks, so a 5 SE bound keeps the family-wise rate small
  for (const auto& [leaf, exact] : cfg.world.auto_leaves) {
    const LeafStats mc = leaf_posterior_monte_carlo(leaf, cfg.world.schema, cfg.world.auto_tree,
                                                    cfg.world.prior, n, rng);
    CHECK(std::abs(mc.p_h0 - exact.p_h0) < 5 * std::sqrt(exact.p_h0 * (1 - exact.p_h0) / n) + 1e-12);
    CHECK(std::abs(mc.p_h1 - exact.p_h1) < 5 * std::sqrt(exact.p_h1 * (1 - exact.p_h1) / n) + 1e-12);
  }
}

TEST_CASE("leaf posteriors average to the prior") {
  const ExperimentConfig& cfg = reference();
  const double pi1 = cfg.world.prior.pi1();
  double mass = 0.0, weighted = 0.0;
  for (const auto& [leaf, s] : cfg.world.auto_leaves) {
    const double visit = pi1 * s.p_h1 + (1 - pi1) * s.p_h0;
    mass += visit;
    weighted += visit * s.posterior;
  }
  CHECK(mass == doctest::Approx(1.0));
  CHECK(weighted == doctest::Approx(pi1));
}

TEST_CASE("automation leaves carry the Bayes label of their posterior") {
  const ExperimentConfig& cfg = reference();
  for (const TreeNode& n : cfg.world.auto_tree.nodes()) {
    if (!n.is_leaf) continue;
    const double p = cfg.world.auto_leaves.at(n.id).posterior;
    CHECK(n.label == auto_bayes_decision(p, cfg.costs));
  }
}

TEST_CASE("generated tasks land where requested") {
  const ExperimentConfig& cfg = reference();
  Engine rng(5);
  for (const std::string& leaf : cfg.world.auto_tree.leaf_ids()) {
    for (int i = 0; i < 5; ++i) {
      const MicroworldTask t = generate_task(i, TaskRequest{leaf, {4, 5}}, cfg.world, rng);
      const Classification a = cfg.world.auto_tree.classify(t.attributes);
      const Classification h = cfg.world.human_tree.classify(t.attributes);
      CHECK(a.leaf_id == leaf);
      CHECK(t.auto_leaf == leaf);
      CHECK(h.depth == t.human_tree_depth);
      CHECK((t.human_tree_depth == 4 || t.human_tree_depth == 5));
      CHECK(t.auto_posterior == cfg.world.auto_leaves.at(leaf).posterior);
      // attributes survive the display round trip onto the same leaves
      const json shown = attributes_to_json(cfg.world.schema, t.attributes);
      CHECK(cfg.world.auto_tree.classify_json(cfg.world.schema, shown).leaf_id == leaf);
    }
  }
  Engine a(9), b(9);
  const auto ta = generate_task(1, TaskRequest{}, cfg.world, a);
  const auto tb = generate_task(1, TaskRequest{}, cfg.world, b);
  CHECK(attributes_to_json(cfg.world.schema, ta.attributes) == attributes_to_json(cfg.world.schema, tb.attributes));
}

TEST_CASE("unreachable leaves exhaust the budget") {
  Microworld w;
  w.schema = tiny_schema();
  w.human_tree = DecisionTree::from_json(kTinyTree, w.schema);
  w.auto_tree = w.human_tree;
  Engine rng(1);
  try {
    generate_task(1, TaskRequest{"Lc", {}}, w, rng, 1000);
    FAIL("expected unreachable_leaf");
  } catch (const DomainError& e) {
    CHECK(e.code() == "unreachable_leaf");
  }
  CHECK_THROWS_AS(generate_task(1, TaskRequest{"missing", {}}, w, rng, 10), DomainError);
}

TEST_CASE("calibration schedule") {
  ExperimentConfig cfg = reference();
  Engine rng(3);
  const Schedule s = build_calibration(cfg, rng);
  std::map<int, int> hist;
  int total = 0;
  for (const Round& r : s.rounds) {
    ++hist[r.load()];
    total += r.load();
    CHECK(r.kind == RoundKind::kCalibration);
    CHECK(r.duration_s == 120.0);
    for (const auto& t : r.tasks) CHECK((t.human_tree_depth == 4 || t.human_tree_depth == 5));
  }
  CHECK(s.rounds.size() == 24);
  CHECK(hist == std::map<int, int>{{6, 6}, {9, 6}, {12, 6}, {15, 6}});
  CHECK(total == 252);

  Engine other(4);
  const Schedule s2 = build_calibration(cfg, other);
  std::vector<int> l1, l2;
  for (const Round& r : s.rounds) l1.push_back(r.load());
  for (const Round& r : s2.rounds) l2.push_back(r.load());
  CHECK(l1 != l2);
  std::sort(l1.begin(), l1.end());
  std::sort(l2.begin(), l2.end());
  CHECK(l1 == l2);
}

TEST_CASE("experiment-2 schedule") {
  const ExperimentConfig& cfg = reference();
  const HumanPerfModel perf(CapacityPerf{});
  Engine rng(8);
  const Experiment2Build built = build_experiment2(cfg, perf, rng);
  const Schedule& s = built.schedule;
  CHECK(s.rounds.size() == 24);
  CHECK(built.batches.size() == 12);
  CHECK(s.w_ba == 10);
  int ba = 0, oa = 0, ba_tasks = 0;
  std::map<int, std::map<RoundKind, std::set<int>>> coverage;
  for (const Round& r : s.rounds) {
    CHECK(r.tasks.size() + r.automated.size() == 30);
    std::map<std::string, int> per_leaf;
    for (const auto& t : r.tasks) {
      ++per_leaf[t.auto_leaf];
      coverage[r.batch_id][r.kind].insert(t.task_id);
    }
    for (const auto& a : r.automated) {
      ++per_leaf[a.task.auto_leaf];
      coverage[r.batch_id][r.kind].insert(a.task.task_id);
      CHECK(a.decision == auto_bayes_decision(a.task.auto_posterior, cfg.costs));
    }
    CHECK(per_leaf.size() == 6);
    for (const auto& [leaf, n] : per_leaf) CHECK(n == 5);
    if (r.kind == RoundKind::kBA) {
      ++ba;
      CHECK(r.load() == s.w_ba);
      ba_tasks += r.load();
    } else {
      REQUIRE(r.kind == RoundKind::kOA);
      ++oa;
      CHECK(r.load() >= 6);
      CHECK(r.load() <= 15);
    }
  }
  CHECK(ba == 12);
  CHECK(oa == 12);
  CHECK(ba_tasks == 12 * s.w_ba);
  for (const auto& [batch, kinds] : coverage) {
    CHECK(kinds.at(RoundKind::kBA) == kinds.at(RoundKind::kOA));
  }

  Engine again(8);
  const Experiment2Build rebuilt = build_experiment2(cfg, perf, again);
  CHECK(schedule_to_json(rebuilt.schedule, cfg.world.schema).dump() ==
        schedule_to_json(s, cfg.world.schema).dump());
}

TEST_CASE("schedule JSON round trip") {
  const ExperimentConfig& cfg = reference();
  Engine rng(2);
  const Schedule s = build_experiment2(cfg, HumanPerfModel(CapacityPerf{}), rng).schedule;
  const json doc = schedule_to_json(s, cfg.world.schema);
  const Schedule back = schedule_from_json(doc, cfg.world.schema);
  CHECK(schedule_to_json(back, cfg.world.schema) == doc);
  const Schedule truth_only = schedule_from_json(doc, AttributeSchema{});
  CHECK(truth_only.rounds.size() == 24);
  CHECK(truth_only.rounds[0].tasks[0].true_state == s.rounds[0].tasks[0].true_state);
}

TEST_CASE("unclassified tasks are resolved by a fair coin") {
  Round r;
  r.round_id = 4;
  for (int i = 0; i < 10; ++i) r.tasks.push_back(MicroworldTask{i, {}, Hypothesis::kH0, 4, "x", 0.1});
  Engine rng(21);
  long h1 = 0, n = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    for (const DecisionEvent& e : resolve_unclassified(r, {}, "s", "p", 5000, rng)) {
      CHECK(e.source == EventSource::kAutoResolve);
      CHECK(e.timestamp_ms >= 5000);
      h1 += *e.decision == Hypothesis::kH1;
      ++n;
    }
  }
  CHECK(n == 10000);
  CHECK(std::abs(h1 - 5000.0) < 4 * std::sqrt(10000 * 0.25));

  std::vector<DecisionEvent> all;
  for (int i = 0; i < 10; ++i) all.push_back({1, "s", "p", 4, i, Hypothesis::kH0, EventSource::kHuman, false, {}});
  CHECK(resolve_unclassified(r, all, "s", "p", 5000, rng).empty());
  all.resize(7);
  const auto rest = resolve_unclassified(r, all, "s", "p", 5000, rng);
  CHECK(rest.size() == 3);
  CHECK(rest[0].task_id == 7);
}

TEST_CASE("session log JSON lines") {
  SessionLog log{"abc", "p1", {}};
  log.events.push_back({10, "abc", "p1", 1001, 1000001, Hypothesis::kH1, EventSource::kHuman, true, 9});
  log.events.push_back({20, "abc", "p1", 3, 17, std::nullopt, EventSource::kAutoResolve, false, {}});
  const std::string text = session_log_to_jsonl(log);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  const SessionLog back = session_log_from_jsonl(text);
  CHECK(session_log_to_jsonl(back) == text);
  CHECK(back.session_id == "abc");
  CHECK(back.events[0].practice);
  CHECK(*back.events[0].client_ts == 9);
  CHECK_FALSE(back.events[1].decision.has_value());
  CHECK_THROWS_AS(session_log_from_jsonl("{\"round_id\": 1}\n"), DomainError);
  CHECK_THROWS_AS(session_log_from_jsonl("not json\n"), DomainError);
}
