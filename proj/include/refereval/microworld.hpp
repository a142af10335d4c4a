#pragma once

// Radar-microworld experiment machinery: attribute schema, decision trees,
// leaf posteriors, task generation, round schedules and session-log events.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "refereval/policies.hpp"

namespace refereval {

enum class AttributeKind { kContinuous, kCategorical };

struct NormalLaw {
  double mean = 0.0;
  double sd = 1.0;
};

struct AttributeSpec {
  std::string name;
  AttributeKind kind = AttributeKind::kContinuous;
  NormalLaw continuous_h0, continuous_h1;
  std::vector<std::string> categories;
  std::vector<double> categorical_h0, categorical_h1;
};

// Attributes are conditionally independent given the hidden state.
class AttributeSchema {
 public:
  AttributeSchema() = default;
  explicit AttributeSchema(std::vector<AttributeSpec> attributes);

  const std::vector<AttributeSpec>& attributes() const { return attributes_; }
  std::size_t size() const { return attributes_.size(); }
  // Index of a named attribute; throws DomainError naming it when absent.
  std::size_t index_of(const std::string& name) const;
  int category_index(std::size_t attribute, const std::string& category) const;

 private:
  std::vector<AttributeSpec> attributes_;
};

// One value per schema attribute: a number for continuous attributes, a
// category index for categorical ones.
struct AttributeValue {
  double number = 0.0;
  int category = -1;
};
using AttributeVector = std::vector<AttributeValue>;

AttributeVector sample_attributes(const AttributeSchema& schema, Hypothesis h, Engine& rng);
nlohmann::json attributes_to_json(const AttributeSchema& schema, const AttributeVector& values);
// Reads named attributes; every attribute in the schema must be present.
AttributeVector attributes_from_json(const AttributeSchema& schema, const nlohmann::json& doc);

struct TreeNode {
  std::string id;
  bool is_leaf = false;
  Hypothesis label = Hypothesis::kH0;  // leaves
  std::size_t attribute = 0;           // internal nodes
  double threshold = 0.0;              // continuous: value > threshold goes to yes
  std::vector<bool> category_mask;     // categorical: member categories go to yes
  int yes = -1;
  int no = -1;
};

struct Classification {
  Hypothesis label = Hypothesis::kH0;
  std::string leaf_id;
  int depth = 0;
};

// Binary decision tree over a schema. Node 0 is the root.
class DecisionTree {
 public:
  DecisionTree() = default;

  // {"root": id, "nodes": [{"id", "attribute", "threshold"|"categories", "yes",
  // "no"} | {"id", "label"}]}
  static DecisionTree from_json(const nlohmann::json& doc, const AttributeSchema& schema);
  // {"base": ..., "merge": [{"node", "leaf", "label"}]}: the subtrees rooted at
  // the listed nodes collapse into single labelled leaves.
  static DecisionTree merged(const DecisionTree& base, const nlohmann::json& merge_spec);

  nlohmann::json to_json(const AttributeSchema& schema) const;

  Classification classify(const AttributeVector& values) const;
  // Throws DomainError naming the first tested attribute missing from `doc`.
  Classification classify_json(const AttributeSchema& schema, const nlohmann::json& doc) const;

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::vector<std::string> leaf_ids() const;
  bool has_leaf(const std::string& id) const;
  // Number of tests on the path from the root to the leaf.
  int leaf_depth(const std::string& id) const;

 private:
  std::vector<TreeNode> nodes_;
};

// Exact P(leaf | H) for every leaf: product over attributes of the
// probability that the attribute satisfies the path's constraints.
std::map<std::string, double> leaf_probabilities(const DecisionTree& tree,
                                                 const AttributeSchema& schema, Hypothesis h);

struct LeafStats {
  double p_h0 = 0.0;  // P(leaf | H0)
  double p_h1 = 0.0;  // P(leaf | H1)
  double posterior = 0.0;
};

// Exact P(H1 | leaf). Throws DegenerateError for a leaf that is never
// visited under either hypothesis. The Monte Carlo variant estimates the
// visit frequencies from samples instead.
double leaf_posterior(const std::string& leaf_id, const AttributeSchema& schema,
                      const DecisionTree& tree, const Prior& prior);
LeafStats leaf_posterior_monte_carlo(const std::string& leaf_id, const AttributeSchema& schema,
                                     const DecisionTree& tree, const Prior& prior,
                                     std::size_t samples_per_hypothesis, Engine& rng);
std::map<std::string, LeafStats> leaf_table(const DecisionTree& tree,
                                            const AttributeSchema& schema, const Prior& prior);

// TPR / FPR of following the tree exactly.
Rates tree_rates(const DecisionTree& tree, const AttributeSchema& schema);
Rates tree_rates_monte_carlo(const DecisionTree& tree, const AttributeSchema& schema,
                             std::size_t samples_per_hypothesis, Engine& rng);

struct MicroworldTask {
  int task_id = 0;
  AttributeVector attributes;
  Hypothesis true_state = Hypothesis::kH0;
  int human_tree_depth = 0;
  std::string auto_leaf;
  double auto_posterior = 0.0;
};

struct TaskRequest {
  std::optional<std::string> auto_leaf;
  std::set<int> human_depths{4, 5};
};

struct Microworld {
  AttributeSchema schema;
  DecisionTree human_tree;
  DecisionTree auto_tree;
  Prior prior{0.2};
  std::map<std::string, LeafStats> auto_leaves;  // exact leaf table of auto_tree
};

inline constexpr std::size_t kRejectionBudget = 100000;

// Rejection sampling of (state, attributes) from the prior and schema until the
// automation tree lands on the requested leaf and the human-tree path has an
// allowed depth. Throws DomainError("unreachable_leaf") once the budget is spent.
MicroworldTask generate_task(int task_id, const TaskRequest& request, const Microworld& world,
                             Engine& rng, std::size_t budget = kRejectionBudget);

enum class RoundKind { kPractice, kCalibration, kOA, kBA };
std::string_view round_kind_name(RoundKind k);
RoundKind round_kind_from_name(std::string_view s);

struct AutomatedDecision {
  MicroworldTask task;
  Hypothesis decision = Hypothesis::kH0;
};

struct Round {
  int round_id = 0;
  RoundKind kind = RoundKind::kCalibration;
  int batch_id = -1;  // experiment batches only
  double duration_s = 120.0;
  std::vector<MicroworldTask> tasks;         // assigned to the human
  std::vector<AutomatedDecision> automated;  // decided by the automation

  int load() const { return static_cast<int>(tasks.size()); }
  bool practice() const { return kind == RoundKind::kPractice; }
};

// Everything an experiment session plays, plus the ground truth analysis
// needs. Serialized as the truth sidecar.
struct Schedule {
  std::string mode;  // "calibration" | "experiment2"
  std::uint64_t seed = 0;
  DecisionCosts costs{0.0, 8.0, 0.0, 12.0, 0.0};
  Prior prior{0.2};
  std::vector<int> load_set;
  int w_ba = -1;
  std::vector<Round> rounds;
};

nlohmann::json schedule_to_json(const Schedule& schedule, const AttributeSchema& schema);
// With an empty schema, task attributes are skipped (analysis needs only the
// ground truth).
Schedule schedule_from_json(const nlohmann::json& doc, const AttributeSchema& schema);

struct ExperimentConfig {
  std::string name = "reference";
  std::string mode = "experiment2";
  std::uint64_t seed = 1;
  Microworld world;
  DecisionCosts costs{0.0, 8.0, 0.0, 12.0, 0.0};
  std::vector<int> load_set{6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
  std::vector<int> estimation_loads{6, 9, 12, 15};
  int rounds_per_load = 6;
  int n_batches = 12;
  int tasks_per_leaf = 5;
  int practice_rounds = 3;
  int practice_load = 6;
  double round_duration_s = 120.0;
  std::set<int> task_depths{4, 5};
  std::optional<AutomationPerfModel> automation_rates;  // default: exact auto-tree rates
  nlohmann::json source;                                // the document it was read from
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);

// 24 calibration rounds: each estimation load `rounds_per_load` times in seeded
// random order; tasks at the configured human-tree depths.
Schedule build_calibration(const ExperimentConfig& config, Engine& rng);

struct Experiment2Build {
  Schedule schedule;
  std::vector<Batch> batches;  // posteriors the policies saw, one per batch
};

// n_batches batches with tasks_per_leaf tasks per automation leaf, each run
// through blind (precomputed w_ba) and optimal allocation over the load set;
// the 2 n_batches rounds are shuffled by a seeded permutation.
Experiment2Build build_experiment2(const ExperimentConfig& config, const HumanPerfModel& perf,
                                   Engine& rng);

// Practice rounds prepended to every live session.
std::vector<Round> build_practice(const ExperimentConfig& config, Engine& rng);

// ---- session logs ---------------------------------------------------------

enum class EventSource { kHuman, kAutoResolve };

struct DecisionEvent {
  std::int64_t timestamp_ms = 0;
  std::string session_id;
  std::string participant;
  int round_id = 0;
  int task_id = 0;
  std::optional<Hypothesis> decision;  // nullopt = unclassified
  EventSource source = EventSource::kHuman;
  bool practice = false;
  std::optional<std::int64_t> client_ts;
};

nlohmann::json event_to_json(const DecisionEvent& e);
DecisionEvent event_from_json(const nlohmann::json& doc);

struct SessionLog {
  std::string session_id;
  std::string participant;
  std::vector<DecisionEvent> events;
};

std::string session_log_to_jsonl(const SessionLog& log);
SessionLog session_log_from_jsonl(std::string_view text);
SessionLog read_session_log(const std::filesystem::path& path);

// Fair-coin labels, timestamped `resolve_at_ms`, for every task of the round
// without a decision event in `events`.
std::vector<DecisionEvent> resolve_unclassified(const Round& round,
                                                const std::vector<DecisionEvent>& events,
                                                const std::string& session_id,
                                                const std::string& participant,
                                                std::int64_t resolve_at_ms, Engine& rng);

}  // namespace refereval
