#include "refereval/microworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "refereval/error.hpp"

namespace refereval {

using nlohmann::json;

// ---- schema ---------------------------------------------------------------

AttributeSchema::AttributeSchema(std::vector<AttributeSpec> attributes)
    : attributes_(std::move(attributes)) {
  std::set<std::string> names;
  for (const AttributeSpec& a : attributes_) {
    if (!names.insert(a.name).second) {
      throw DomainError("schema", "duplicate attribute '" + a.name + "'");
    }
    if (a.kind == AttributeKind::kContinuous) {
      if (!(a.continuous_h0.sd > 0.0) || !(a.continuous_h1.sd > 0.0)) {
        throw DomainError("schema", "attribute '" + a.name + "' needs positive sd under both hypotheses");
      }
      continue;
    }
    const std::size_t n = a.categories.size();
    if (n == 0 || a.categorical_h0.size() != n || a.categorical_h1.size() != n) {
      throw DomainError("schema", "attribute '" + a.name +
                                      "' needs one probability per category under both hypotheses");
    }
    for (const auto* probs : {&a.categorical_h0, &a.categorical_h1}) {
      double sum = 0.0;
      for (double p : *probs) {
        if (!(p >= 0.0)) throw DomainError("schema", "negative probability in '" + a.name + "'");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-6) {
        throw DomainError("schema", "probabilities of '" + a.name + "' do not sum to 1");
      }
    }
  }
}

std::size_t AttributeSchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < attributes_.size(); ++i) {
    if (attributes_[i].name == name) return i;
  }
  throw DomainError("missing_attribute", "unknown attribute '" + name + "'");
}

int AttributeSchema::category_index(std::size_t attribute, const std::string& category) const {
  const auto& cats = attributes_.at(attribute).categories;
  const auto it = std::find(cats.begin(), cats.end(), category);
  if (it == cats.end()) {
    throw DomainError("schema", "attribute '" + attributes_[attribute].name +
                                    "' has no category '" + category + "'");
  }
  return static_cast<int>(it - cats.begin());
}

AttributeVector sample_attributes(const AttributeSchema& schema, Hypothesis h, Engine& rng) {
  AttributeVector values(schema.size());
  const bool hostile = h == Hypothesis::kH1;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const AttributeSpec& a = schema.attributes()[i];
    if (a.kind == AttributeKind::kContinuous) {
      const NormalLaw& law = hostile ? a.continuous_h1 : a.continuous_h0;
      values[i].number = std::normal_distribution<double>(law.mean, law.sd)(rng);
    } else {
      const auto& probs = hostile ? a.categorical_h1 : a.categorical_h0;
      values[i].category = std::discrete_distribution<int>(probs.begin(), probs.end())(rng);
    }
  }
  return values;
}

json attributes_to_json(const AttributeSchema& schema, const AttributeVector& values) {
  json out = json::object();
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const AttributeSpec& a = schema.attributes()[i];
    if (a.kind == AttributeKind::kContinuous) {
      // one decimal, as displayed to participants
      out[a.name] = std::round(values[i].number * 10.0) / 10.0;
    } else {
      out[a.name] = a.categories.at(static_cast<std::size_t>(values[i].category));
    }
  }
  return out;
}

AttributeVector attributes_from_json(const AttributeSchema& schema, const json& doc) {
  AttributeVector values(schema.size());
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const AttributeSpec& a = schema.attributes()[i];
    if (!doc.contains(a.name)) {
      throw DomainError("missing_attribute", "missing attribute '" + a.name + "'");
    }
    if (a.kind == AttributeKind::kContinuous) {
      values[i].number = doc.at(a.name).get<double>();
    } else {
      values[i].category = schema.category_index(i, doc.at(a.name).get<std::string>());
    }
  }
  return values;
}

// ---- trees ----------------------------------------------------------------

DecisionTree DecisionTree::from_json(const json& doc, const AttributeSchema& schema) {
  std::unordered_map<std::string, json> by_id;
  try {
    for (const json& n : doc.at("nodes")) {
      const auto id = n.at("id").get<std::string>();
      if (!by_id.emplace(id, n).second) {
        throw DomainError("tree", "duplicate node id '" + id + "'");
      }
    }
    DecisionTree tree;
    std::unordered_map<std::string, int> placed;
    std::set<std::string> on_path;
    std::function<int(const std::string&)> build = [&](const std::string& id) -> int {
      if (on_path.count(id)) throw DomainError("tree", "cycle through node '" + id + "'");
      if (placed.count(id)) throw DomainError("tree", "node '" + id + "' has two parents");
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw DomainError("tree", "undefined node '" + id + "'");
      const json& n = it->second;
      const int index = static_cast<int>(tree.nodes_.size());
      placed[id] = index;
      tree.nodes_.push_back({});
      TreeNode node;
      node.id = id;
      if (n.contains("label")) {
        node.is_leaf = true;
        node.label = hypothesis_from_string(n.at("label").get<std::string>());
        tree.nodes_[static_cast<std::size_t>(index)] = node;
        return index;
      }
      node.attribute = schema.index_of(n.at("attribute").get<std::string>());
      const AttributeSpec& spec = schema.attributes()[node.attribute];
      if (spec.kind == AttributeKind::kContinuous) {
        if (!n.contains("threshold")) {
          throw DomainError("tree", "node '" + id + "' tests continuous '" + spec.name +
                                        "' without a threshold");
        }
        node.threshold = n.at("threshold").get<double>();
      } else {
        if (!n.contains("categories")) {
          throw DomainError("tree", "node '" + id + "' tests categorical '" + spec.name +
                                        "' without categories");
        }
        node.category_mask.assign(spec.categories.size(), false);
        for (const json& c : n.at("categories")) {
          node.category_mask[static_cast<std::size_t>(
              schema.category_index(node.attribute, c.get<std::string>()))] = true;
        }
      }
      on_path.insert(id);
      node.yes = build(n.at("yes").get<std::string>());
      node.no = build(n.at("no").get<std::string>());
      on_path.erase(id);
      tree.nodes_[static_cast<std::size_t>(index)] = node;
      return index;
    };
    build(doc.at("root").get<std::string>());
    if (placed.size() != by_id.size()) {
      for (const auto& [id, _] : by_id) {
        if (!placed.count(id)) throw DomainError("tree", "node '" + id + "' is unreachable");
      }
    }
    return tree;
  } catch (const json::exception& e) {
    throw DomainError("tree", std::string("malformed tree: ") + e.what());
  }
}

DecisionTree DecisionTree::merged(const DecisionTree& base, const json& merge_spec) {
  std::unordered_map<std::string, std::pair<std::string, Hypothesis>> collapse;
  try {
    for (const json& m : merge_spec.at("merge")) {
      collapse[m.at("node").get<std::string>()] = {
          m.at("leaf").get<std::string>(),
          hypothesis_from_string(m.at("label").get<std::string>())};
    }
  } catch (const json::exception& e) {
    throw DomainError("tree", std::string("malformed merge spec: ") + e.what());
  }
  DecisionTree out;
  std::size_t used = 0;
  std::function<int(int)> copy = [&](int src) -> int {
    const TreeNode& n = base.nodes_[static_cast<std::size_t>(src)];
    const int index = static_cast<int>(out.nodes_.size());
    out.nodes_.push_back(n);
    if (auto it = collapse.find(n.id); it != collapse.end()) {
      TreeNode leaf;
      leaf.id = it->second.first;
      leaf.is_leaf = true;
      leaf.label = it->second.second;
      out.nodes_[static_cast<std::size_t>(index)] = leaf;
      ++used;
      return index;
    }
    if (!n.is_leaf) {
      const int yes = copy(n.yes);
      const int no = copy(n.no);
      out.nodes_[static_cast<std::size_t>(index)].yes = yes;
      out.nodes_[static_cast<std::size_t>(index)].no = no;
    }
    return index;
  };
  if (!base.nodes_.empty()) copy(0);
  if (used != collapse.size()) {
    throw DomainError("tree", "merge spec names nodes that are not in the base tree");
  }
  std::set<std::string> ids;
  for (const TreeNode& n : out.nodes_) {
    if (!ids.insert(n.id).second) throw DomainError("tree", "merged tree repeats id '" + n.id + "'");
  }
  return out;
}

json DecisionTree::to_json(const AttributeSchema& schema) const {
  json nodes = json::array();
  for (const TreeNode& n : nodes_) {
    if (n.is_leaf) {
      nodes.push_back({{"id", n.id}, {"label", to_string(n.label)}});
      continue;
    }
    const AttributeSpec& spec = schema.attributes()[n.attribute];
    json node = {{"id", n.id}, {"attribute", spec.name}};
    if (spec.kind == AttributeKind::kContinuous) {
      node["threshold"] = n.threshold;
    } else {
      json cats = json::array();
      for (std::size_t c = 0; c < n.category_mask.size(); ++c) {
        if (n.category_mask[c]) cats.push_back(spec.categories[c]);
      }
      node["categories"] = cats;
    }
    node["yes"] = nodes_[static_cast<std::size_t>(n.yes)].id;
    node["no"] = nodes_[static_cast<std::size_t>(n.no)].id;
    nodes.push_back(node);
  }
  return {{"root", nodes_.empty() ? "" : nodes_.front().id}, {"nodes", nodes}};
}

namespace {

bool goes_yes(const TreeNode& n, const AttributeValue& v) {
  if (!n.category_mask.empty()) {
    return v.category >= 0 && static_cast<std::size_t>(v.category) < n.category_mask.size() &&
           n.category_mask[static_cast<std::size_t>(v.category)];
  }
  return v.number > n.threshold;
}

}  // namespace

Classification DecisionTree::classify(const AttributeVector& values) const {
  if (nodes_.empty()) throw DomainError("tree", "empty tree");
  std::size_t i = 0;
  int depth = 0;
  while (!nodes_[i].is_leaf) {
    const TreeNode& n = nodes_[i];
    if (n.attribute >= values.size()) {
      throw DomainError("missing_attribute", "attribute vector too short for node '" + n.id + "'");
    }
    i = static_cast<std::size_t>(goes_yes(n, values[n.attribute]) ? n.yes : n.no);
    ++depth;
  }
  return {nodes_[i].label, nodes_[i].id, depth};
}

Classification DecisionTree::classify_json(const AttributeSchema& schema, const json& doc) const {
  if (nodes_.empty()) throw DomainError("tree", "empty tree");
  AttributeVector values(schema.size());
  std::size_t i = 0;
  int depth = 0;
  while (!nodes_[i].is_leaf) {
    const TreeNode& n = nodes_[i];
    const AttributeSpec& spec = schema.attributes()[n.attribute];
    if (!doc.contains(spec.name)) {
      throw DomainError("missing_attribute", "missing attribute '" + spec.name + "'");
    }
    AttributeValue v;
    if (spec.kind == AttributeKind::kContinuous) {
      v.number = doc.at(spec.name).get<double>();
    } else {
      v.category = schema.category_index(n.attribute, doc.at(spec.name).get<std::string>());
    }
    i = static_cast<std::size_t>(goes_yes(n, v) ? n.yes : n.no);
    ++depth;
  }
  return {nodes_[i].label, nodes_[i].id, depth};
}

std::vector<std::string> DecisionTree::leaf_ids() const {
  std::vector<std::string> ids;
  for (const TreeNode& n : nodes_) {
    if (n.is_leaf) ids.push_back(n.id);
  }
  return ids;
}

bool DecisionTree::has_leaf(const std::string& id) const {
  return std::any_of(nodes_.begin(), nodes_.end(),
                     [&](const TreeNode& n) { return n.is_leaf && n.id == id; });
}

int DecisionTree::leaf_depth(const std::string& id) const {
  std::function<int(std::size_t, int)> find = [&](std::size_t i, int depth) -> int {
    const TreeNode& n = nodes_[i];
    if (n.is_leaf) return n.id == id ? depth : -1;
    const int y = find(static_cast<std::size_t>(n.yes), depth + 1);
    return y >= 0 ? y : find(static_cast<std::size_t>(n.no), depth + 1);
  };
  const int d = nodes_.empty() ? -1 : find(0, 0);
  if (d < 0) throw DomainError("tree", "no leaf '" + id + "'");
  return d;
}

// ---- exact leaf probabilities ----------------------------------------------

namespace {

struct Constraint {
  double lo = -std::numeric_limits<double>::infinity();  // value > lo
  double hi = std::numeric_limits<double>::infinity();   // value <= hi
  std::vector<bool> allowed;                             // categorical
  bool active = false;
};

double normal_cdf(double x, const NormalLaw& law) {
  return 0.5 * std::erfc(-(x - law.mean) / (law.sd * std::numbers::sqrt2));
}

double constraint_probability(const AttributeSpec& a, const Constraint& c, Hypothesis h) {
  if (!c.active) return 1.0;
  if (a.kind == AttributeKind::kContinuous) {
    if (!(c.lo < c.hi)) return 0.0;
    const NormalLaw& law = h == Hypothesis::kH1 ? a.continuous_h1 : a.continuous_h0;
    return normal_cdf(c.hi, law) - normal_cdf(c.lo, law);
  }
  const auto& probs = h == Hypothesis::kH1 ? a.categorical_h1 : a.categorical_h0;
  double p = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (c.allowed[k]) p += probs[k];
  }
  return p;
}

}  // namespace

std::map<std::string, double> leaf_probabilities(const DecisionTree& tree,
                                                 const AttributeSchema& schema, Hypothesis h) {
  std::map<std::string, double> out;
  const auto& nodes = tree.nodes();
  if (nodes.empty()) return out;
  std::vector<Constraint> cons(schema.size());
  std::function<void(std::size_t)> walk = [&](std::size_t i) {
    const TreeNode& n = nodes[i];
    if (n.is_leaf) {
      double p = 1.0;
      for (std::size_t a = 0; a < schema.size(); ++a) {
        p *= constraint_probability(schema.attributes()[a], cons[a], h);
      }
      out[n.id] += p;
      return;
    }
    const AttributeSpec& spec = schema.attributes()[n.attribute];
    const Constraint saved = cons[n.attribute];
    Constraint& c = cons[n.attribute];
    if (!c.active && spec.kind == AttributeKind::kCategorical) {
      c.allowed.assign(spec.categories.size(), true);
    }
    c.active = true;
    const Constraint entry = c;
    // yes branch
    if (spec.kind == AttributeKind::kContinuous) {
      c.lo = std::max(c.lo, n.threshold);
    } else {
      for (std::size_t k = 0; k < c.allowed.size(); ++k) c.allowed[k] = c.allowed[k] && n.category_mask[k];
    }
    walk(static_cast<std::size_t>(n.yes));
    cons[n.attribute] = entry;
    if (spec.kind == AttributeKind::kContinuous) {
      cons[n.attribute].hi = std::min(entry.hi, n.threshold);
    } else {
      for (std::size_t k = 0; k < entry.allowed.size(); ++k) {
        cons[n.attribute].allowed[k] = entry.allowed[k] && !n.category_mask[k];
      }
    }
    walk(static_cast<std::size_t>(n.no));
    cons[n.attribute] = saved;
  };
  walk(0);
  return out;
}

std::map<std::string, LeafStats> leaf_table(const DecisionTree& tree,
                                            const AttributeSchema& schema, const Prior& prior) {
  const auto q0 = leaf_probabilities(tree, schema, Hypothesis::kH0);
  const auto q1 = leaf_probabilities(tree, schema, Hypothesis::kH1);
  std::map<std::string, LeafStats> out;
  for (const auto& [leaf, p0] : q0) {
    LeafStats s;
    s.p_h0 = p0;
    s.p_h1 = q1.at(leaf);
    s.posterior = (p0 == 0.0 && s.p_h1 == 0.0)
                      ? std::numeric_limits<double>::quiet_NaN()
                      : posterior_from_likelihoods(prior, s.p_h0, s.p_h1);
    out[leaf] = s;
  }
  return out;
}

double leaf_posterior(const std::string& leaf_id, const AttributeSchema& schema,
                      const DecisionTree& tree, const Prior& prior) {
  if (!tree.has_leaf(leaf_id)) throw DomainError("tree", "no leaf '" + leaf_id + "'");
  const double p0 = leaf_probabilities(tree, schema, Hypothesis::kH0).at(leaf_id);
  const double p1 = leaf_probabilities(tree, schema, Hypothesis::kH1).at(leaf_id);
  if (p0 == 0.0 && p1 == 0.0) {
    throw DegenerateError("degenerate_leaf", "leaf '" + leaf_id + "' is never visited");
  }
  return posterior_from_likelihoods(prior, p0, p1);
}

LeafStats leaf_posterior_monte_carlo(const std::string& leaf_id, const AttributeSchema& schema,
                                     const DecisionTree& tree, const Prior& prior,
                                     std::size_t samples, Engine& rng) {
  if (!tree.has_leaf(leaf_id)) throw DomainError("tree", "no leaf '" + leaf_id + "'");
  std::size_t hits[2] = {0, 0};
  for (Hypothesis h : {Hypothesis::kH0, Hypothesis::kH1}) {
    for (std::size_t s = 0; s < samples; ++s) {
      if (tree.classify(sample_attributes(schema, h, rng)).leaf_id == leaf_id) {
        ++hits[static_cast<int>(h)];
      }
    }
  }
  LeafStats out;
  out.p_h0 = static_cast<double>(hits[0]) / static_cast<double>(samples);
  out.p_h1 = static_cast<double>(hits[1]) / static_cast<double>(samples);
  if (hits[0] == 0 && hits[1] == 0) {
    throw DegenerateError("degenerate_leaf", "leaf '" + leaf_id + "' was never visited");
  }
  out.posterior = posterior_from_likelihoods(prior, out.p_h0, out.p_h1);
  return out;
}

Rates tree_rates(const DecisionTree& tree, const AttributeSchema& schema) {
  const auto q0 = leaf_probabilities(tree, schema, Hypothesis::kH0);
  const auto q1 = leaf_probabilities(tree, schema, Hypothesis::kH1);
  Rates r;
  for (const TreeNode& n : tree.nodes()) {
    if (n.is_leaf && n.label == Hypothesis::kH1) {
      r.tpr += q1.at(n.id);
      r.fpr += q0.at(n.id);
    }
  }
  return r;
}

Rates tree_rates_monte_carlo(const DecisionTree& tree, const AttributeSchema& schema,
                             std::size_t samples, Engine& rng) {
  std::size_t positive[2] = {0, 0};
  for (Hypothesis h : {Hypothesis::kH0, Hypothesis::kH1}) {
    for (std::size_t s = 0; s < samples; ++s) {
      if (tree.classify(sample_attributes(schema, h, rng)).label == Hypothesis::kH1) {
        ++positive[static_cast<int>(h)];
      }
    }
  }
  return {static_cast<double>(positive[1]) / static_cast<double>(samples),
          static_cast<double>(positive[0]) / static_cast<double>(samples)};
}

// ---- tasks and schedules ---------------------------------------------------

MicroworldTask generate_task(int task_id, const TaskRequest& request, const Microworld& world,
                             Engine& rng, std::size_t budget) {
  if (request.auto_leaf && !world.auto_tree.has_leaf(*request.auto_leaf)) {
    throw DomainError("unreachable_leaf", "automation tree has no leaf '" + *request.auto_leaf + "'");
  }
  std::bernoulli_distribution hostile(world.prior.pi1());
  for (std::size_t attempt = 0; attempt < budget; ++attempt) {
    const Hypothesis h = hostile(rng) ? Hypothesis::kH1 : Hypothesis::kH0;
    AttributeVector values = sample_attributes(world.schema, h, rng);
    const Classification a = world.auto_tree.classify(values);
    if (request.auto_leaf && a.leaf_id != *request.auto_leaf) continue;
    const Classification hu = world.human_tree.classify(values);
    if (!request.human_depths.empty() && !request.human_depths.count(hu.depth)) continue;
    MicroworldTask task;
    task.task_id = task_id;
    task.attributes = std::move(values);
    task.true_state = h;
    task.human_tree_depth = hu.depth;
    task.auto_leaf = a.leaf_id;
    const auto it = world.auto_leaves.find(a.leaf_id);
    task.auto_posterior = it != world.auto_leaves.end() ? it->second.posterior : world.prior.pi1();
    return task;
  }
  throw DomainError("unreachable_leaf",
                    "no task for leaf '" + request.auto_leaf.value_or("*") + "' within " +
                        std::to_string(budget) + " draws");
}

std::string_view round_kind_name(RoundKind k) {
  switch (k) {
    case RoundKind::kPractice: return "practice";
    case RoundKind::kCalibration: return "calibration";
    case RoundKind::kOA: return "oa";
    case RoundKind::kBA: return "ba";
  }
  return "?";
}

RoundKind round_kind_from_name(std::string_view s) {
  if (s == "practice") return RoundKind::kPractice;
  if (s == "calibration") return RoundKind::kCalibration;
  if (s == "oa") return RoundKind::kOA;
  if (s == "ba") return RoundKind::kBA;
  throw DomainError("schedule", "unknown round kind '" + std::string(s) + "'");
}

namespace {

json task_to_json(const MicroworldTask& t, const AttributeSchema& schema) {
  return {{"task_id", t.task_id},
          {"attributes", attributes_to_json(schema, t.attributes)},
          {"true_state", to_string(t.true_state)},
          {"human_tree_depth", t.human_tree_depth},
          {"auto_leaf", t.auto_leaf},
          {"auto_posterior", t.auto_posterior}};
}

MicroworldTask task_from_json(const json& j, const AttributeSchema& schema) {
  MicroworldTask t;
  t.task_id = j.at("task_id").get<int>();
  if (schema.size() > 0 && j.contains("attributes")) {
    t.attributes = attributes_from_json(schema, j.at("attributes"));
  }
  t.true_state = hypothesis_from_string(j.at("true_state").get<std::string>());
  t.human_tree_depth = j.value("human_tree_depth", 0);
  t.auto_leaf = j.value("auto_leaf", std::string{});
  t.auto_posterior = j.value("auto_posterior", 0.0);
  return t;
}

json costs_to_json(const DecisionCosts& c) {
  return {{"c_tp", c.tp()}, {"c_fp", c.fp()}, {"c_tn", c.tn()}, {"c_fn", c.fn()},
          {"c_r", c.referral()}};
}

DecisionCosts costs_from_json(const json& j) {
  return DecisionCosts(j.value("c_tp", 0.0), j.at("c_fp").get<double>(), j.value("c_tn", 0.0),
                       j.at("c_fn").get<double>(), j.value("c_r", 0.0));
}

}  // namespace

json schedule_to_json(const Schedule& s, const AttributeSchema& schema) {
  json rounds = json::array();
  for (const Round& r : s.rounds) {
    json tasks = json::array();
    for (const auto& t : r.tasks) tasks.push_back(task_to_json(t, schema));
    json automated = json::array();
    for (const auto& a : r.automated) {
      json j = task_to_json(a.task, schema);
      j["decision"] = to_string(a.decision);
      automated.push_back(j);
    }
    rounds.push_back({{"round_id", r.round_id},
                      {"kind", round_kind_name(r.kind)},
                      {"batch_id", r.batch_id},
                      {"duration_s", r.duration_s},
                      {"load", r.load()},
                      {"tasks", tasks},
                      {"automated", automated}});
  }
  return {{"mode", s.mode},       {"seed", s.seed},         {"costs", costs_to_json(s.costs)},
          {"prior", {{"pi1", s.prior.pi1()}}}, {"load_set", s.load_set}, {"w_ba", s.w_ba},
          {"rounds", rounds}};
}

Schedule schedule_from_json(const json& doc, const AttributeSchema& schema) {
  try {
    Schedule s;
    s.mode = doc.at("mode").get<std::string>();
    s.seed = doc.value("seed", std::uint64_t{0});
    s.costs = costs_from_json(doc.at("costs"));
    s.prior = Prior(doc.at("prior").at("pi1").get<double>());
    s.load_set = doc.value("load_set", std::vector<int>{});
    s.w_ba = doc.value("w_ba", -1);
    for (const json& r : doc.at("rounds")) {
      Round round;
      round.round_id = r.at("round_id").get<int>();
      round.kind = round_kind_from_name(r.at("kind").get<std::string>());
      round.batch_id = r.value("batch_id", -1);
      round.duration_s = r.value("duration_s", 120.0);
      for (const json& t : r.at("tasks")) round.tasks.push_back(task_from_json(t, schema));
      if (r.contains("automated")) {
        for (const json& a : r.at("automated")) {
          round.automated.push_back(
              {task_from_json(a, schema), hypothesis_from_string(a.at("decision").get<std::string>())});
        }
      }
      s.rounds.push_back(std::move(round));
    }
    return s;
  } catch (const json::exception& e) {
    throw DomainError("schedule", std::string("malformed schedule: ") + e.what());
  }
}

ExperimentConfig experiment_config_from_json(const json& doc) {
  try {
    ExperimentConfig c;
    c.source = doc;
    c.name = doc.value("name", c.name);
    c.mode = doc.value("mode", c.mode);
    if (c.mode != "calibration" && c.mode != "experiment2") {
      throw DomainError("config", "mode must be calibration or experiment2");
    }
    c.seed = doc.value("seed", c.seed);
    if (doc.contains("costs")) c.costs = costs_from_json(doc.at("costs"));
    c.load_set = doc.value("load_set", c.load_set);
    c.estimation_loads = doc.value("estimation_loads", c.estimation_loads);
    c.rounds_per_load = doc.value("rounds_per_load", c.rounds_per_load);
    c.n_batches = doc.value("n_batches", c.n_batches);
    c.tasks_per_leaf = doc.value("tasks_per_leaf", c.tasks_per_leaf);
    c.practice_rounds = doc.value("practice_rounds", c.practice_rounds);
    c.practice_load = doc.value("practice_load", c.practice_load);
    c.round_duration_s = doc.value("round_duration_s", c.round_duration_s);
    if (doc.contains("task_depths")) {
      const auto depths = doc.at("task_depths").get<std::vector<int>>();
      c.task_depths = std::set<int>(depths.begin(), depths.end());
    }
    if (doc.contains("automation_rates")) {
      c.automation_rates = AutomationPerfModel{doc.at("automation_rates").at("tpr").get<double>(),
                                               doc.at("automation_rates").at("fpr").get<double>()};
    }

    std::vector<AttributeSpec> specs;
    for (const json& a : doc.at("schema").at("attributes")) {
      AttributeSpec s;
      s.name = a.at("name").get<std::string>();
      const auto kind = a.at("kind").get<std::string>();
      if (kind == "continuous") {
        s.kind = AttributeKind::kContinuous;
        s.continuous_h0 = {a.at("h0").at("mean").get<double>(), a.at("h0").at("sd").get<double>()};
        s.continuous_h1 = {a.at("h1").at("mean").get<double>(), a.at("h1").at("sd").get<double>()};
      } else if (kind == "categorical") {
        s.kind = AttributeKind::kCategorical;
        s.categories = a.at("categories").get<std::vector<std::string>>();
        s.categorical_h0 = a.at("h0").get<std::vector<double>>();
        s.categorical_h1 = a.at("h1").get<std::vector<double>>();
      } else {
        throw DomainError("config", "attribute kind must be continuous or categorical");
      }
      specs.push_back(std::move(s));
    }
    c.world.schema = AttributeSchema(std::move(specs));
    c.world.prior = Prior(doc.at("prior").at("pi1").get<double>());
    c.world.human_tree = DecisionTree::from_json(doc.at("human_tree"), c.world.schema);
    const json& auto_doc = doc.at("auto_tree");
    c.world.auto_tree = auto_doc.contains("merge")
                            ? DecisionTree::merged(c.world.human_tree, auto_doc)
                            : DecisionTree::from_json(auto_doc, c.world.schema);
    c.world.auto_leaves = leaf_table(c.world.auto_tree, c.world.schema, c.world.prior);
    return c;
  } catch (const json::exception& e) {
    throw DomainError("config", std::string("malformed experiment config: ") + e.what());
  }
}

Schedule build_calibration(const ExperimentConfig& config, Engine& rng) {
  Schedule s;
  s.mode = "calibration";
  s.seed = config.seed;
  s.costs = config.costs;
  s.prior = config.world.prior;
  s.load_set = config.estimation_loads;
  std::vector<int> loads;
  for (int w : config.estimation_loads) {
    if (w < 1) throw DomainError("calibration loads must be positive");
    for (int r = 0; r < config.rounds_per_load; ++r) loads.push_back(w);
  }
  std::shuffle(loads.begin(), loads.end(), rng);
  const TaskRequest request{std::nullopt, config.task_depths};
  int next_task = 1;
  for (std::size_t r = 0; r < loads.size(); ++r) {
    Round round;
    round.round_id = static_cast<int>(r) + 1;
    round.kind = RoundKind::kCalibration;
    round.duration_s = config.round_duration_s;
    for (int k = 0; k < loads[r]; ++k) {
      round.tasks.push_back(generate_task(next_task++, request, config.world, rng));
    }
    s.rounds.push_back(std::move(round));
  }
  return s;
}

Experiment2Build build_experiment2(const ExperimentConfig& config, const HumanPerfModel& perf,
                                   Engine& rng) {
  const Microworld& world = config.world;
  const std::vector<std::string> leaves = world.auto_tree.leaf_ids();
  for (const auto& leaf : leaves) {
    const LeafStats& st = world.auto_leaves.at(leaf);
    if (std::isnan(st.posterior)) {
      throw DegenerateError("degenerate_leaf", "automation leaf '" + leaf + "' is never visited");
    }
  }
  const int batch_size = config.tasks_per_leaf * static_cast<int>(leaves.size());
  const LoadSet load_set(config.load_set, batch_size);
  const AutomationPerfModel automation = config.automation_rates.value_or([&] {
    const Rates r = tree_rates(world.auto_tree, world.schema);
    return AutomationPerfModel{r.tpr, r.fpr};
  }());

  Experiment2Build out;
  Schedule& s = out.schedule;
  s.mode = "experiment2";
  s.seed = config.seed;
  s.costs = config.costs;
  s.prior = world.prior;
  s.load_set = config.load_set;
  s.w_ba = ba_workload(world.prior, automation, perf, config.costs, load_set);

  std::vector<Round> rounds;
  int next_task = 1;
  for (int b = 0; b < config.n_batches; ++b) {
    std::vector<MicroworldTask> tasks;
    for (const auto& leaf : leaves) {
      for (int k = 0; k < config.tasks_per_leaf; ++k) {
        tasks.push_back(generate_task(0, TaskRequest{leaf, config.task_depths}, world, rng));
      }
    }
    std::shuffle(tasks.begin(), tasks.end(), rng);
    std::vector<Task> batch_tasks;
    for (auto& t : tasks) {
      t.task_id = next_task++;
      batch_tasks.push_back({t.task_id, t.auto_posterior, t.true_state});
    }
    Batch batch(std::move(batch_tasks));

    const ReferralPlan oa = optimal_referral(batch, load_set, perf, config.costs).plan;
    const ReferralPlan ba = ba_select(batch, s.w_ba, config.costs, rng);
    for (const auto& [kind, plan] : {std::pair{RoundKind::kBA, &ba}, std::pair{RoundKind::kOA, &oa}}) {
      Round round;
      round.kind = kind;
      round.batch_id = b;
      round.duration_s = config.round_duration_s;
      for (const auto& t : tasks) {
        if (plan->is_referred(t.task_id)) {
          round.tasks.push_back(t);
        } else {
          const auto it = std::lower_bound(plan->terminal.begin(), plan->terminal.end(), t.task_id,
                                           [](const auto& e, int id) { return e.first < id; });
          round.automated.push_back({t, it->second});
        }
      }
      rounds.push_back(std::move(round));
    }
    out.batches.push_back(std::move(batch));
  }
  std::shuffle(rounds.begin(), rounds.end(), rng);
  for (std::size_t r = 0; r < rounds.size(); ++r) rounds[r].round_id = static_cast<int>(r) + 1;
  s.rounds = std::move(rounds);
  return out;
}

std::vector<Round> build_practice(const ExperimentConfig& config, Engine& rng) {
  std::vector<Round> rounds;
  const TaskRequest request{std::nullopt, config.task_depths};
  int next_task = 1000001;
  for (int r = 0; r < config.practice_rounds; ++r) {
    Round round;
    round.round_id = 1001 + r;
    round.kind = RoundKind::kPractice;
    round.duration_s = config.round_duration_s;
    for (int k = 0; k < config.practice_load; ++k) {
      round.tasks.push_back(generate_task(next_task++, request, config.world, rng));
    }
    rounds.push_back(std::move(round));
  }
  return rounds;
}

// ---- session logs ----------------------------------------------------------

json event_to_json(const DecisionEvent& e) {
  json j = {{"timestamp_ms", e.timestamp_ms},
            {"session_id", e.session_id},
            {"participant", e.participant},
            {"round_id", e.round_id},
            {"task_id", e.task_id},
            {"decision", e.decision ? std::string(to_string(*e.decision)) : "unclassified"},
            {"source", e.source == EventSource::kHuman ? "human" : "auto-resolve"},
            {"practice", e.practice}};
  if (e.client_ts) j["client_ts"] = *e.client_ts;
  return j;
}

DecisionEvent event_from_json(const json& j) {
  try {
    DecisionEvent e;
    e.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
    e.session_id = j.value("session_id", std::string{});
    e.participant = j.value("participant", std::string{});
    e.round_id = j.at("round_id").get<int>();
    e.task_id = j.at("task_id").get<int>();
    const auto d = j.at("decision").get<std::string>();
    if (d != "unclassified") e.decision = hypothesis_from_string(d);
    const auto src = j.at("source").get<std::string>();
    if (src == "human") e.source = EventSource::kHuman;
    else if (src == "auto-resolve") e.source = EventSource::kAutoResolve;
    else throw DomainError("log", "unknown event source '" + src + "'");
    e.practice = j.value("practice", false);
    if (j.contains("client_ts") && !j.at("client_ts").is_null()) {
      e.client_ts = j.at("client_ts").get<std::int64_t>();
    }
    return e;
  } catch (const json::exception& ex) {
    throw DomainError("log", std::string("malformed event: ") + ex.what());
  }
}

std::string session_log_to_jsonl(const SessionLog& log) {
  std::string out;
  for (const DecisionEvent& e : log.events) {
    out += event_to_json(e).dump();
    out += '\n';
  }
  return out;
}

SessionLog session_log_from_jsonl(std::string_view text) {
  SessionLog log;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DomainError("log", "line " + std::to_string(line_no) + ": " + e.what());
    }
    DecisionEvent e = event_from_json(j);
    if (log.events.empty()) {
      log.session_id = e.session_id;
      log.participant = e.participant;
    }
    log.events.push_back(std::move(e));
  }
  return log;
}

SessionLog read_session_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return session_log_from_jsonl(ss.str());
  } catch (const Error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::vector<DecisionEvent> resolve_unclassified(const Round& round,
                                                const std::vector<DecisionEvent>& events,
                                                const std::string& session_id,
                                                const std::string& participant,
                                                std::int64_t resolve_at_ms, Engine& rng) {
  std::set<int> labelled;
  for (const DecisionEvent& e : events) {
    if (e.round_id == round.round_id) labelled.insert(e.task_id);
  }
  std::bernoulli_distribution coin(0.5);
  std::vector<DecisionEvent> out;
  for (const MicroworldTask& t : round.tasks) {
    if (labelled.count(t.task_id)) continue;
    DecisionEvent e;
    e.timestamp_ms = resolve_at_ms;
    e.session_id = session_id;
    e.participant = participant;
    e.round_id = round.round_id;
    e.task_id = t.task_id;
    e.decision = coin(rng) ? Hypothesis::kH1 : Hypothesis::kH0;
    e.source = EventSource::kAutoResolve;
    e.practice = round.practice();
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace refereval
