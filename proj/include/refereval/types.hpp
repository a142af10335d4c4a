#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace refereval {

enum class Hypothesis : std::uint8_t {
  kH0 = 0,  // non-hostile
  kH1 = 1,  // hostile
};

std::string_view to_string(Hypothesis h);
Hypothesis hypothesis_from_string(std::string_view s);

class Prior {
 public:
  explicit Prior(double pi1);

  double pi1() const { return pi1_; }
  double pi0() const { return 1.0 - pi1_; }

 private:
  double pi1_;
};

// Costs of terminal decisions plus the per-task referral cost. Validated at
// construction: misclassification must cost strictly more than the matching
// correct decision, otherwise the Bayes thresholds are undefined.
class DecisionCosts {
 public:
  DecisionCosts(double c_tp, double c_fp, double c_tn, double c_fn, double c_r);

  double tp() const { return c_tp_; }
  double fp() const { return c_fp_; }
  double tn() const { return c_tn_; }
  double fn() const { return c_fn_; }
  double referral() const { return c_r_; }

  // C(decision, truth).
  double of(Hypothesis decision, Hypothesis truth) const;

  DecisionCosts scaled(double lambda) const;

  // Posterior at which both automation decisions cost the same,
  // (c_fp - c_tn) / (c_fp - c_tn + c_fn - c_tp).
  double indifference_posterior() const;

 private:
  double c_tp_, c_fp_, c_tn_, c_fn_, c_r_;
};

struct Rates {
  double tpr = 0.0;
  double fpr = 0.0;
};

struct Task {
  int task_id = 0;
  double posterior = 0.0;
  std::optional<Hypothesis> true_state;
};

// A batch of tasks. Task ids are unique; posteriors lie in [0, 1].
class Batch {
 public:
  Batch() = default;
  explicit Batch(std::vector<Task> tasks);

  // Convenience: ids 0..K-1 in order.
  static Batch from_posteriors(std::span<const double> posteriors);

  std::size_t size() const { return tasks_.size(); }
  const std::vector<Task>& tasks() const { return tasks_; }
  const Task& operator[](std::size_t i) const { return tasks_[i]; }

 private:
  std::vector<Task> tasks_;
};

// Feasible task loads, sorted and unique, each within [0, K].
class LoadSet {
 public:
  LoadSet(std::vector<int> loads, int batch_size);

  static LoadSet full(int batch_size);
  static LoadSet range(int lo, int hi, int batch_size);

  const std::vector<int>& loads() const { return loads_; }
  int batch_size() const { return batch_size_; }
  bool contains(int w) const;
  int min() const { return loads_.front(); }
  int max() const { return loads_.back(); }

 private:
  std::vector<int> loads_;
  int batch_size_;
};

// Referred task ids plus terminal decisions for every other task. Both lists
// are kept sorted by task id.
struct ReferralPlan {
  std::vector<int> referred;
  std::vector<std::pair<int, Hypothesis>> terminal;

  int load() const { return static_cast<int>(referred.size()); }
  bool is_referred(int task_id) const;
};

}  // namespace refereval
