#pragma once

// Weighted Lukasiewicz rule templates over the agent's first-order
// predicates, one template per token-request action class.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nsm {

enum class Predicate { TaskAssigned, ParentTasksCompleted, SiblingTasks, Slack };

inline constexpr std::size_t kNumPredicates = 4;
inline constexpr std::size_t kNumLiterals = 2 * kNumPredicates;

// Literal index = 2 * predicate + negated, which is also the row order of the
// weights table.
constexpr std::size_t literal_index(Predicate p, bool negated) {
  return 2 * static_cast<std::size_t>(p) + (negated ? 1 : 0);
}
std::string literal_name(std::size_t literal);
std::optional<std::size_t> literal_from_name(std::string_view name);

class PredicateValuation {
 public:
  PredicateValuation() = default;
  PredicateValuation(double task_assigned, double parents_completed, double siblings,
                     double slack);

  // Non-Slack predicates must be boolean.
  void set(Predicate p, double value);
  bool has(Predicate p) const { return values_[static_cast<std::size_t>(p)].has_value(); }
  double get(Predicate p) const;
  double literal(std::size_t literal) const;  // throws on a missing predicate

 private:
  std::array<std::optional<double>, kNumPredicates> values_{};
};

enum class ActionClass { Zero, Full, Partial };
inline constexpr std::size_t kNumActionClasses = 3;

std::string_view to_string(ActionClass c);
ActionClass action_class_from_string(std::string_view name);

struct RuleTemplate {
  ActionClass action = ActionClass::Zero;
  std::array<double, kNumLiterals> weights{};
  double bias = 1.0;
};

struct RuleSet {
  std::array<RuleTemplate, kNumActionClasses> templates{};
  std::vector<int> bins{10, 20, 30, 40, 50, 60, 70, 80, 90};

  RuleTemplate& at(ActionClass c) { return templates[static_cast<std::size_t>(c)]; }
  const RuleTemplate& at(ActionClass c) const { return templates[static_cast<std::size_t>(c)]; }
  void validate() const;

  // Weights around `level` with uniform jitter of +-level/10 from `seed`.
  static RuleSet initial(std::uint64_t seed, double level = 0.125);
  // The reference weights table for the three action classes.
  static RuleSet reference();
};

struct Action {
  ActionClass action = ActionClass::Zero;
  int tokens = 0;

  friend bool operator==(const Action&, const Action&) = default;
};

// Index 0 is NeedTokens_0, 1 is NeedTokens_100, then one entry per x-bin.
std::vector<Action> action_space(const RuleSet& rs);
std::string action_label(const Action& a);

using ActionMask = std::vector<char>;

double eval_rule(const RuleTemplate& t, const PredicateValuation& v);
// d(output)/d(weight_i); zero where the clamp is active. At output 1 with
// every false literal unweighted, the left derivative.
std::array<double, kNumLiterals> rule_gradient(const RuleTemplate& t,
                                               const PredicateValuation& v);

struct TaskTiming {
  double work = 0.0;
  double rate = 0.0;         // work units per tick at 100 tokens
  double subdeadline = 0.0;  // ideal duration
};

struct SlackContext {
  TaskTiming self;
  std::vector<TaskTiming> siblings;
};

// How well a token share for this task makes completion times line up with
// sub-deadline ratios; 1 at an exact match. Siblings split the remainder.
double slack_value(double bin_percent, const SlackContext& ctx);

struct GuardObservation {
  bool task_assigned = false;
  bool parents_completed = false;
  bool task_active = false;
  bool sibling_active = false;
};

ActionMask guard_rail_mask(const RuleSet& rs, const GuardObservation& obs);

// Per-action valuation: the observation, with Slack replaced by the slack of
// the action's own share for x-bins when a context is available.
PredicateValuation valuation_for(const PredicateValuation& v, const Action& a,
                                 const SlackContext* ctx);

std::vector<double> action_scores(const RuleSet& rs, const PredicateValuation& v,
                                  const ActionMask& mask, const SlackContext* ctx);
std::vector<double> action_distribution(const RuleSet& rs, const PredicateValuation& v,
                                        const ActionMask& mask, const SlackContext* ctx);

struct SymbolicRule {
  ActionClass action = ActionClass::Zero;
  std::vector<std::size_t> literals;

  std::string to_string() const;
};

std::vector<SymbolicRule> extract_rules(const RuleSet& rs, double threshold);

}  // namespace nsm
