#include "nsm/rules.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nsm/error.hpp"
#include "nsm/random.hpp"

namespace nsm {

namespace {

constexpr std::array<std::string_view, kNumPredicates> kPredicateNames = {
    "TaskAssigned", "ParentTasksCompleted", "SiblingTasks", "Slack"};

constexpr std::string_view kNot = "\xC2\xAC";  // U+00AC

}  // namespace

std::string literal_name(std::size_t literal) {
  std::string name(kPredicateNames.at(literal / 2));
  return literal % 2 ? std::string(kNot) + name : name;
}

std::optional<std::size_t> literal_from_name(std::string_view name) {
  bool negated = false;
  if (name.starts_with(kNot)) {
    negated = true;
    name.remove_prefix(kNot.size());
  } else if (name.starts_with("~") || name.starts_with("!")) {
    negated = true;
    name.remove_prefix(1);
  }
  for (std::size_t p = 0; p < kNumPredicates; ++p)
    if (kPredicateNames[p] == name) return 2 * p + (negated ? 1 : 0);
  return std::nullopt;
}

PredicateValuation::PredicateValuation(double task_assigned, double parents_completed,
                                       double siblings, double slack) {
  set(Predicate::TaskAssigned, task_assigned);
  set(Predicate::ParentTasksCompleted, parents_completed);
  set(Predicate::SiblingTasks, siblings);
  set(Predicate::Slack, slack);
}

void PredicateValuation::set(Predicate p, double value) {
  if (!(value >= 0.0 && value <= 1.0))
    throw ValidationError("predicate " + std::string(kPredicateNames[static_cast<std::size_t>(p)]) +
                          " out of [0,1]");
  if (p != Predicate::Slack && value != 0.0 && value != 1.0)
    throw ValidationError("predicate " + std::string(kPredicateNames[static_cast<std::size_t>(p)]) +
                          " must be boolean");
  values_[static_cast<std::size_t>(p)] = value;
}

double PredicateValuation::get(Predicate p) const {
  const auto& v = values_[static_cast<std::size_t>(p)];
  if (!v)
    throw ValidationError("missing predicate " +
                          std::string(kPredicateNames[static_cast<std::size_t>(p)]));
  return *v;
}

double PredicateValuation::literal(std::size_t literal) const {
  const double v = get(static_cast<Predicate>(literal / 2));
  return literal % 2 ? 1.0 - v : v;
}

std::string_view to_string(ActionClass c) {
  switch (c) {
    case ActionClass::Zero: return "NeedTokens_0";
    case ActionClass::Full: return "NeedTokens_100";
    case ActionClass::Partial: return "NeedTokens_x";
  }
  return "?";
}

ActionClass action_class_from_string(std::string_view name) {
  if (name == "NeedTokens_0") return ActionClass::Zero;
  if (name == "NeedTokens_100") return ActionClass::Full;
  if (name == "NeedTokens_x") return ActionClass::Partial;
  throw ValidationError("unknown action class '" + std::string(name) + "'");
}

void RuleSet::validate() const {
  for (std::size_t c = 0; c < kNumActionClasses; ++c) {
    if (templates[c].action != static_cast<ActionClass>(c))
      throw ValidationError("rule set templates out of order");
    for (double w : templates[c].weights)
      if (!(w >= 0.0) || !std::isfinite(w))
        throw ValidationError("rule weights must be finite and nonnegative");
  }
  for (std::size_t i = 0; i < bins.size(); ++i) {
    if (bins[i] <= 0 || bins[i] >= 100) throw ValidationError("token bins must lie in (0,100)");
    if (i > 0 && bins[i] <= bins[i - 1])
      throw ValidationError("token bins must be strictly increasing");
  }
}

RuleSet RuleSet::initial(std::uint64_t seed, double level) {
  RuleSet rs;
  Rng rng(seed);
  for (std::size_t c = 0; c < kNumActionClasses; ++c) {
    rs.templates[c].action = static_cast<ActionClass>(c);
    for (auto& w : rs.templates[c].weights) w = level + rng.uniform(-level / 10, level / 10);
  }
  return rs;
}

RuleSet RuleSet::reference() {
  RuleSet rs;
  // Rows: TaskAssigned, not, ParentTasksCompleted, not, SiblingTasks, not, Slack, not.
  rs.templates[0] = {ActionClass::Zero,
                     {4.30e-03, 1.10e-03, 6.80e-04, 9.90e-01, 4.30e-03, 1.10e-03, 6.80e-04, 6.80e-04}};
  rs.templates[1] = {ActionClass::Full,
                     {3.30e-01, 3.30e-03, 3.30e-01, 3.30e-03, 3.30e-03, 3.30e-01, 3.30e-03, 3.30e-03}};
  rs.templates[2] = {ActionClass::Partial,
                     {2.40e-01, 9.70e-03, 2.40e-01, 9.70e-03, 2.40e-01, 9.70e-03, 2.40e-01, 9.70e-03}};
  return rs;
}

std::vector<Action> action_space(const RuleSet& rs) {
  std::vector<Action> out{{ActionClass::Zero, 0}, {ActionClass::Full, 100}};
  for (int b : rs.bins) out.push_back({ActionClass::Partial, b});
  return out;
}

std::string action_label(const Action& a) {
  if (a.action == ActionClass::Partial) return "NeedTokens_x(" + std::to_string(a.tokens) + ")";
  return std::string(to_string(a.action));
}

double eval_rule(const RuleTemplate& t, const PredicateValuation& v) {
  double penalty = 0.0;
  for (std::size_t i = 0; i < kNumLiterals; ++i) penalty += t.weights[i] * (1.0 - v.literal(i));
  return std::clamp(t.bias - penalty, 0.0, 1.0);
}

std::array<double, kNumLiterals> rule_gradient(const RuleTemplate& t,
                                               const PredicateValuation& v) {
  std::array<double, kNumLiterals> g{};
  double raw = t.bias;
  for (std::size_t i = 0; i < kNumLiterals; ++i) raw -= t.weights[i] * (1.0 - v.literal(i));
  // raw == 1 is the kink reached when every false literal has weight 0; take
  // the left derivative there so those weights can grow again.
  if (!(raw > 0.0 && raw <= 1.0)) return g;
  for (std::size_t i = 0; i < kNumLiterals; ++i) g[i] = -(1.0 - v.literal(i));
  return g;
}

double slack_value(double bin_percent, const SlackContext& ctx) {
  if (ctx.siblings.empty()) return 0.0;
  auto check = [](const TaskTiming& t) {
    if (!(t.subdeadline > 0.0)) throw ValidationError("slack: sub-deadline must be positive");
    if (!(t.work > 0.0) || !(t.rate > 0.0)) throw ValidationError("slack: work and rate must be positive");
  };
  check(ctx.self);
  for (const auto& s : ctx.siblings) check(s);

  constexpr double inf = std::numeric_limits<double>::infinity();
  const double own = std::clamp(bin_percent, 0.0, 100.0) / 100.0;
  const double rest = (1.0 - own) / static_cast<double>(ctx.siblings.size());
  const double t_self = own > 0.0 ? ctx.self.work / (ctx.self.rate * own) : inf;
  double deviation = 0.0;
  double normalizer = 0.0;
  for (const auto& s : ctx.siblings) {
    const double t_sib = rest > 0.0 ? s.work / (s.rate * rest) : inf;
    const double target = ctx.self.subdeadline / s.subdeadline;
    double ratio;
    if (std::isinf(t_self)) ratio = inf;
    else if (std::isinf(t_sib)) ratio = 0.0;
    else ratio = t_self / t_sib;
    deviation += std::abs(ratio - target);
    normalizer += target;
  }
  return std::max(0.0, 1.0 - deviation / normalizer);
}

ActionMask guard_rail_mask(const RuleSet& rs, const GuardObservation& obs) {
  const std::size_t n = 2 + rs.bins.size();
  ActionMask mask(n, 0);
  if (!obs.task_assigned || !obs.parents_completed || !obs.task_active) {
    mask[0] = 1;
    return mask;
  }
  std::fill(mask.begin() + 2, mask.end(), 1);
  if (!obs.sibling_active) mask[1] = 1;
  return mask;
}

PredicateValuation valuation_for(const PredicateValuation& v, const Action& a,
                                 const SlackContext* ctx) {
  if (a.action != ActionClass::Partial || ctx == nullptr || ctx->siblings.empty()) return v;
  PredicateValuation out = v;
  out.set(Predicate::Slack, slack_value(a.tokens, *ctx));
  return out;
}

std::vector<double> action_scores(const RuleSet& rs, const PredicateValuation& v,
                                  const ActionMask& mask, const SlackContext* ctx) {
  const auto actions = action_space(rs);
  if (mask.size() != actions.size()) throw ValidationError("action mask size mismatch");
  std::vector<double> scores(actions.size(), 0.0);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (!mask[i]) continue;
    scores[i] = eval_rule(rs.at(actions[i].action), valuation_for(v, actions[i], ctx));
  }
  return scores;
}

std::vector<double> action_distribution(const RuleSet& rs, const PredicateValuation& v,
                                        const ActionMask& mask, const SlackContext* ctx) {
  if (std::none_of(mask.begin(), mask.end(), [](char m) { return m != 0; }))
    throw ValidationError("empty action mask");
  auto scores = action_scores(rs, v, mask, ctx);
  double total = 0.0;
  for (double s : scores) total += s;
  if (total <= 0.0) {
    const double admissible = static_cast<double>(std::count(mask.begin(), mask.end(), 1));
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = mask[i] ? 1.0 / admissible : 0.0;
    return scores;
  }
  for (auto& s : scores) s /= total;
  return scores;
}

std::string SymbolicRule::to_string() const {
  std::string out(nsm::to_string(action));
  out += " \xE2\x86\x90 ";  // U+2190
  if (literals.empty()) return out + "\xE2\x8A\xA4";  // U+22A4, the empty conjunction
  for (std::size_t i = 0; i < literals.size(); ++i) {
    if (i) out += " \xE2\x88\xA7 ";  // U+2227
    out += literal_name(literals[i]);
  }
  return out;
}

std::vector<SymbolicRule> extract_rules(const RuleSet& rs, double threshold) {
  std::vector<SymbolicRule> out;
  for (const auto& t : rs.templates) {
    SymbolicRule r{t.action, {}};
    for (std::size_t i = 0; i < kNumLiterals; ++i)
      if (t.weights[i] >= threshold) r.literals.push_back(i);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace nsm
