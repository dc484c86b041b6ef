#include <cmath>

#include "doctest.h"
#include "nsm/error.hpp"
#include "nsm/random.hpp"
#include "nsm/rules.hpp"

using namespace nsm;

namespace {

RuleTemplate two_literal(double w_ta, double w_slack) {
  RuleTemplate t;
  t.weights[literal_index(Predicate::TaskAssigned, false)] = w_ta;
  t.weights[literal_index(Predicate::Slack, false)] = w_slack;
  return t;
}

PredicateValuation val(double ta, double slack) { return {ta, 1, 0, slack}; }

std::string extracted(const RuleSet& rs, double threshold, std::size_t which) {
  return extract_rules(rs, threshold)[which].to_string();
}

}  // namespace

TEST_CASE("literal names round-trip") {
  for (std::size_t i = 0; i < kNumLiterals; ++i) CHECK(*literal_from_name(literal_name(i)) == i);
  CHECK(*literal_from_name("~Slack") == literal_index(Predicate::Slack, true));
  CHECK_FALSE(literal_from_name("Nope").has_value());
  CHECK(literal_name(3) == "\xC2\xAC" "ParentTasksCompleted");
}

TEST_CASE("valuation invariants") {
  PredicateValuation v;
  CHECK_THROWS_AS(v.set(Predicate::TaskAssigned, 0.5), ValidationError);
  CHECK_THROWS_AS(v.set(Predicate::Slack, 1.5), ValidationError);
  v.set(Predicate::Slack, 0.3);
  CHECK(v.literal(literal_index(Predicate::Slack, true)) == doctest::Approx(0.7));
  CHECK_THROWS_AS(v.literal(0), ValidationError);
}

TEST_CASE("eval_rule examples") {
  RuleTemplate all;
  all.weights.fill(0.7);
  // Every positive literal true means every negated literal is false, so use
  // a template that only weights positive literals for the identity case.
  RuleTemplate pos;
  for (std::size_t p = 0; p < kNumPredicates; ++p) pos.weights[2 * p] = 0.9;
  CHECK(eval_rule(pos, {1, 1, 1, 1}) == 1.0);
  CHECK(eval_rule(two_literal(1, 1), val(1, 0)) == 0.0);
  CHECK(eval_rule(two_literal(1, 0.5), val(1, 0.5)) == doctest::Approx(0.75));
  CHECK(eval_rule(all, {0, 1, 0, 0.2}) >= 0.0);
}

TEST_CASE("eval_rule is classical conjunction for unit weights") {
  for (int mask = 0; mask < 16; ++mask) {
    const double ta = mask & 1, ptc = (mask >> 1) & 1, sib = (mask >> 2) & 1, sl = (mask >> 3) & 1;
    RuleTemplate t;
    for (std::size_t p = 0; p < kNumPredicates; ++p) t.weights[2 * p] = 1.0;
    const double expect = (ta && ptc && sib && sl) ? 1.0 : 0.0;
    CHECK(eval_rule(t, {ta, ptc, sib, sl}) == expect);
  }
}

TEST_CASE("rule_gradient examples and finite differences") {
  const auto g = rule_gradient(two_literal(1, 0.5), val(1, 0.5));
  CHECK(g[literal_index(Predicate::TaskAssigned, false)] == 0.0);
  CHECK(g[literal_index(Predicate::Slack, false)] == doctest::Approx(-0.5));
  const auto flat = rule_gradient(two_literal(1, 1), val(0, 0));
  for (double x : flat) CHECK(x == 0.0);

  Rng rng(41);
  int checked = 0;
  while (checked < 1000) {
    RuleTemplate t;
    for (auto& w : t.weights) w = rng.uniform(0, 0.4);
    const PredicateValuation v(rng.uniform() < 0.5 ? 0 : 1, rng.uniform() < 0.5 ? 0 : 1,
                               rng.uniform() < 0.5 ? 0 : 1, rng.uniform());
    double raw = t.bias;
    for (std::size_t i = 0; i < kNumLiterals; ++i) raw -= t.weights[i] * (1 - v.literal(i));
    if (raw < 1e-3 || raw > 1 - 1e-3) continue;
    const auto grad = rule_gradient(t, v);
    for (std::size_t i = 0; i < kNumLiterals; ++i) {
      const double h = 1e-6;
      RuleTemplate up = t, down = t;
      up.weights[i] += h;
      down.weights[i] -= h;
      const double fd = (eval_rule(up, v) - eval_rule(down, v)) / (2 * h);
      CHECK(std::abs(fd - grad[i]) <= 1e-4 * std::max(1.0, std::abs(grad[i])));
    }
    ++checked;
  }
}

TEST_CASE("guard rails") {
  const RuleSet rs;
  auto m = guard_rail_mask(rs, {true, true, true, true});
  CHECK(m[0] == 0);
  CHECK(m[1] == 0);
  for (std::size_t i = 2; i < m.size(); ++i) CHECK(m[i] == 1);
  m = guard_rail_mask(rs, {false, false, false, false});
  CHECK(m[0] == 1);
  CHECK(std::count(m.begin(), m.end(), 1) == 1);
  m = guard_rail_mask(rs, {true, false, false, false});
  CHECK(std::count(m.begin(), m.end(), 1) == 1);
  m = guard_rail_mask(rs, {true, true, true, false});
  CHECK(m[0] == 0);
  CHECK(m[1] == 1);
  CHECK(std::count(m.begin(), m.end(), 1) == 1 + static_cast<long>(rs.bins.size()));
}

TEST_CASE("action_distribution") {
  const RuleSet rs = RuleSet::reference();
  const auto actions = action_space(rs);
  ActionMask only100(actions.size(), 0);
  only100[1] = 1;
  auto d = action_distribution(rs, {1, 1, 0, 0}, only100, nullptr);
  CHECK(d[1] == 1.0);

  RuleSet zero;
  for (auto& t : zero.templates)
    t.weights.fill(2.0);
  zero.templates[1].action = ActionClass::Full;
  zero.templates[2].action = ActionClass::Partial;
  ActionMask some(actions.size(), 0);
  some[1] = some[3] = some[4] = 1;
  d = action_distribution(zero, {1, 1, 1, 0.5}, some, nullptr);
  CHECK(d[1] == doctest::Approx(1.0 / 3));
  CHECK(d[3] == doctest::Approx(1.0 / 3));
  CHECK(d[0] == 0.0);

  const auto mask = guard_rail_mask(rs, {true, true, true, false});
  const SlackContext ctx{{100, 1, 100}, {}};
  const auto scores = action_scores(rs, {1, 1, 0, 0}, mask, &ctx);
  const auto best = std::max_element(scores.begin(), scores.end()) - scores.begin();
  CHECK(best == 1);

  CHECK_THROWS_AS(action_distribution(rs, {1, 1, 0, 0}, ActionMask(actions.size(), 0), nullptr),
                  ValidationError);

  Rng rng(43);
  for (int i = 0; i < 500; ++i) {
    RuleSet r;
    for (std::size_t c = 0; c < kNumActionClasses; ++c) {
      r.templates[c].action = static_cast<ActionClass>(c);
      for (auto& w : r.templates[c].weights) w = rng.uniform(0, 0.5);
    }
    ActionMask mk(actions.size());
    for (auto& x : mk) x = rng.uniform() < 0.5;
    mk[rng.next() % mk.size()] = 1;
    const SlackContext c2{{rng.uniform(1, 100), 1, rng.uniform(1, 100)},
                          {{rng.uniform(1, 100), 1, rng.uniform(1, 100)}}};
    const auto dist = action_distribution(r, {1, 1, 1, 0.5}, mk, &c2);
    double total = 0.0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
      total += dist[k];
      if (!mk[k]) CHECK(dist[k] == 0.0);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("slack_value") {
  const SlackContext same{{100, 1, 100}, {{100, 1, 100}}};
  CHECK(slack_value(50, same) == doctest::Approx(1.0));
  CHECK(slack_value(90, same) < slack_value(50, same));
  const RuleSet rs;
  auto argmax = [&](const SlackContext& ctx) {
    int best = 0;
    double v = -1;
    for (int b : rs.bins)
      if (slack_value(b, ctx) > v) v = slack_value(b, ctx), best = b;
    return best;
  };
  CHECK(argmax(same) == 50);
  // Twice the work with equal sub-deadlines wants 2/3 of the tokens.
  const SlackContext heavy{{200, 1, 100}, {{100, 1, 100}}};
  CHECK(argmax(heavy) == 70);
  // Unimodal over the bins.
  for (const auto* ctx : {&same, &heavy}) {
    bool descending = false;
    for (std::size_t i = 1; i < rs.bins.size(); ++i) {
      const double a = slack_value(rs.bins[i - 1], *ctx), b = slack_value(rs.bins[i], *ctx);
      if (b < a) descending = true;
      if (descending) CHECK(b <= a);
    }
  }
  CHECK_THROWS_AS(slack_value(50, SlackContext{{100, 1, 0}, {{100, 1, 100}}}), ValidationError);
  CHECK(slack_value(100, same) == 0.0);
  CHECK(slack_value(0, same) == 0.0);
}

TEST_CASE("extract_rules reproduces the reference rules") {
  const RuleSet rs = RuleSet::reference();
  CHECK(extracted(rs, 0.1, 0) == "NeedTokens_0 \xE2\x86\x90 \xC2\xAC" "ParentTasksCompleted");
  CHECK(extracted(rs, 0.1, 1) ==
        "NeedTokens_100 \xE2\x86\x90 TaskAssigned \xE2\x88\xA7 ParentTasksCompleted \xE2\x88\xA7 "
        "\xC2\xAC" "SiblingTasks");
  CHECK(extracted(rs, 0.1, 2) ==
        "NeedTokens_x \xE2\x86\x90 TaskAssigned \xE2\x88\xA7 ParentTasksCompleted \xE2\x88\xA7 "
        "SiblingTasks \xE2\x88\xA7 Slack");
  for (const auto& r : extract_rules(rs, 0.999)) CHECK(r.literals.empty());
  for (const auto& r : extract_rules(rs, 1e-9)) CHECK(r.literals.size() == kNumLiterals);
  // Raising the threshold never adds a literal.
  std::size_t prev = kNumLiterals * 3;
  for (double t = 1e-4; t < 1.0; t *= 1.5) {
    std::size_t n = 0;
    for (const auto& r : extract_rules(rs, t)) n += r.literals.size();
    CHECK(n <= prev);
    prev = n;
  }
}

TEST_CASE("initial weights") {
  const auto a = RuleSet::initial(5), b = RuleSet::initial(5);
  for (std::size_t c = 0; c < kNumActionClasses; ++c)
    for (std::size_t i = 0; i < kNumLiterals; ++i) {
      CHECK(a.templates[c].weights[i] == b.templates[c].weights[i]);
      CHECK(std::abs(a.templates[c].weights[i] - 0.125) <= 0.0125);
    }
  a.validate();
  RuleSet bad = a;
  bad.bins = {10, 10};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}
