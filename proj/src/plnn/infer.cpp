#include <algorithm>
#include <array>
#include <cmath>

#include "nsm/error.hpp"
#include "nsm/plnn.hpp"

namespace nsm {

namespace {

constexpr int kMonotoneSamples = 33;
constexpr int kBisectionSteps = 60;

}  // namespace

Propagator::Propagator(const PlnnGraph& graph, const InferOptions& options)
    : graph_(graph), options_(options) {
  if (!(options.epsilon > 0.0)) throw ValidationError("epsilon must be positive");
  state_.reserve(graph.nodes().size());
  for (const auto& n : graph.nodes()) state_.push_back({n.bounds, false, 0.0});
}

JRange Propagator::effective_j(const PlnnNode& n) const {
  if (!options_.use_j || n.operands.size() != 2) return JRange::unconstrained();
  return n.j;
}

Bounds Propagator::message_bounds(std::size_t i) const {
  return state_[i].arrested ? Bounds::vacuous() : state_[i].bounds;
}

double Propagator::update(std::size_t target, const Bounds& candidate, Direction dir,
                          const char* rule) {
  State& s = state_[target];
  if (s.arrested) return 0.0;
  const Bounds before = s.bounds;
  Bounds next = intersect(before, candidate);
  if (next.lower > next.upper + options_.arrest_tolerance) {
    s.bounds = next;
    s.arrested = true;
    s.extent = next.lower - next.upper;
    ++arrests_;
    trace_.push_back({iteration_, graph_.nodes()[target].id, dir, before, next, rule});
    return s.extent;
  }
  if (next.lower > next.upper) {
    // Touching within tolerance: collapse to a point inside the old bounds.
    const double mid = std::clamp(0.5 * (next.lower + next.upper), before.lower, before.upper);
    next = {mid, mid};
  }
  const double change = std::max(next.lower - before.lower, before.upper - next.upper);
  if (change <= 0.0) return 0.0;
  s.bounds = next;
  if (change > options_.epsilon)
    trace_.push_back({iteration_, graph_.nodes()[target].id, dir, before, next, rule});
  return change;
}

Bounds Propagator::upward_candidate(const PlnnNode& n, const char*& rule) const {
  std::vector<Bounds> in;
  in.reserve(n.operands.size());
  for (auto o : n.operands) in.push_back(message_bounds(o));
  const JRange j = effective_j(n);
  switch (*n.op) {
    case OpKind::And:
      if (n.operands.size() == 2 && !j.is_unconstrained()) {
        rule = "j_mod_and";
        return j_mod_and(in[0], in[1], j);
      }
      rule = "frechet_and";
      return frechet_and(in);
    case OpKind::Or:
      if (n.operands.size() == 2 && !j.is_unconstrained()) {
        rule = "j_mod_or";
        return j_mod_or(in[0], in[1], j);
      }
      rule = "frechet_or";
      return frechet_or(in);
    case OpKind::Implies:
      rule = j.is_unconstrained() ? "frechet_implies" : "j_mod_implies";
      return j_mod_implies(in[0], in[1], j);
    case OpKind::Not:
      rule = "negate";
      return negate(in[0]);
    case OpKind::Identity:
      rule = "identity";
      return in[0];
    case OpKind::Conditional:
      rule = "cond_upward";
      return cond_upward(message_bounds(n.joint), in[1]);
  }
  return Bounds::vacuous();
}

double Propagator::upward_pass() {
  double biggest = 0.0;
  for (auto i : graph_.order()) {
    const PlnnNode& n = graph_.nodes()[i];
    if (!n.is_operational() || state_[i].arrested) continue;
    const char* rule = "";
    const Bounds candidate = upward_candidate(n, rule);
    biggest = std::max(biggest, update(i, candidate, Direction::Up, rule));
  }
  return biggest;
}

// Numerically inverts a binary J-modulated activation for one operand:
// the feasible values x are those for which the activation range at x meets
// the node's bounds. Only used when the range is monotone in x.
Bounds Propagator::j_invert(const PlnnNode& n, std::size_t unknown_pos,
                            const Bounds& parent) const {
  const JRange j = effective_j(n);
  const Bounds other = message_bounds(n.operands[1 - unknown_pos]);
  auto activation = [&](double x) {
    const Bounds px = Bounds::point(x);
    const Bounds& a = unknown_pos == 0 ? px : other;
    const Bounds& b = unknown_pos == 0 ? other : px;
    switch (*n.op) {
      case OpKind::And: return j_mod_and(a, b, j);
      case OpKind::Or: return j_mod_or(a, b, j);
      default: return j_mod_implies(a, b, j);
    }
  };
  bool increasing = true;
  bool decreasing = true;
  Bounds prev = activation(0.0);
  for (int k = 1; k <= kMonotoneSamples; ++k) {
    const Bounds cur = activation(static_cast<double>(k) / kMonotoneSamples);
    if (cur.lower < prev.lower - 1e-12 || cur.upper < prev.upper - 1e-12) increasing = false;
    if (cur.lower > prev.lower + 1e-12 || cur.upper > prev.upper + 1e-12) decreasing = false;
    prev = cur;
  }
  if (!increasing && !decreasing) return Bounds::vacuous();

  // reaches(x): the activation range can still attain a value >= parent.lower
  // below(x): ... a value <= parent.upper.
  auto reaches = [&](double x) { return activation(x).upper >= parent.lower; };
  auto below = [&](double x) { return activation(x).lower <= parent.upper; };

  // Smallest x satisfying a predicate that is monotone false->true on [0,1].
  auto first_true = [](auto pred) {
    if (pred(0.0)) return 0.0;
    if (!pred(1.0)) return 2.0;
    double lo = 0.0, hi = 1.0;
    for (int k = 0; k < kBisectionSteps; ++k) {
      const double mid = 0.5 * (lo + hi);
      (pred(mid) ? hi : lo) = mid;
    }
    return lo;  // conservative side
  };
  auto last_true = [](auto pred) {
    if (pred(1.0)) return 1.0;
    if (!pred(0.0)) return -1.0;
    double lo = 0.0, hi = 1.0;
    for (int k = 0; k < kBisectionSteps; ++k) {
      const double mid = 0.5 * (lo + hi);
      (pred(mid) ? lo : hi) = mid;
    }
    return hi;
  };

  double lo, hi;
  if (increasing) {
    lo = first_true(reaches);
    hi = last_true(below);
  } else {
    lo = first_true(below);
    hi = last_true(reaches);
  }
  if (lo > 1.0 || hi < 0.0) return {1.0, 0.0};  // nothing feasible: let the arrest fire
  return {std::clamp(lo, 0.0, 1.0), std::clamp(hi, 0.0, 1.0)};
}

double Propagator::send_down(std::size_t i) {
  const PlnnNode& n = graph_.nodes()[i];
  const Bounds parent = state_[i].bounds;
  const std::size_t k = n.operands.size();
  const bool invert_j = options_.j_downward && k == 2 && !effective_j(n).is_unconstrained();
  double biggest = 0.0;
  auto push = [&](std::size_t target, const Bounds& b, const char* rule) {
    biggest = std::max(biggest, update(target, b, Direction::Down, rule));
  };

  switch (*n.op) {
    case OpKind::And:
    case OpKind::Or: {
      const bool is_and = n.op == OpKind::And;
      for (std::size_t pos = 0; pos < k; ++pos) {
        std::vector<Bounds> sibs;
        sibs.reserve(k - 1);
        for (std::size_t s = 0; s < k; ++s)
          if (s != pos) sibs.push_back(message_bounds(n.operands[s]));
        Bounds inferred = is_and ? downward_and(parent, sibs) : downward_or(parent, sibs);
        push(n.operands[pos], inferred, is_and ? "downward_and" : "downward_or");
        if (invert_j) push(n.operands[pos], j_invert(n, pos, parent), is_and ? "j_invert_and" : "j_invert_or");
      }
      break;
    }
    case OpKind::Implies: {
      const auto inferred = downward_implies(parent, message_bounds(n.operands[0]),
                                             message_bounds(n.operands[1]));
      push(n.operands[0], inferred.antecedent, "downward_implies");
      if (invert_j) push(n.operands[0], j_invert(n, 0, parent), "j_invert_implies");
      const auto again = downward_implies(parent, message_bounds(n.operands[0]),
                                          message_bounds(n.operands[1]));
      push(n.operands[1], again.consequent, "downward_implies");
      if (invert_j) push(n.operands[1], j_invert(n, 1, parent), "j_invert_implies");
      break;
    }
    case OpKind::Not:
      push(n.operands[0], negate(parent), "negate");
      break;
    case OpKind::Identity:
      push(n.operands[0], parent, "identity");
      break;
    case OpKind::Conditional: {
      const std::size_t given = n.operands[1];
      push(n.joint, cond_joint(parent, message_bounds(given)), "cond_joint");
      push(given, cond_downward(parent, message_bounds(n.joint)), "cond_downward");
      break;
    }
  }
  return biggest;
}

double Propagator::downward_pass() {
  double biggest = 0.0;
  const auto& order = graph_.order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const PlnnNode& n = graph_.nodes()[*it];
    if (!n.is_operational() || state_[*it].arrested) continue;
    biggest = std::max(biggest, send_down(*it));
  }
  return biggest;
}

InferenceResult Propagator::finish(bool converged, std::size_t iterations) && {
  InferenceResult r;
  r.converged = converged;
  r.iterations = iterations;
  for (std::size_t i = 0; i < state_.size(); ++i) {
    const auto& s = state_[i];
    r.nodes[graph_.nodes()[i].id] = {s.bounds, s.arrested, s.extent};
  }
  for (const auto& rec : trace_) {
    const auto& s = state_[graph_.at(rec.node)];
    if (s.arrested && rec.after.crossed())
      r.contradictions.push_back({rec.node, s.extent});
  }
  r.trace = std::move(trace_);
  return r;
}

InferenceResult infer(const PlnnGraph& graph, const InferOptions& options) {
  Propagator p(graph, options);
  bool converged = false;
  std::size_t it = 0;
  while (it < options.max_iters) {
    ++it;
    p.set_iteration(it);
    const std::size_t arrests_before = p.arrests();
    const double up = p.upward_pass();
    const double down = p.downward_pass();
    if (std::max(up, down) <= options.epsilon && p.arrests() == arrests_before) {
      converged = true;
      break;
    }
  }
  return std::move(p).finish(converged, it);
}

QueryResult query(const InferenceResult& result, const std::vector<std::string>& ids) {
  QueryResult q;
  q.contradiction_elsewhere = result.has_contradiction();
  for (const auto& id : ids) {
    auto it = result.nodes.find(id);
    if (it == result.nodes.end()) throw ValidationError("unknown node '" + id + "'");
    q.answers.push_back({id, it->second});
  }
  return q;
}

}  // namespace nsm
