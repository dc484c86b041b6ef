#include "nsm/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nsm/error.hpp"

namespace nsm {

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

// max(0, p + q - 1) with one rounding: 1 - max(p, q) is exact whenever the
// result can be positive, so the floor never lands above min(p, q).
double and_floor(double p, double q) {
  if (p < q) std::swap(p, q);
  return std::max(0.0, q - (1.0 - p));
}

// Lagrange blend through (-1, lo), (0, mid), (1, hi). Written in this form so
// that the three anchors are reproduced exactly.
double lagrange_blend(double lo, double mid, double hi, double j) {
  return -j * (1.0 - j) / 2.0 * lo + (1.0 + j) * (1.0 - j) * mid +
         j * (1.0 + j) / 2.0 * hi;
}

// Critical point of the blend as a quadratic in j, if it lies in (jl, ju).
bool blend_critical_point(double lo, double mid, double hi, double jl, double ju,
                          double& out) {
  const double c2 = lo / 2.0 - mid + hi / 2.0;
  const double c1 = (hi - lo) / 2.0;
  if (c2 == 0.0) return false;
  const double j = -c1 / (2.0 * c2);
  if (!(j > jl && j < ju)) return false;
  out = j;
  return true;
}

using PointFn = double (*)(double, double, double);

// Range of a clamped blend over j in [jl, ju] at fixed marginals: endpoints
// plus the interior critical point of the (unclamped) quadratic.
template <class Anchors>
std::pair<double, double> blend_range(double p, double q, const JRange& j,
                                      Anchors anchors, PointFn fn) {
  double lo = std::min(fn(p, q, j.lower), fn(p, q, j.upper));
  double hi = std::max(fn(p, q, j.lower), fn(p, q, j.upper));
  const auto [a, m, b] = anchors(p, q);
  double jc = 0.0;
  if (blend_critical_point(a, m, b, j.lower, j.upper, jc)) {
    const double v = fn(p, q, jc);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {lo, hi};
}

struct AndAnchors {
  std::array<double, 3> operator()(double p, double q) const {
    return {and_floor(p, q), p * q, std::min(p, q)};
  }
};

struct OrAnchors {
  std::array<double, 3> operator()(double p, double q) const {
    return {std::min(1.0, p + q), p + q - p * q, std::max(p, q)};
  }
};

}  // namespace

bool Bounds::valid(double tol) const {
  return lower >= -tol && upper <= 1.0 + tol && lower <= upper + tol &&
         !std::isnan(lower) && !std::isnan(upper);
}

bool Bounds::contains(const Bounds& inner, double tol) const {
  return lower <= inner.lower + tol && inner.upper <= upper + tol;
}

Bounds intersect(const Bounds& a, const Bounds& b) {
  return {std::max(a.lower, b.lower), std::min(a.upper, b.upper)};
}

bool JRange::valid() const {
  return -1.0 <= lower && lower <= upper && upper <= 1.0;
}

std::string_view to_string(OpKind op) {
  switch (op) {
    case OpKind::And: return "and";
    case OpKind::Or: return "or";
    case OpKind::Not: return "not";
    case OpKind::Implies: return "implies";
    case OpKind::Identity: return "identity";
    case OpKind::Conditional: return "cond";
  }
  return "?";
}

OpKind op_kind_from_string(std::string_view name) {
  if (name == "and") return OpKind::And;
  if (name == "or") return OpKind::Or;
  if (name == "not") return OpKind::Not;
  if (name == "implies") return OpKind::Implies;
  if (name == "identity" || name == "equiv") return OpKind::Identity;
  if (name == "cond" || name == "given") return OpKind::Conditional;
  throw ValidationError("unknown operator '" + std::string(name) + "'");
}

std::string_view to_string(CorrelationClass c) {
  switch (c) {
    case CorrelationClass::HC: return "HC";
    case CorrelationClass::ID: return "ID";
    case CorrelationClass::AC: return "AC";
    case CorrelationClass::UC: return "UC";
  }
  return "?";
}

CorrelationClass correlation_from_string(std::string_view name) {
  if (name == "HC") return CorrelationClass::HC;
  if (name == "ID") return CorrelationClass::ID;
  if (name == "AC") return CorrelationClass::AC;
  if (name == "UC") return CorrelationClass::UC;
  throw ValidationError("unknown correlation class '" + std::string(name) + "'");
}

JRange correlation_to_j(CorrelationClass c) {
  switch (c) {
    case CorrelationClass::HC: return {-0.5, 1.0};
    case CorrelationClass::ID: return {0.0, 0.0};
    case CorrelationClass::AC: return {-1.0, 0.5};
    case CorrelationClass::UC: return {-1.0, 1.0};
  }
  return JRange::unconstrained();
}

Bounds frechet_and(std::span<const Bounds> operands) {
  if (operands.size() < 2) throw ValidationError("conjunction needs at least 2 operands");
  // Folding pairwise floors equals max(0, sum - (n - 1)): once the running
  // floor hits 0 it stays there.
  double floor = operands[0].lower;
  double min_upper = operands[0].upper;
  for (std::size_t i = 1; i < operands.size(); ++i) {
    floor = and_floor(floor, operands[i].lower);
    min_upper = std::min(min_upper, operands[i].upper);
  }
  return {floor, std::min(1.0, min_upper)};
}

Bounds frechet_or(std::span<const Bounds> operands) {
  if (operands.size() < 2) throw ValidationError("disjunction needs at least 2 operands");
  double max_lower = 0.0;
  double sum_upper = 0.0;
  for (const auto& b : operands) {
    max_lower = std::max(max_lower, b.lower);
    sum_upper += b.upper;
  }
  return {max_lower, std::min(1.0, sum_upper)};
}

Bounds negate(const Bounds& b) { return {1.0 - b.upper, 1.0 - b.lower}; }

namespace {

double clamped_blend(double at_minus, double at_zero, double at_plus, double j) {
  if (j == -1.0) return at_minus;
  if (j == 0.0) return at_zero;
  if (j == 1.0) return at_plus;
  const double v = lagrange_blend(at_minus, at_zero, at_plus, j);
  return std::clamp(v, std::min(at_minus, at_plus), std::max(at_minus, at_plus));
}

}  // namespace

double j_and_value(double p, double q, double j) {
  const auto [lo, mid, hi] = AndAnchors{}(p, q);
  return clamped_blend(lo, mid, hi, j);
}

double j_or_value(double p, double q, double j) {
  const auto [hi, mid, lo] = OrAnchors{}(p, q);
  return clamped_blend(hi, mid, lo, j);
}

Bounds j_mod_and(const Bounds& a, const Bounds& b, const JRange& j) {
  const Bounds pair[] = {a, b};
  const Bounds frechet = frechet_and(pair);
  if (j.is_unconstrained()) return frechet;
  const double lo = blend_range(a.lower, b.lower, j, AndAnchors{}, j_and_value).first;
  const double hi = blend_range(a.upper, b.upper, j, AndAnchors{}, j_and_value).second;
  return intersect({lo, hi}, frechet);
}

Bounds j_mod_or(const Bounds& a, const Bounds& b, const JRange& j) {
  const Bounds pair[] = {a, b};
  const Bounds frechet = frechet_or(pair);
  if (j.is_unconstrained()) return frechet;
  const double lo = blend_range(a.lower, b.lower, j, OrAnchors{}, j_or_value).first;
  const double hi = blend_range(a.upper, b.upper, j, OrAnchors{}, j_or_value).second;
  return intersect({lo, hi}, frechet);
}

Bounds j_mod_implies(const Bounds& a, const Bounds& b, const JRange& j) {
  return j_mod_or(negate(a), b, j.flipped());
}

Bounds downward_or(const Bounds& parent, std::span<const Bounds> siblings) {
  double sum_upper = 0.0;
  for (const auto& s : siblings) sum_upper += s.upper;
  return {std::max(0.0, parent.lower - sum_upper), parent.upper};
}

Bounds downward_and(const Bounds& parent, std::span<const Bounds> siblings) {
  double sum_lower = 0.0;
  for (const auto& s : siblings) sum_lower += s.lower;
  const double others = static_cast<double>(siblings.size());
  return {parent.lower, std::min(1.0, parent.upper - sum_lower + others)};
}

ImpliesOperands downward_implies(const Bounds& parent, const Bounds& antecedent,
                                 const Bounds& consequent) {
  // A -> B is read as (not A) or B.
  const Bounds not_a = negate(antecedent);
  const Bounds inferred_not_a = downward_or(parent, std::span(&consequent, 1));
  const Bounds inferred_b = downward_or(parent, std::span(&not_a, 1));
  return {negate(inferred_not_a), inferred_b};
}

Bounds cond_upward(const Bounds& joint, const Bounds& given) {
  const double lo = given.upper > 0.0 ? joint.lower / given.upper : 0.0;
  const double hi = given.lower > 0.0 ? joint.upper / given.lower : 1.0;
  return {clamp01(lo), clamp01(hi)};
}

Bounds cond_downward(const Bounds& conditional, const Bounds& joint) {
  const double lo = conditional.upper > 0.0 ? joint.lower / conditional.upper : 0.0;
  const double hi = conditional.lower > 0.0 ? joint.upper / conditional.lower : 1.0;
  return {clamp01(lo), clamp01(hi)};
}

Bounds cond_joint(const Bounds& conditional, const Bounds& given) {
  return {conditional.lower * given.lower, conditional.upper * given.upper};
}

}  // namespace nsm
