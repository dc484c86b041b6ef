#pragma once

// Probability-interval algebra used by the PLNN engine: Frechet bounds for
// n-ary connectives, J-modulated binary activations, conditional rules and
// the downward (inverse) rules. Everything here is a pure function.

#include <array>
#include <span>
#include <string_view>
#include <utility>

namespace nsm {

inline constexpr double kTolerance = 1e-9;

struct Bounds {
  double lower = 0.0;
  double upper = 1.0;

  static constexpr Bounds vacuous() { return {0.0, 1.0}; }
  static constexpr Bounds point(double p) { return {p, p}; }

  bool valid(double tol = kTolerance) const;
  bool contains(const Bounds& inner, double tol = kTolerance) const;
  double width() const { return upper - lower; }
  bool crossed() const { return lower > upper; }

  friend bool operator==(const Bounds&, const Bounds&) = default;
};

// Meet of two intervals. The result may be crossed; callers decide.
Bounds intersect(const Bounds& a, const Bounds& b);

struct JRange {
  double lower = -1.0;
  double upper = 1.0;

  static constexpr JRange unconstrained() { return {-1.0, 1.0}; }
  static constexpr JRange point(double j) { return {j, j}; }

  bool valid() const;
  bool is_unconstrained() const { return lower == -1.0 && upper == 1.0; }
  // Correlation of (not A) with B given the range for A with B.
  JRange flipped() const { return {-upper, -lower}; }
  bool contains(const JRange& inner) const {
    return lower <= inner.lower && inner.upper <= upper;
  }

  friend bool operator==(const JRange&, const JRange&) = default;
};

enum class OpKind { And, Or, Not, Implies, Identity, Conditional };

std::string_view to_string(OpKind op);
OpKind op_kind_from_string(std::string_view name);

enum class CorrelationClass { HC, ID, AC, UC };

std::string_view to_string(CorrelationClass c);
CorrelationClass correlation_from_string(std::string_view name);
JRange correlation_to_j(CorrelationClass c);

// Frechet inequalities for n >= 2 operands.
Bounds frechet_and(std::span<const Bounds> operands);
Bounds frechet_or(std::span<const Bounds> operands);

Bounds negate(const Bounds& b);

// Point evaluation of the J-interpolated joint probability, clamped into the
// Frechet interval. `p` and `q` are marginals, `j` in [-1, 1].
double j_and_value(double p, double q, double j);
double j_or_value(double p, double q, double j);

Bounds j_mod_and(const Bounds& a, const Bounds& b, const JRange& j);
Bounds j_mod_or(const Bounds& a, const Bounds& b, const JRange& j);
Bounds j_mod_implies(const Bounds& a, const Bounds& b, const JRange& j);

// Downward rules return the bounds inferred for the remaining operand; the
// caller intersects them with what it already knows.
Bounds downward_or(const Bounds& parent, std::span<const Bounds> siblings);
Bounds downward_and(const Bounds& parent, std::span<const Bounds> siblings);

struct ImpliesOperands {
  Bounds antecedent;
  Bounds consequent;
};
ImpliesOperands downward_implies(const Bounds& parent, const Bounds& antecedent,
                                 const Bounds& consequent);

// Conditional node (A|B): joint = bounds on p(A and B), given = bounds on p(B).
Bounds cond_upward(const Bounds& joint, const Bounds& given);
Bounds cond_downward(const Bounds& conditional, const Bounds& joint);
// p(A and B) = p(A|B) p(B).
Bounds cond_joint(const Bounds& conditional, const Bounds& given);

}  // namespace nsm
