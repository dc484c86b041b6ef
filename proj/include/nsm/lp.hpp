#pragma once

// Small dense two-phase simplex. Used by the exact-bounds oracle, where the
// problems have at most a few thousand columns and a few dozen rows.

#include <optional>
#include <vector>

namespace nsm::lp {

enum class Sense { LessEqual, GreaterEqual, Equal };

struct Constraint {
  std::vector<double> coeffs;
  Sense sense = Sense::LessEqual;
  double rhs = 0.0;
};

struct Problem {
  std::size_t num_vars = 0;
  std::vector<Constraint> constraints;
};

enum class Status { Optimal, Infeasible, Unbounded };

struct Solution {
  Status status = Status::Infeasible;
  double objective = 0.0;
  std::vector<double> x;
};

// Maximizes objective . x subject to the constraints and x >= 0.
Solution maximize(const Problem& problem, const std::vector<double>& objective);
Solution minimize(const Problem& problem, const std::vector<double>& objective);

}  // namespace nsm::lp
