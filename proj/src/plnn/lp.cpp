#include "nsm/lp.hpp"

#include <cmath>
#include <limits>

namespace nsm::lp {

namespace {

constexpr double kPivotEps = 1e-11;
constexpr double kCostEps = 1e-11;
constexpr double kFeasEps = 1e-9;

class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), cells_(rows * (cols + 1), 0.0), obj_(cols + 1, 0.0),
        basis_(rows, 0) {}

  double& at(std::size_t r, std::size_t c) { return cells_[r * (cols_ + 1) + c]; }
  double at(std::size_t r, std::size_t c) const { return cells_[r * (cols_ + 1) + c]; }
  double& rhs(std::size_t r) { return at(r, cols_); }
  std::vector<double>& obj() { return obj_; }
  std::vector<std::size_t>& basis() { return basis_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  // Loads an objective (maximize) and prices out the current basis.
  void set_objective(const std::vector<double>& c) {
    std::fill(obj_.begin(), obj_.end(), 0.0);
    for (std::size_t j = 0; j < c.size(); ++j) obj_[j] = c[j];
    for (std::size_t r = 0; r < rows_; ++r) {
      const double cb = obj_[basis_[r]];
      if (cb == 0.0) continue;
      for (std::size_t j = 0; j <= cols_; ++j) obj_[j] -= cb * at(r, j);
    }
  }

  void pivot(std::size_t r, std::size_t c) {
    const double p = at(r, c);
    for (std::size_t j = 0; j <= cols_; ++j) at(r, j) /= p;
    at(r, c) = 1.0;
    for (std::size_t i = 0; i < rows_; ++i) {
      if (i == r) continue;
      const double f = at(i, c);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j <= cols_; ++j) at(i, j) -= f * at(r, j);
      at(i, c) = 0.0;
    }
    const double f = obj_[c];
    if (f != 0.0) {
      for (std::size_t j = 0; j <= cols_; ++j) obj_[j] -= f * at(r, j);
      obj_[c] = 0.0;
    }
    basis_[r] = c;
  }

  // Bland's entering rule; columns at or beyond `limit` never enter.
  Status run(std::size_t limit) {
    const std::size_t patience = 50 * (rows_ + cols_);
    for (std::size_t iter = 0;; ++iter) {
      // Past the patience budget fall back to Bland's strict leaving rule,
      // which cannot cycle.
      const bool strict = iter > patience;
      std::size_t enter = limit;
      for (std::size_t j = 0; j < limit; ++j) {
        if (obj_[j] > kCostEps) {
          enter = j;
          break;
        }
      }
      if (enter == limit) return Status::Optimal;
      // Two-pass (Harris-style) ratio test: find the tightest ratio with a
      // little slack, then take the largest pivot among rows within it.
      double bound = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < rows_; ++r) {
        const double a = at(r, enter);
        if (a <= kPivotEps) continue;
        bound = std::min(bound, (std::max(rhs(r), 0.0) + kFeasEps) / a);
      }
      std::size_t leave = rows_;
      double best_pivot = 0.0;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < rows_; ++r) {
        const double a = at(r, enter);
        if (a <= kPivotEps) continue;
        const double ratio = std::max(rhs(r), 0.0) / a;
        if (strict) {
          if (ratio < best_ratio ||
              (ratio == best_ratio && leave < rows_ && basis_[r] < basis_[leave])) {
            best_ratio = ratio;
            leave = r;
          }
          continue;
        }
        if (ratio > bound) continue;
        if (a > best_pivot) {
          best_pivot = a;
          leave = r;
        }
      }
      if (leave == rows_) return Status::Unbounded;
      pivot(leave, enter);
    }
  }

  double value() const { return -obj_[cols_]; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> cells_;
  std::vector<double> obj_;
  std::vector<std::size_t> basis_;
};

}  // namespace

Solution maximize(const Problem& problem, const std::vector<double>& objective) {
  const std::size_t n = problem.num_vars;
  const std::size_t m = problem.constraints.size();

  // Column layout: [structural | slack/surplus | artificial].
  std::size_t num_slack = 0;
  std::size_t num_art = 0;
  std::vector<int> flip(m, 1);
  for (std::size_t r = 0; r < m; ++r) {
    const auto& c = problem.constraints[r];
    Sense s = c.sense;
    if (c.rhs < 0.0) {
      flip[r] = -1;
      if (s == Sense::LessEqual) s = Sense::GreaterEqual;
      else if (s == Sense::GreaterEqual) s = Sense::LessEqual;
    }
    if (s != Sense::Equal) ++num_slack;
    if (s != Sense::LessEqual) ++num_art;
  }
  const std::size_t art_begin = n + num_slack;
  Tableau t(m, art_begin + num_art);

  std::size_t slack_col = n;
  std::size_t art_col = art_begin;
  for (std::size_t r = 0; r < m; ++r) {
    const auto& c = problem.constraints[r];
    for (std::size_t j = 0; j < n && j < c.coeffs.size(); ++j) t.at(r, j) = flip[r] * c.coeffs[j];
    t.rhs(r) = flip[r] * c.rhs;
    Sense s = c.sense;
    if (flip[r] < 0 && s != Sense::Equal)
      s = s == Sense::LessEqual ? Sense::GreaterEqual : Sense::LessEqual;
    if (s == Sense::LessEqual) {
      t.at(r, slack_col) = 1.0;
      t.basis()[r] = slack_col++;
    } else {
      if (s == Sense::GreaterEqual) t.at(r, slack_col++) = -1.0;
      t.at(r, art_col) = 1.0;
      t.basis()[r] = art_col++;
    }
  }

  Solution sol;
  if (num_art > 0) {
    std::vector<double> phase1(t.cols(), 0.0);
    for (std::size_t j = art_begin; j < t.cols(); ++j) phase1[j] = -1.0;
    t.set_objective(phase1);
    t.run(t.cols());
    if (t.value() < -kFeasEps) {
      sol.status = Status::Infeasible;
      return sol;
    }
    // Drive remaining (zero-valued) artificials out of the basis.
    for (std::size_t r = 0; r < m; ++r) {
      if (t.basis()[r] < art_begin) continue;
      for (std::size_t j = 0; j < art_begin; ++j) {
        if (std::abs(t.at(r, j)) > kPivotEps) {
          t.pivot(r, j);
          break;
        }
      }
    }
  }

  std::vector<double> phase2(t.cols(), 0.0);
  for (std::size_t j = 0; j < n && j < objective.size(); ++j) phase2[j] = objective[j];
  t.set_objective(phase2);
  // Artificial columns are barred from re-entering. A redundant row may keep
  // an artificial basic at zero, which is harmless.
  const Status status = t.run(art_begin);
  sol.status = status;
  if (status != Status::Optimal) return sol;
  sol.objective = t.value();
  sol.x.assign(n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    if (t.basis()[r] < n) sol.x[t.basis()[r]] = t.rhs(r);
  }
  return sol;
}

Solution minimize(const Problem& problem, const std::vector<double>& objective) {
  std::vector<double> neg(objective.size());
  for (std::size_t j = 0; j < objective.size(); ++j) neg[j] = -objective[j];
  Solution sol = maximize(problem, neg);
  sol.objective = -sol.objective;
  return sol;
}

}  // namespace nsm::lp
