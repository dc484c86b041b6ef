#include <cstdint>

#include "nsm/error.hpp"
#include "nsm/lp.hpp"
#include "nsm/plnn.hpp"

namespace nsm {

namespace {

using Truth = std::vector<char>;

std::vector<Truth> truth_tables(const PlnnGraph& g, std::size_t& atoms) {
  const auto& nodes = g.nodes();
  std::vector<std::size_t> atom_of(nodes.size(), 0);
  atoms = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (!nodes[i].op) atom_of[i] = atoms++;
  if (atoms > kOracleMaxAtoms)
    throw ValidationError("oracle supports at most " + std::to_string(kOracleMaxAtoms) +
                          " atoms, graph has " + std::to_string(atoms));
  const std::size_t worlds = std::size_t{1} << atoms;
  std::vector<Truth> t(nodes.size(), Truth(worlds, 0));
  for (auto i : g.order()) {
    const auto& n = nodes[i];
    for (std::size_t w = 0; w < worlds; ++w) {
      if (!n.op) {
        t[i][w] = static_cast<char>((w >> atom_of[i]) & 1u);
        continue;
      }
      const auto& ops = n.operands;
      bool v = false;
      switch (*n.op) {
        case OpKind::And:
        case OpKind::Conditional:  // world membership of A and B
          v = true;
          for (auto o : ops) v = v && t[o][w];
          break;
        case OpKind::Or:
          for (auto o : ops) v = v || t[o][w];
          break;
        case OpKind::Not: v = !t[ops[0]][w]; break;
        case OpKind::Implies: v = !t[ops[0]][w] || t[ops[1]][w]; break;
        case OpKind::Identity: v = t[ops[0]][w]; break;
      }
      t[i][w] = static_cast<char>(v);
    }
  }
  return t;
}

std::vector<double> indicator(const Truth& t, std::size_t extra = 0) {
  std::vector<double> v(t.size() + extra, 0.0);
  for (std::size_t w = 0; w < t.size(); ++w) v[w] = t[w] ? 1.0 : 0.0;
  return v;
}

// Adds every authored bound as linear constraints. With `scale_col` set, the
// problem is the Charnes-Cooper homogenization and constants multiply that
// column instead of sitting on the right-hand side.
void add_model_constraints(const PlnnGraph& g, const std::vector<Truth>& t,
                           std::optional<std::size_t> scale_col, lp::Problem& p) {
  const std::size_t worlds = t.empty() ? 0 : t[0].size();
  auto bounded_row = [&](std::vector<double> row, double constant, lp::Sense sense) {
    if (scale_col) {
      row[*scale_col] = -constant;
      p.constraints.push_back({std::move(row), sense, 0.0});
    } else {
      p.constraints.push_back({std::move(row), sense, constant});
    }
  };
  for (std::size_t i = 0; i < g.nodes().size(); ++i) {
    const auto& n = g.nodes()[i];
    if (n.hidden) continue;
    if (!n.j.is_unconstrained())
      throw ValidationError("oracle needs unconstrained J (node '" + n.id + "')");
    const Bounds b = n.prior;
    if (n.op == OpKind::Conditional) {
      const Truth& given = t[n.operands[1]];
      // l p(B) <= p(A and B) <= u p(B)
      auto ratio_row = [&](double c, lp::Sense sense) {
        std::vector<double> row(p.num_vars, 0.0);
        for (std::size_t w = 0; w < worlds; ++w)
          row[w] = (t[i][w] ? 1.0 : 0.0) - c * (given[w] ? 1.0 : 0.0);
        p.constraints.push_back({std::move(row), sense, 0.0});
      };
      if (b.lower > 0.0) ratio_row(b.lower, lp::Sense::GreaterEqual);
      if (b.upper < 1.0) ratio_row(b.upper, lp::Sense::LessEqual);
      continue;
    }
    auto row = indicator(t[i], p.num_vars - worlds);
    if (b.lower > 0.0) bounded_row(row, b.lower, lp::Sense::GreaterEqual);
    if (b.upper < 1.0) bounded_row(row, b.upper, lp::Sense::LessEqual);
  }
}

}  // namespace

std::optional<Bounds> exact_bounds_oracle(const PlnnGraph& graph, const std::string& id) {
  const std::size_t target = graph.at(id);
  std::size_t atoms = 0;
  const auto t = truth_tables(graph, atoms);
  const std::size_t worlds = std::size_t{1} << atoms;
  const auto& node = graph.nodes()[target];

  if (node.op == OpKind::Conditional) {
    // max/min p(A and B)/p(B) by Charnes-Cooper: y = s * p, s > 0, sum_B y = 1.
    lp::Problem p;
    p.num_vars = worlds + 1;
    const std::size_t s = worlds;
    std::vector<double> total(p.num_vars, 1.0);
    total[s] = -1.0;
    p.constraints.push_back({total, lp::Sense::Equal, 0.0});
    p.constraints.push_back({indicator(t[node.operands[1]], 1), lp::Sense::Equal, 1.0});
    add_model_constraints(graph, t, s, p);
    const auto obj = indicator(t[target], 1);
    const auto lo = lp::minimize(p, obj);
    const auto hi = lp::maximize(p, obj);
    if (lo.status == lp::Status::Optimal && hi.status == lp::Status::Optimal)
      return Bounds{lo.objective, hi.objective};
    // No model gives the condition positive mass: the ratio is unconstrained
    // as long as some model exists at all.
    if (!exact_bounds_oracle(graph, graph.nodes()[node.operands[1]].id)) return std::nullopt;
    return Bounds::vacuous();
  }

  lp::Problem p;
  p.num_vars = worlds;
  p.constraints.push_back({std::vector<double>(worlds, 1.0), lp::Sense::Equal, 1.0});
  add_model_constraints(graph, t, std::nullopt, p);
  const auto obj = indicator(t[target]);
  const auto lo = lp::minimize(p, obj);
  if (lo.status != lp::Status::Optimal) return std::nullopt;
  const auto hi = lp::maximize(p, obj);
  if (hi.status != lp::Status::Optimal) return std::nullopt;
  return Bounds{lo.objective, hi.objective};
}

}  // namespace nsm
