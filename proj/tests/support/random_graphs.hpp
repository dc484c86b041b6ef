#pragma once

// Random PLNN graphs whose authored bounds are all satisfied by one hidden
// joint distribution, so the model set is never empty.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "nsm/plnn.hpp"
#include "nsm/random.hpp"

namespace testgraphs {

struct Options {
  std::size_t max_atoms = 8;
  std::size_t max_ops = 12;
  bool conditionals = true;
  double vacuous_chance = 0.4;  // chance a node is left at (0,1)
};

inline nsm::GraphSpec random_graph(nsm::Rng& rng, const Options& opt = {}) {
  using nsm::OpKind;
  const std::size_t atoms = 1 + rng.next() % opt.max_atoms;
  const std::size_t ops = 1 + rng.next() % opt.max_ops;
  const std::size_t worlds = std::size_t{1} << atoms;

  std::vector<double> weight(worlds);
  double total = 0.0;
  for (auto& w : weight) {
    w = -std::log(1.0 - rng.uniform());  // exponential weights: a flat Dirichlet draw
    total += w;
  }
  for (auto& w : weight) w /= total;

  std::vector<std::vector<char>> truth;
  std::vector<double> prob;
  nsm::GraphSpec spec;

  auto around = [&](double p) -> std::optional<nsm::Bounds> {
    p = std::clamp(p, 0.0, 1.0);
    if (rng.uniform() < opt.vacuous_chance) return std::nullopt;
    if (rng.uniform() < 0.15) return nsm::Bounds::point(p);
    return nsm::Bounds{p * rng.uniform(), p + (1.0 - p) * rng.uniform()};
  };

  for (std::size_t a = 0; a < atoms; ++a) {
    std::vector<char> t(worlds);
    double p = 0.0;
    for (std::size_t w = 0; w < worlds; ++w) {
      t[w] = static_cast<char>((w >> a) & 1u);
      if (t[w]) p += weight[w];
    }
    truth.push_back(t);
    prob.push_back(p);
    spec.nodes.push_back({"a" + std::to_string(a), std::nullopt, {}, around(p), {}, {}});
  }

  std::vector<std::size_t> formulas(atoms);
  for (std::size_t a = 0; a < atoms; ++a) formulas[a] = a;

  const OpKind kinds[] = {OpKind::And, OpKind::Or, OpKind::Not, OpKind::Implies,
                          OpKind::Identity, OpKind::Conditional};
  for (std::size_t k = 0; k < ops; ++k) {
    OpKind op = kinds[rng.next() % (opt.conditionals ? 6 : 5)];
    const std::size_t have = formulas.size();
    std::size_t arity = 2;
    if (op == OpKind::Not || op == OpKind::Identity) arity = 1;
    if ((op == OpKind::And || op == OpKind::Or) && rng.uniform() < 0.3) arity = 3;
    if (have < arity) op = OpKind::Not, arity = 1;
    std::vector<std::size_t> picks;
    while (picks.size() < arity) {
      const std::size_t c = formulas[rng.next() % have];
      bool dup = false;
      for (auto x : picks) dup = dup || x == c;
      if (!dup) picks.push_back(c);
    }
    std::vector<char> t(worlds);
    std::vector<char> given(worlds);
    for (std::size_t w = 0; w < worlds; ++w) {
      bool v = false;
      switch (op) {
        case OpKind::And:
        case OpKind::Conditional:
          v = true;
          for (auto x : picks) v = v && truth[x][w];
          break;
        case OpKind::Or:
          for (auto x : picks) v = v || truth[x][w];
          break;
        case OpKind::Not: v = !truth[picks[0]][w]; break;
        case OpKind::Implies: v = !truth[picks[0]][w] || truth[picks[1]][w]; break;
        case OpKind::Identity: v = truth[picks[0]][w]; break;
      }
      t[w] = static_cast<char>(v);
    }
    double p = 0.0;
    for (std::size_t w = 0; w < worlds; ++w)
      if (t[w]) p += weight[w];
    nsm::NodeSpec ns;
    ns.id = "op" + std::to_string(k);
    ns.op = op;
    for (auto x : picks) ns.operands.push_back(spec.nodes[x].id);
    if (op == OpKind::Conditional) {
      const double pb = prob[picks[1]];
      ns.bounds = pb > 0.0 ? around(p / pb) : std::nullopt;
    } else {
      ns.bounds = around(p);
    }
    // Conditional nodes are not events, so they never become operands.
    if (op != OpKind::Conditional) formulas.push_back(spec.nodes.size());
    spec.nodes.push_back(ns);
    truth.push_back(t);
    prob.push_back(p);
  }
  return spec;
}

}  // namespace testgraphs
