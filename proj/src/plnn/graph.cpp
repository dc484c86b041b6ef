#include <algorithm>
#include <set>

#include "nsm/error.hpp"
#include "nsm/plnn.hpp"

namespace nsm {

namespace {

void check_arity(const NodeSpec& n) {
  const std::size_t k = n.operands.size();
  switch (*n.op) {
    case OpKind::Not:
    case OpKind::Identity:
      if (k != 1) throw ValidationError("node '" + n.id + "': " + std::string(to_string(*n.op)) +
                                        " takes exactly 1 operand, got " + std::to_string(k));
      break;
    case OpKind::Implies:
    case OpKind::Conditional:
      if (k != 2) throw ValidationError("node '" + n.id + "': " + std::string(to_string(*n.op)) +
                                        " takes exactly 2 operands, got " + std::to_string(k));
      break;
    case OpKind::And:
    case OpKind::Or:
      if (k < 2) throw ValidationError("node '" + n.id + "': " + std::string(to_string(*n.op)) +
                                       " needs at least 2 operands, got " + std::to_string(k));
      break;
  }
}

bool accepts_j(OpKind op) {
  return op == OpKind::And || op == OpKind::Or || op == OpKind::Implies;
}

}  // namespace

const NodeSpec* GraphSpec::find(const std::string& id) const {
  for (const auto& n : nodes)
    if (n.id == id) return &n;
  return nullptr;
}

PlnnGraph PlnnGraph::build(const GraphSpec& spec) {
  PlnnGraph g;
  for (const auto& ns : spec.nodes) {
    if (ns.id.empty()) throw ValidationError("node with empty id");
    if (ns.id.find('#') != std::string::npos)
      throw ValidationError("node '" + ns.id + "': '#' is reserved for synthesized nodes");
    if (g.index_.count(ns.id)) throw ValidationError("duplicate node id '" + ns.id + "'");
    if (ns.bounds && !(ns.bounds->lower >= 0.0 && ns.bounds->upper <= 1.0 &&
                       ns.bounds->lower <= ns.bounds->upper))
      throw ValidationError("node '" + ns.id + "': malformed bounds");
    if (!ns.op && !ns.operands.empty())
      throw ValidationError("node '" + ns.id + "': propositional nodes take no operands");
    if (ns.op) check_arity(ns);
    if (ns.j && ns.correlation && !(*ns.j == correlation_to_j(*ns.correlation)))
      throw ValidationError("node '" + ns.id + "': J range disagrees with correlation class");
    if (ns.j || ns.correlation) {
      if (!ns.op || !accepts_j(*ns.op))
        throw ValidationError("node '" + ns.id + "': J is only allowed on and/or/implies");
      if (ns.j && !ns.j->valid()) throw ValidationError("node '" + ns.id + "': malformed J range");
      if (ns.op && ns.operands.size() > 2)
        throw ValidationError("node '" + ns.id + "': J needs a binary node");
    }
    PlnnNode node;
    node.id = ns.id;
    node.op = ns.op;
    node.prior = ns.bounds.value_or(Bounds::vacuous());
    node.bounds = node.prior;
    node.j = ns.j ? *ns.j
                  : ns.correlation ? correlation_to_j(*ns.correlation)
                                   : JRange::unconstrained();
    g.index_[node.id] = g.nodes_.size();
    g.nodes_.push_back(std::move(node));
  }

  for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
    for (const auto& name : spec.nodes[i].operands) {
      auto it = g.index_.find(name);
      if (it == g.index_.end())
        throw ValidationError("node '" + spec.nodes[i].id + "': unresolved operand '" + name + "'");
      if (g.nodes_[it->second].op == OpKind::Conditional)
        throw ValidationError("node '" + spec.nodes[i].id + "': conditional node '" + name +
                              "' cannot be an operand");
      g.nodes_[i].operands.push_back(it->second);
    }
  }

  // Conditionals get a hidden joint node A-and-B so their rules can run.
  const std::size_t authored = g.nodes_.size();
  for (std::size_t i = 0; i < authored; ++i) {
    if (g.nodes_[i].op != OpKind::Conditional) continue;
    PlnnNode joint;
    joint.id = g.nodes_[i].id + "#joint";
    joint.op = OpKind::And;
    joint.operands = g.nodes_[i].operands;
    joint.hidden = true;
    g.index_[joint.id] = g.nodes_.size();
    g.nodes_[i].joint = g.nodes_.size();
    g.nodes_.push_back(std::move(joint));
  }

  // Kahn's algorithm over operand -> operator edges. A conditional also
  // depends on its joint node.
  const std::size_t n = g.nodes_.size();
  std::vector<std::vector<std::size_t>> users(n);
  std::vector<std::size_t> pending(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto deps = g.nodes_[i].operands;
    if (g.nodes_[i].op == OpKind::Conditional) deps.push_back(g.nodes_[i].joint);
    std::sort(deps.begin(), deps.end());
    deps.erase(std::unique(deps.begin(), deps.end()), deps.end());
    pending[i] = deps.size();
    for (auto d : deps) users[d].push_back(i);
  }
  auto by_id = [&g](std::size_t a, std::size_t b) { return g.nodes_[a].id < g.nodes_[b].id; };
  std::set<std::size_t, decltype(by_id)> ready(by_id);
  for (std::size_t i = 0; i < n; ++i)
    if (pending[i] == 0) ready.insert(i);
  while (!ready.empty()) {
    const std::size_t i = *ready.begin();
    ready.erase(ready.begin());
    g.order_.push_back(i);
    for (auto u : users[i])
      if (--pending[u] == 0) ready.insert(u);
  }
  if (g.order_.size() != n) {
    for (std::size_t i = 0; i < n; ++i)
      if (pending[i] != 0) throw ValidationError("cycle through node '" + g.nodes_[i].id + "'");
  }
  return g;
}

std::optional<std::size_t> PlnnGraph::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t PlnnGraph::at(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ValidationError("unknown node '" + id + "'");
  return it->second;
}

void PlnnGraph::set_prior(const std::string& id, const Bounds& b) {
  if (!(b.lower >= 0.0 && b.upper <= 1.0 && b.lower <= b.upper))
    throw ValidationError("node '" + id + "': malformed bounds");
  auto& node = nodes_[at(id)];
  node.prior = b;
  node.bounds = b;
}

std::size_t PlnnGraph::propositional_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const PlnnNode& n) { return !n.op; }));
}

}  // namespace nsm
