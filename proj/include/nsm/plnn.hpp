#pragma once

// Probabilistic logical neural network: a DAG of propositional and
// operational nodes carrying probability bounds, evaluated by alternating
// upward and downward bound propagation until nothing tightens by more than
// epsilon. Contradictions (crossed bounds) are arrested in place.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nsm/bounds.hpp"

namespace nsm {

// Authoring-side description of a node, as read from a graph file.
struct NodeSpec {
  std::string id;
  std::optional<OpKind> op;  // empty for propositional nodes
  std::vector<std::string> operands;
  std::optional<Bounds> bounds;
  std::optional<JRange> j;
  std::optional<CorrelationClass> correlation;  // source of `j` when authored by class
};

struct GraphSpec {
  std::vector<NodeSpec> nodes;

  const NodeSpec* find(const std::string& id) const;
};

struct PlnnNode {
  std::string id;
  std::optional<OpKind> op;
  std::vector<std::size_t> operands;
  Bounds bounds;
  Bounds prior;
  JRange j;
  bool hidden = false;  // synthesized joint of a conditional
  std::size_t joint = 0;  // conditional nodes: index of their hidden A-and-B node

  bool is_operational() const { return op.has_value(); }
};

class PlnnGraph {
 public:
  // Validates and builds. Throws ValidationError with the offending node id.
  static PlnnGraph build(const GraphSpec& spec);

  const std::vector<PlnnNode>& nodes() const { return nodes_; }
  const std::vector<std::size_t>& order() const { return order_; }
  std::optional<std::size_t> index_of(const std::string& id) const;
  std::size_t at(const std::string& id) const;  // throws on unknown id
  const PlnnNode& node(const std::string& id) const { return nodes_[at(id)]; }

  // Replaces the prior (and current) bounds of a node, e.g. with observations.
  void set_prior(const std::string& id, const Bounds& b);
  std::size_t propositional_count() const;

 private:
  std::vector<PlnnNode> nodes_;
  std::vector<std::size_t> order_;  // topological, lexicographic tie-break
  std::map<std::string, std::size_t> index_;
};

enum class Direction { Up, Down };

struct TraceRecord {
  std::size_t iteration = 0;
  std::string node;
  Direction direction = Direction::Up;
  Bounds before;
  Bounds after;
  std::string rule;
};

struct Contradiction {
  std::string node;
  double extent = 0.0;
};

struct NodeResult {
  Bounds bounds;
  bool arrested = false;
  double extent = 0.0;
};

struct InferenceResult {
  std::map<std::string, NodeResult> nodes;
  bool converged = false;
  std::size_t iterations = 0;
  std::vector<Contradiction> contradictions;
  std::vector<TraceRecord> trace;

  bool has_contradiction() const { return !contradictions.empty(); }
};

struct InferOptions {
  double epsilon = 1e-4;
  std::size_t max_iters = 1000;
  bool use_j = true;
  // Invert J-modulated activations numerically on the way down.
  bool j_downward = false;
  double arrest_tolerance = kTolerance;
};

// Mutable per-run state. Exposed so the individual passes can be driven and
// tested one at a time; `infer` is the usual entry point.
class Propagator {
 public:
  Propagator(const PlnnGraph& graph, const InferOptions& options);

  // Each pass returns the largest single tightening it applied.
  double upward_pass();
  double downward_pass();

  const Bounds& bounds(std::size_t i) const { return state_[i].bounds; }
  const Bounds& bounds(const std::string& id) const { return state_[graph_.at(id)].bounds; }
  bool arrested(std::size_t i) const { return state_[i].arrested; }
  std::size_t arrests() const { return arrests_; }
  void set_iteration(std::size_t it) { iteration_ = it; }

  InferenceResult finish(bool converged, std::size_t iterations) &&;

 private:
  struct State {
    Bounds bounds;
    bool arrested = false;
    double extent = 0.0;
  };

  JRange effective_j(const PlnnNode& n) const;
  Bounds message_bounds(std::size_t i) const;  // arrested nodes send nothing
  double update(std::size_t target, const Bounds& candidate, Direction dir,
                const char* rule);
  Bounds upward_candidate(const PlnnNode& n, const char*& rule) const;
  double send_down(std::size_t node_index);
  Bounds j_invert(const PlnnNode& n, std::size_t unknown_pos, const Bounds& current) const;

  const PlnnGraph& graph_;
  InferOptions options_;
  std::vector<State> state_;
  std::vector<TraceRecord> trace_;
  std::size_t iteration_ = 0;
  std::size_t arrests_ = 0;
};

InferenceResult infer(const PlnnGraph& graph, const InferOptions& options = {});

struct QueryAnswer {
  std::string node;
  NodeResult state;
};

struct QueryResult {
  std::vector<QueryAnswer> answers;
  bool contradiction_elsewhere = false;  // any arrest anywhere in the graph
};

QueryResult query(const InferenceResult& result, const std::vector<std::string>& ids);

// Exact min/max of a node's probability over all joint distributions on the
// propositional atoms that satisfy every authored bound. Test oracle; needs
// at most 12 atoms and unconstrained J. Returns nullopt for an empty model set.
std::optional<Bounds> exact_bounds_oracle(const PlnnGraph& graph, const std::string& id);

inline constexpr std::size_t kOracleMaxAtoms = 12;

std::string to_dot(const PlnnGraph& graph, const InferenceResult& result);
std::string trace_to_text(const std::vector<TraceRecord>& trace);

}  // namespace nsm
