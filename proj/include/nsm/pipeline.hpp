#pragma once

// Policies over the simulator, including rules gated by PLNN inference on the
// environment predicates, and the per-run report.

#include <map>
#include <string_view>
#include <string>
#include <vector>

#include "nsm/plnn.hpp"
#include "nsm/rules.hpp"
#include "nsm/sim.hpp"

namespace nsm {

// The eight-variable domain knowledge graph over the environment predicates.
GraphSpec build_domain_graph();

enum class PolicyChoice { Uniform, LearnedRules };

std::string_view to_string(PolicyChoice c);

struct GateDecision {
  PolicyChoice choice = PolicyChoice::LearnedRules;
  Bounds query;  // inferred bounds of the query node
  bool contradiction = false;
};

struct GateConfig {
  std::string query = "LightLoad";
  double tau = 0.6;  // uniform sharing when the query's lower bound reaches this
  InferOptions infer;

  void validate() const;  // throws ValidationError
};

// Installs the observed bounds on the matching propositional nodes (others
// keep their priors), infers, and picks uniform sharing when the query node's
// lower bound is at least tau. Observations naming nodes absent from the graph
// are ignored. Throws ValidationError when the query node is missing.
GateDecision dynamic_gate(const PlnnGraph& graph, const std::map<std::string, Bounds>& observed,
                          const GateConfig& config);

struct DynamicPolicyConfig {
  GraphSpec graph;
  RuleSet rules;
  GateConfig gate;
  int refresh = 1;  // decisions between re-inferences

  void validate() const;
};

enum class PolicyKind { Uniform, Rules, Dynamic };

struct PolicySpec {
  PolicyKind kind = PolicyKind::Uniform;
  RuleSet rules;                // Rules
  DynamicPolicyConfig dynamic;  // Dynamic
  std::vector<int> bins{10, 20, 30, 40, 50, 60, 70, 80, 90};  // Uniform snapping
};

std::string_view to_string(PolicyKind k);

struct GateLogEntry {
  double time = 0.0;
  std::string agent;
  GateDecision decision;
};

struct RunReport {
  std::string scenario;
  std::string policy;
  std::map<std::string, double> makespan;  // per job
  std::size_t events = 0;
  std::size_t decisions = 0;
  std::size_t uniform_decisions = 0;  // dynamic only: decisions handed to uniform sharing
  std::size_t contradictions = 0;     // dynamic only: inferences with an arrest
  std::vector<GateLogEntry> gate_log;
  std::vector<SimEvent> log;
};

// Runs one episode; rules act greedily.
RunReport run_policy(const ScenarioSpec& scenario, const PolicySpec& policy);

// One tab-separated row per job, with a header.
std::string report_to_text(const RunReport& report);

// time, agent, choice, query bounds, contradiction flag; tab separated.
std::string gate_log_to_text(const std::vector<GateLogEntry>& log);

}  // namespace nsm
