#include "nsm/pipeline.hpp"

#include <cstdio>

#include "nsm/error.hpp"
#include "nsm/policy.hpp"

namespace nsm {

namespace {

NodeSpec prop(const std::string& id) { return {id, std::nullopt, {}, std::nullopt, std::nullopt, std::nullopt}; }

NodeSpec op(const std::string& id, OpKind k, std::vector<std::string> operands,
            std::optional<Bounds> b = std::nullopt, std::optional<CorrelationClass> c = std::nullopt) {
  NodeSpec n{id, k, std::move(operands), b, std::nullopt, c};
  if (c) n.j = correlation_to_j(*c);
  return n;
}

}  // namespace

GraphSpec build_domain_graph() {
  using C = CorrelationClass;
  GraphSpec g;
  for (const char* v : {"HighPerfMode", "PlentyOfTokens", "LightLoad", "OtherDagTypeCI", "OtherDagTypeMI",
                        "HigherPriorityDag", "LowCongestion", "EarlyCompletion"})
    g.nodes.push_back(prop(v));
  // What drives what, each edge tagged with its pairwise correlation class.
  g.nodes.push_back(op("HPM_POT", OpKind::Implies, {"HighPerfMode", "PlentyOfTokens"}, Bounds{0.95, 1}, C::HC));
  g.nodes.push_back(op("LL_POT", OpKind::Implies, {"LightLoad", "PlentyOfTokens"}, Bounds{0.8, 1}, C::HC));
  g.nodes.push_back(op("HPD_POT", OpKind::Implies, {"HigherPriorityDag", "PlentyOfTokens"}, Bounds{0.6, 1}, C::ID));
  g.nodes.push_back(op("POT_EC", OpKind::Implies, {"PlentyOfTokens", "EarlyCompletion"}, Bounds{0.7, 1}, C::HC));
  g.nodes.push_back(op("HPD_EC", OpKind::Implies, {"HigherPriorityDag", "EarlyCompletion"}, Bounds{0.6, 1}, C::HC));
  g.nodes.push_back(op("LC_EC", OpKind::Implies, {"LowCongestion", "EarlyCompletion"}, Bounds{0.7, 1}, C::HC));
  g.nodes.push_back(op("ODTCI_LC", OpKind::Implies, {"OtherDagTypeCI", "LowCongestion"}, Bounds{0.7, 1}, C::HC));
  // Memory-bound neighbours predict congestion: MI and LC are anti-correlated,
  // so MI and not-LC are highly correlated.
  g.nodes.push_back(op("NotLC", OpKind::Not, {"LowCongestion"}));
  g.nodes.push_back(op("ODTMI_NotLC", OpKind::Implies, {"OtherDagTypeMI", "NotLC"}, Bounds{0.95, 1}, C::HC));
  // Explanations: plenty of tokens comes from one of its causes, and an early
  // completion needs tokens or a quiet network.
  g.nodes.push_back(op("TokenSources", OpKind::Or, {"HighPerfMode", "LightLoad", "HigherPriorityDag"}));
  g.nodes.push_back(op("POT_Sources", OpKind::Implies, {"PlentyOfTokens", "TokenSources"}, Bounds{1, 1}));
  g.nodes.push_back(op("FastPath", OpKind::Or, {"PlentyOfTokens", "LowCongestion"}));
  g.nodes.push_back(op("EC_FastPath", OpKind::Implies, {"EarlyCompletion", "FastPath"}, Bounds{1, 1}));
  // Pairs with no causal story that still carry a correlation.
  g.nodes.push_back(op("HPM_LL", OpKind::And, {"HighPerfMode", "LightLoad"}, std::nullopt, C::AC));
  g.nodes.push_back(op("HPD_ODTCI", OpKind::And, {"HigherPriorityDag", "OtherDagTypeCI"}, std::nullopt, C::ID));
  return g;
}

std::string_view to_string(PolicyChoice c) { return c == PolicyChoice::Uniform ? "uniform" : "rules"; }

std::string_view to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::Uniform: return "uniform";
    case PolicyKind::Rules: return "rules";
    case PolicyKind::Dynamic: return "dynamic";
  }
  return "?";
}

void GateConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("gate threshold must lie in (0,1)");
  if (query.empty()) throw ValidationError("gate query node is empty");
}

void DynamicPolicyConfig::validate() const {
  gate.validate();
  rules.validate();
  if (refresh < 1) throw ValidationError("refresh must be >= 1");
  const auto g = PlnnGraph::build(graph);
  if (!g.index_of(gate.query)) throw ValidationError("query node '" + gate.query + "' is not in the graph");
}

GateDecision dynamic_gate(const PlnnGraph& graph, const std::map<std::string, Bounds>& observed,
                          const GateConfig& config) {
  config.validate();
  if (!graph.index_of(config.query)) throw ValidationError("query node '" + config.query + "' is not in the graph");
  PlnnGraph g = graph;
  for (const auto& [id, b] : observed) {
    const auto i = g.index_of(id);
    if (i && !g.nodes()[*i].is_operational()) g.set_prior(id, b);
  }
  const auto result = infer(g, config.infer);
  GateDecision d;
  d.query = result.nodes.at(config.query).bounds;
  d.contradiction = result.has_contradiction();
  d.choice = d.query.lower >= config.tau ? PolicyChoice::Uniform : PolicyChoice::LearnedRules;
  return d;
}

RunReport run_policy(const ScenarioSpec& scenario, const PolicySpec& policy) {
  RunReport rep;
  rep.scenario = scenario.name;
  rep.policy = std::string(to_string(policy.kind));

  std::optional<PlnnGraph> graph;
  if (policy.kind == PolicyKind::Dynamic) {
    policy.dynamic.validate();
    graph = PlnnGraph::build(policy.dynamic.graph);
  }
  // Per agent: the last gate decision and decisions since it was made.
  std::vector<std::optional<GateDecision>> cached(scenario.pes.size());
  std::vector<int> since(scenario.pes.size(), 0);

  const PolicyFn fn = [&](const AgentObservation& obs) -> Decision {
    ++rep.decisions;
    switch (policy.kind) {
      case PolicyKind::Uniform:
        return uniform_decision(obs, policy.bins);
      case PolicyKind::Rules:
        return rules_decision(policy.rules, obs);
      case PolicyKind::Dynamic: {
        auto& gate = cached[obs.agent];
        if (!gate || ++since[obs.agent] >= policy.dynamic.refresh) {
          gate = dynamic_gate(*graph, obs.env, policy.dynamic.gate);
          since[obs.agent] = 0;
          if (gate->contradiction) ++rep.contradictions;
        }
        rep.gate_log.push_back({obs.time, obs.agent_id, *gate});
        if (gate->choice == PolicyChoice::Uniform) {
          ++rep.uniform_decisions;
          return uniform_decision(obs, policy.dynamic.rules.bins);
        }
        return rules_decision(policy.dynamic.rules, obs);
      }
    }
    return {};
  };
  auto log = run_episode(scenario, fn);
  rep.makespan = log.makespan;
  rep.events = log.events.size();
  rep.log = std::move(log.events);
  return rep;
}

std::string report_to_text(const RunReport& r) {
  std::string out = "scenario\tpolicy\tjob\tmakespan\tevents\tdecisions\tuniform_decisions\tcontradictions\n";
  char buf[64];
  for (const auto& [job, m] : r.makespan) {
    std::snprintf(buf, sizeof buf, "%.17g", m);
    out += r.scenario + "\t" + r.policy + "\t" + job + "\t" + buf + "\t" + std::to_string(r.events) + "\t" +
           std::to_string(r.decisions) + "\t" + std::to_string(r.uniform_decisions) + "\t" +
           std::to_string(r.contradictions) + "\n";
  }
  return out;
}

std::string gate_log_to_text(const std::vector<GateLogEntry>& log) {
  std::string out = "time\tagent\tchoice\tlower\tupper\tcontradiction\n";
  char buf[160];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%.17g\t%s\t%s\t%.6f\t%.6f\t%d\n", e.time, e.agent.c_str(),
                  std::string(to_string(e.decision.choice)).c_str(), e.decision.query.lower, e.decision.query.upper,
                  e.decision.contradiction ? 1 : 0);
    out += buf;
  }
  return out;
}

}  // namespace nsm
