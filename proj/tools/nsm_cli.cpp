// nsm: command-line front end over the C API.

#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nsm/nsm.h"

namespace {

// Carries a status out of a command; the message is nsm_last_error() unless given.
struct Failure {
  nsm_status status;
  std::string message;
};

void check(nsm_status s) {
  if (s != NSM_OK) throw Failure{s, nsm_last_error()};
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
template <class T, void (*Free)(T*)>
using Handle = std::unique_ptr<T, Deleter<T, Free>>;

using Graph = Handle<nsm_graph, nsm_graph_free>;
using Inference = Handle<nsm_inference, nsm_inference_free>;
using Scenario = Handle<nsm_scenario, nsm_scenario_free>;
using Rules = Handle<nsm_rules, nsm_rules_free>;
using Dynamic = Handle<nsm_dynamic, nsm_dynamic_free>;
using Report = Handle<nsm_report, nsm_report_free>;
using Training = Handle<nsm_training, nsm_training_free>;

std::string take(char* s) {
  std::string out(s ? s : "");
  nsm_string_free(s);
  return out;
}

template <class F>
std::string text(F&& f) {
  char* s = nullptr;
  check(f(&s));
  return take(s);
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f || !(f << body)) throw Failure{NSM_ERR_RUNTIME, path + ": cannot write"};
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);)
    if (!item.empty()) out.push_back(item);
  return out;
}

Scenario load_scenario(const std::string& path, std::optional<uint64_t> seed) {
  nsm_scenario* s = nullptr;
  check(nsm_scenario_load(path.c_str(), &s));
  Scenario out(s);
  if (seed) check(nsm_scenario_set_seed(s, *seed));
  return out;
}

Rules load_rules(const std::string& path) {
  nsm_rules* r = nullptr;
  check(nsm_rules_load(path.c_str(), &r));
  return Rules(r);
}

Dynamic load_dynamic(const std::string& path) {
  nsm_dynamic* d = nullptr;
  check(nsm_dynamic_load(path.c_str(), &d));
  return Dynamic(d);
}

// ---- infer ----

struct InferArgs {
  std::string graph;
  double epsilon = 1e-4;
  size_t max_iters = 1000;
  bool use_j = true;
  std::string query;
  std::string trace;
  std::string dot;
};

void cmd_infer(const InferArgs& a) {
  nsm_graph* raw = nullptr;
  check(nsm_graph_load(a.graph.c_str(), &raw));
  Graph g(raw);
  nsm_infer_options o;
  nsm_infer_options_default(&o);
  o.epsilon = a.epsilon;
  o.max_iters = a.max_iters;
  o.use_j = a.use_j ? 1 : 0;
  nsm_inference* res = nullptr;
  check(nsm_infer(g.get(), &o, &res));
  Inference r(res);

  std::vector<std::string> ids = split(a.query, ',');
  if (ids.empty())
    for (size_t i = 0; i < nsm_graph_node_count(g.get()); ++i) ids.emplace_back(nsm_graph_node_id(g.get(), i));
  const bool star = nsm_inference_contradictions(r.get()) > 0;
  std::string out;
  for (const auto& id : ids) {
    double l = 0, u = 0;
    check(nsm_inference_bounds(r.get(), id.c_str(), &l, &u, nullptr));
    char buf[64];
    std::snprintf(buf, sizeof buf, "(%.4f, %.4f)", l, u);
    out += id + ": " + buf + (star ? "*" : "") + "\n";
  }
  if (!a.trace.empty()) write_file(a.trace, text([&](char** s) { return nsm_inference_trace(r.get(), s); }));
  if (!a.dot.empty()) write_file(a.dot, text([&](char** s) { return nsm_inference_dot(g.get(), r.get(), s); }));
  std::fputs(out.c_str(), stdout);
  if (!nsm_inference_converged(r.get()))
    std::fprintf(stderr, "warning: no fixpoint after %zu iterations\n", nsm_inference_iterations(r.get()));
}

// ---- sim / dynamic ----

struct SimArgs {
  std::string scenario;
  std::string policy = "uniform";
  std::optional<uint64_t> seed;
  std::string report;
  std::string events;
  std::string gate_log;
};

Report run_policy(const nsm_scenario* s, const std::string& policy) {
  nsm_report* r = nullptr;
  if (policy == "uniform") {
    check(nsm_run_uniform(s, &r));
  } else if (policy.rfind("rules:", 0) == 0) {
    auto rules = load_rules(policy.substr(6));
    check(nsm_run_rules(s, rules.get(), &r));
  } else if (policy.rfind("dynamic:", 0) == 0) {
    auto d = load_dynamic(policy.substr(8));
    check(nsm_run_dynamic(s, d.get(), &r));
  } else {
    throw Failure{NSM_ERR_VALIDATION, "unknown policy '" + policy + "' (uniform, rules:FILE, dynamic:CONF)"};
  }
  return Report(r);
}

void emit_run(const SimArgs& a, const Report& r, const std::string& report) {
  if (!a.events.empty()) write_file(a.events, text([&](char** s) { return nsm_report_events(r.get(), s); }));
  if (!a.gate_log.empty()) write_file(a.gate_log, text([&](char** s) { return nsm_report_gate_log(r.get(), s); }));
  if (!a.report.empty()) write_file(a.report, report);
  std::fputs(report.c_str(), stdout);
}

void cmd_sim(const SimArgs& a) {
  auto s = load_scenario(a.scenario, a.seed);
  auto r = run_policy(s.get(), a.policy);
  emit_run(a, r, text([&](char** t) { return nsm_report_text(r.get(), t); }));
}

// Uniform control, static rules and gated rules on one scenario. The event
// log and gate log are those of the gated run.
void cmd_dynamic(const SimArgs& a, const std::string& conf) {
  auto s = load_scenario(a.scenario, a.seed);
  auto d = load_dynamic(conf);
  nsm_report *u = nullptr, *st = nullptr, *dy = nullptr;
  check(nsm_run_uniform(s.get(), &u));
  Report ru(u);
  // The static row uses the rules the gate hands control to unless overridden.
  nsm_rules* pub = nullptr;
  if (a.policy.empty()) check(nsm_rules_reference(&pub));
  Rules rules = a.policy.empty() ? Rules(pub) : load_rules(a.policy);
  check(nsm_run_rules(s.get(), rules.get(), &st));
  Report rs(st);
  check(nsm_run_dynamic(s.get(), d.get(), &dy));
  Report rd(dy);
  std::string report = text([&](char** t) { return nsm_report_text(ru.get(), t); });
  for (const auto* r : {rs.get(), rd.get()}) {
    const auto rows = text([&](char** t) { return nsm_report_text(r, t); });
    report += rows.substr(rows.find('\n') + 1);
  }
  emit_run(a, rd, report);
}

// ---- train ----

struct TrainArgs {
  std::string scenario;
  nsm_train_options opt{};
  std::string out;
  std::string curve;
};

void cmd_train(const TrainArgs& a) {
  auto s = load_scenario(a.scenario, std::nullopt);
  nsm_training* t = nullptr;
  check(nsm_train(s.get(), &a.opt, &t));
  Training tr(t);
  const size_t n = nsm_training_rule_sets(tr.get());
  for (size_t i = 0; i < n; ++i) {
    nsm_rules* r = nullptr;
    check(nsm_training_rules(tr.get(), i, &r));
    Rules rules(r);
    const auto path = n == 1 ? a.out : a.out + "." + std::to_string(i);
    write_file(path, text([&](char** s) { return nsm_rules_serialize(rules.get(), s); }));
    std::fputs(text([&](char** s) { return nsm_rules_extract(rules.get(), 0.1, s); }).c_str(), stdout);
  }
  if (!a.curve.empty()) write_file(a.curve, text([&](char** s) { return nsm_training_curve(tr.get(), s); }));
}

// ---- extract ----

void cmd_extract(const std::string& weights, double threshold) {
  auto r = load_rules(weights);
  std::fputs(text([&](char** s) { return nsm_rules_extract(r.get(), threshold, s); }).c_str(), stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic logic inference, HSoC token simulation and rule training"};
  app.require_subcommand(1);
  app.set_version_flag("--version", nsm_version());

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "Infer bounds on a PLNN graph");
  infer->add_option("--graph", ia.graph, "Graph file")->required();
  infer->add_option("--epsilon", ia.epsilon, "Convergence threshold")->capture_default_str();
  infer->add_option("--max-iters", ia.max_iters, "Iteration cap")->capture_default_str();
  infer->add_option("--use-j", ia.use_j, "Apply correlation ranges (on|off)")->capture_default_str();
  infer->add_option("--query", ia.query, "Comma-separated node ids (default: all)");
  infer->add_option("--trace", ia.trace, "Write the tightening trace here");
  infer->add_option("--dot", ia.dot, "Write a Graphviz rendering here");

  SimArgs sa;
  uint64_t sim_seed = 0;
  auto* sim = app.add_subcommand("sim", "Run one episode under a policy");
  sim->add_option("--scenario", sa.scenario, "Scenario file")->required();
  sim->add_option("--policy", sa.policy, "uniform | rules:FILE | dynamic:CONF")->capture_default_str();
  auto* sim_seed_opt = sim->add_option("--seed", sim_seed, "Override the scenario seed");
  sim->add_option("--report", sa.report, "Write the report here");
  sim->add_option("--events", sa.events, "Write the event log here");
  sim->add_option("--gate-log", sa.gate_log, "Write gate decisions here (dynamic policy)");

  SimArgs da;
  std::string conf;
  uint64_t dyn_seed = 0;
  da.policy.clear();
  auto* dyn = app.add_subcommand("dynamic", "Compare uniform, static rules and PLNN-gated rules");
  dyn->add_option("--scenario", da.scenario, "Scenario file")->required();
  dyn->add_option("--config", conf, "Dynamic policy config")->required();
  dyn->add_option("--rules", da.policy, "Weights for the static row (default: reference)");
  auto* dyn_seed_opt = dyn->add_option("--seed", dyn_seed, "Override the scenario seed");
  dyn->add_option("--report", da.report, "Write the comparison rows here");
  dyn->add_option("--events", da.events, "Write the gated run's event log here");
  dyn->add_option("--gate-log", da.gate_log, "Write gate decisions here");

  TrainArgs ta;
  nsm_train_options_default(&ta.opt);
  auto* tr = app.add_subcommand("train", "Train rule weights with policy gradients");
  tr->add_option("--scenario", ta.scenario, "Scenario file")->required();
  tr->add_option("--episodes", ta.opt.episodes, "Episodes")->capture_default_str();
  tr->add_option("--batch", ta.opt.batch, "Episodes per update")->capture_default_str();
  tr->add_option("--lr", ta.opt.lr, "Initial learning rate")->capture_default_str();
  tr->add_option("--gamma", ta.opt.gamma, "Discount per tick")->capture_default_str();
  tr->add_option("--seed", ta.opt.seed, "Seed")->capture_default_str();
  tr->add_option("--out", ta.out, "Weights output")->required();
  tr->add_option("--curve", ta.curve, "Learning curve output");

  std::string weights;
  double threshold = 0.1;
  auto* ex = app.add_subcommand("extract", "Print the rules a weight table encodes");
  ex->add_option("--weights", weights, "Weights file")->required();
  ex->add_option("--threshold", threshold, "Minimum literal weight")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*infer) cmd_infer(ia);
    if (*sim) {
      if (*sim_seed_opt) sa.seed = sim_seed;
      cmd_sim(sa);
    }
    if (*dyn) {
      if (*dyn_seed_opt) da.seed = dyn_seed;
      cmd_dynamic(da, conf);
    }
    if (*tr) cmd_train(ta);
    if (*ex) cmd_extract(weights, threshold);
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    return f.status == NSM_ERR_RUNTIME ? 2 : 1;
  }
  return 0;
}
