#include "nsm/nsm.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "nsm/error.hpp"
#include "nsm/io.hpp"
#include "nsm/pipeline.hpp"
#include "nsm/train.hpp"

struct nsm_graph {
  nsm::GraphSpec spec;
  nsm::PlnnGraph graph;
};
struct nsm_inference {
  nsm::InferenceResult result;
};
struct nsm_scenario {
  nsm::ScenarioSpec spec;
};
struct nsm_rules {
  nsm::RuleSet rules;
};
struct nsm_dynamic {
  nsm::DynamicPolicyConfig config;
  nsm::PlnnGraph graph;
};
struct nsm_report {
  nsm::RunReport report;
};
struct nsm_training {
  nsm::TrainResult result;
};

namespace {

thread_local std::string last_error;

nsm_status fail(nsm_status s, const std::string& msg) {
  last_error = msg;
  return s;
}

// Runs `f`, mapping exceptions onto status codes.
template <class F>
nsm_status guarded(F&& f) {
  last_error.clear();
  try {
    f();
    return NSM_OK;
  } catch (const nsm::ValidationError& e) {
    return fail(NSM_ERR_VALIDATION, e.what());
  } catch (const nsm::RuntimeError& e) {
    return fail(NSM_ERR_RUNTIME, e.what());
  } catch (const std::bad_alloc&) {
    return fail(NSM_ERR_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return fail(NSM_ERR_RUNTIME, e.what());
  }
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

template <class T>
bool missing(const T* p, const char* what) {
  if (p) return false;
  last_error = std::string(what) + " is null";
  return true;
}

nsm_status emit(const std::string& text, char** out) {
  if (missing(out, "output")) return NSM_ERR_ARGUMENT;
  return guarded([&] { *out = dup(text); });
}

nsm_status run(const nsm_scenario* s, const nsm::PolicySpec& policy, nsm_report** out) {
  if (missing(s, "scenario") || missing(out, "output")) return NSM_ERR_ARGUMENT;
  return guarded([&] { *out = new nsm_report{nsm::run_policy(s->spec, policy)}; });
}

}  // namespace

extern "C" {

const char* nsm_last_error(void) { return last_error.c_str(); }
const char* nsm_version(void) { return "0.1.0"; }
void nsm_string_free(char* s) { std::free(s); }

// ---- graphs ----

nsm_status nsm_graph_load(const char* path, nsm_graph** out) {
  if (missing(path, "path") || missing(out, "output")) return NSM_ERR_ARGUMENT;
  return guarded([&] {
    auto spec = nsm::load_graph(path);
    auto g = nsm::PlnnGraph::build(spec);
    *out = new nsm_graph{std::move(spec), std::move(g)};
  });
}

nsm_status nsm_graph_parse(const char* text, nsm_graph** out) {
  if (missing(text, "text") || missing(out, "output")) return NSM_ERR_ARGUMENT;
  return guarded([&] {
    auto spec = nsm::parse_graph(text);
    auto g = nsm::PlnnGraph::build(spec);
    *out = new nsm_graph{std::move(spec), std::move(g)};
  });
}

nsm_status nsm_graph_domain(nsm_graph** out) {
  if (missing(out, "output")) return NSM_ERR_ARGUMENT;
  return guarded([&] {
    auto spec = nsm::build_domain_graph();
    auto g = nsm::PlnnGraph::build(spec);
    *out = new nsm_graph{std::move(spec), std::move(g)};
  });
}

void nsm_graph_free(nsm_graph* g) { delete g; }

size_t nsm_graph_node_count(const nsm_graph* g) { return g ? g->spec.nodes.size() : 0; }

const char* nsm_graph_node_id(const nsm_graph* g, size_t i) {
  return g && i < g->spec.nodes.size() ? g->spec.nodes[i].id.c_str() : nullptr;
}

nsm_status nsm_graph_set_prior(nsm_graph* g, const char* id, double lower, double upper) {
  if (missing(g, "graph") || missing(id, "id")) return NSM_ERR_ARGUMENT;
  return guarded([&] { g->graph.set_prior(id, {lower, upper}); });
}

void nsm_infer_options_default(nsm_infer_options* o) {
  if (!o) return;
  const nsm::InferOptions d;
  o->epsilon = d.epsilon;
  o->max_iters = d.max_iters;
  o->use_j = d.use_j ? 1 : 0;
}

nsm_status nsm_infer(const nsm_graph* g, const nsm_infer_options* o, nsm_inference** out) {
  if (missing(g, "graph") || missing(out, "output")) return NSM_ERR_ARGUMENT;
  return guarded([&] {
    nsm::InferOptions opt;
    if (o) {
      if (!(o->epsilon > 0.0)) throw nsm::ValidationError("epsilon must be positive");
      if (o->max_iters == 0) throw nsm::ValidationError("max-iters must be at least 1");
      opt.epsilon = o->epsilon;
      opt.max_iters = o->max_iters;
      opt.use_j = o->use_j != 0;
    }
    *out = new nsm_inference{nsm::infer(g->graph, opt)};
  });
}

void nsm_inference_free(nsm_inference* r) { delete r; }
int nsm_inference_converged(const nsm_inference* r) { return r && r->result.converged ? 1 : 0; }
size_t nsm_inference_iterations(const nsm_inference* r) { return r ? r->result.iterations : 0; }
size_t nsm_inference_contradictions(const nsm_inference* r) { return r ? r->result.contradictions.size() : 0; }

nsm_status nsm_inference_bounds(const nsm_inference* r, const char* id, double* lower, double* upper,
                                int* arrested) {
  if (missing(r, "inference") || missing(id, "id")) return NSM_ERR_ARGUMENT;
  const auto it = r->result.nodes.find(id);
  if (it == r->result.nodes.end()) return fail(NSM_ERR_VALIDATION, std::string("unknown node '") + id + "'");
  if (lower) *lower = it->second.bounds.lower;
  if (upper) *upper = it->second.bounds.upper;
  if (arrested) *arrested = it->second.arrested ? 1 : 0;
  last_error.clear();
  return NSM_OK;
}

nsm_status nsm_inference_trace(const nsm_inference* r, char** out) {
  if (missing(r, "inference")) return NSM_ERR_ARGUMENT;
  return emit(nsm::trace_to_text(r->result.trace), out);
}

nsm_status nsm_inference_dot(const nsm_graph* g, const nsm_inference* r, char** out) {
  if (missing(g, "graph") || missing(r, "inference")) return NSM_ERR_ARGUMENT;
  return emit(nsm::to_dot(g->graph, r->result), out);
}

// ---- rules ----

nsm_status nsm_rules_load(const char* path, nsm_rules** out) {
  if (missing(path, "path") || missing(out, "output")) return NSM_ERR_ARGUMENT;
  return guarded([&] { *out = new nsm_rules{nsm::load_weights(path)}; });
}

nsm_status nsm_rules_reference(nsm_rules** out) {
  if (missing(out, "output")) return NSM_ERR_ARGUMENT;
  return guarded([&] { *out = new nsm_rules{nsm::RuleSet::reference()}; });
}

void nsm_rules_free(nsm_rules* r) { delete r; }

nsm_status nsm_rules_serialize(const nsm_rules* r, char** out) {
  if (missing(r, "rules")) return NSM_ERR_ARGUMENT;
  return emit(nsm::serialize_weights(r->rules), out);
}

nsm_status nsm_rules_extract(const nsm_rules* r, double threshold, char** out) {
  if (missing(r, "rules") || missing(out, "output")) return NSM_ERR_ARGUMENT;
  return guarded([&] {
    if (!(threshold >= 0.0)) throw nsm::ValidationError("threshold must be non-negative");
    std::string text;
    for (const auto& rule : nsm::extract_rules(r->rules, threshold)) text += rule.to_string() + "\n";
    *out = dup(text);
  });
}

// ---- simulation ----

nsm_status nsm_scenario_load(const char* path, nsm_scenario** out) {
  if (missing(path, "path") || missing(out, "output")) return NSM_ERR_ARGUMENT;
  return guarded([&] { *out = new nsm_scenario{nsm::load_scenario(path)}; });
}

void nsm_scenario_free(nsm_scenario* s) { delete s; }

nsm_status nsm_scenario_set_seed(nsm_scenario* s, uint64_t seed) {
  if (missing(s, "scenario")) return NSM_ERR_ARGUMENT;
  s->spec.seed = seed;
  last_error.clear();
  return NSM_OK;
}

nsm_status nsm_dynamic_load(const char* path, nsm_dynamic** out) {
  if (missing(path, "path") || missing(out, "output")) return NSM_ERR_ARGUMENT;
  return guarded([&] {
    auto c = nsm::load_dynamic_config(path);
    auto g = nsm::PlnnGraph::build(c.graph);
    *out = new nsm_dynamic{std::move(c), std::move(g)};
  });
}

void nsm_dynamic_free(nsm_dynamic* d) { delete d; }

nsm_status nsm_dynamic_gate(const nsm_dynamic* d, const char* const* ids, const double* lowers,
                            const double* uppers, size_t n, int* uniform, double* lower, double* upper) {
  if (missing(d, "dynamic config") || missing(uniform, "output")) return NSM_ERR_ARGUMENT;
  if (n > 0 && (missing(ids, "ids") || missing(lowers, "lowers") || missing(uppers, "uppers")))
    return NSM_ERR_ARGUMENT;
  return guarded([&] {
    std::map<std::string, nsm::Bounds> observed;
    for (size_t i = 0; i < n; ++i) {
      const nsm::Bounds b{lowers[i], uppers[i]};
      if (!ids[i] || !b.valid()) throw nsm::ValidationError("invalid observation " + std::to_string(i));
      observed[ids[i]] = b;
    }
    const auto dec = nsm::dynamic_gate(d->graph, observed, d->config.gate);
    *uniform = dec.choice == nsm::PolicyChoice::Uniform ? 1 : 0;
    if (lower) *lower = dec.query.lower;
    if (upper) *upper = dec.query.upper;
  });
}

nsm_status nsm_run_uniform(const nsm_scenario* s, nsm_report** out) { return run(s, {}, out); }

nsm_status nsm_run_rules(const nsm_scenario* s, const nsm_rules* r, nsm_report** out) {
  if (missing(r, "rules")) return NSM_ERR_ARGUMENT;
  nsm::PolicySpec p;
  p.kind = nsm::PolicyKind::Rules;
  p.rules = r->rules;
  return run(s, p, out);
}

nsm_status nsm_run_dynamic(const nsm_scenario* s, const nsm_dynamic* d, nsm_report** out) {
  if (missing(d, "dynamic config")) return NSM_ERR_ARGUMENT;
  nsm::PolicySpec p;
  p.kind = nsm::PolicyKind::Dynamic;
  p.dynamic = d->config;
  return run(s, p, out);
}

void nsm_report_free(nsm_report* r) { delete r; }

nsm_status nsm_report_makespan(const nsm_report* r, const char* job, double* out) {
  if (missing(r, "report") || missing(job, "job") || missing(out, "output")) return NSM_ERR_ARGUMENT;
  const auto it = r->report.makespan.find(job);
  if (it == r->report.makespan.end()) return fail(NSM_ERR_VALIDATION, std::string("unknown job '") + job + "'");
  *out = it->second;
  last_error.clear();
  return NSM_OK;
}

nsm_status nsm_report_text(const nsm_report* r, char** out) {
  if (missing(r, "report")) return NSM_ERR_ARGUMENT;
  return emit(nsm::report_to_text(r->report), out);
}

nsm_status nsm_report_events(const nsm_report* r, char** out) {
  if (missing(r, "report")) return NSM_ERR_ARGUMENT;
  return emit(nsm::events_to_text(r->report.log), out);
}

nsm_status nsm_report_gate_log(const nsm_report* r, char** out) {
  if (missing(r, "report")) return NSM_ERR_ARGUMENT;
  return emit(nsm::gate_log_to_text(r->report.gate_log), out);
}

// ---- training ----

void nsm_train_options_default(nsm_train_options* o) {
  if (!o) return;
  const nsm::TrainerConfig d;
  o->episodes = d.episodes;
  o->batch = d.batch;
  o->lr = d.optimizer.lr;
  o->gamma = d.gradient.gamma;
  o->seed = d.seed;
}

nsm_status nsm_train(const nsm_scenario* s, const nsm_train_options* o, nsm_training** out) {
  if (missing(s, "scenario") || missing(out, "output")) return NSM_ERR_ARGUMENT;
  return guarded([&] {
    nsm::TrainerConfig c;
    if (o) {
      c.episodes = o->episodes;
      c.batch = o->batch;
      c.optimizer.lr = o->lr;
      c.gradient.gamma = o->gamma;
      c.seed = o->seed;
    }
    *out = new nsm_training{nsm::train(s->spec, c)};
  });
}

void nsm_training_free(nsm_training* t) { delete t; }
size_t nsm_training_rule_sets(const nsm_training* t) { return t ? t->result.rules.size() : 0; }

nsm_status nsm_training_rules(const nsm_training* t, size_t i, nsm_rules** out) {
  if (missing(t, "training") || missing(out, "output")) return NSM_ERR_ARGUMENT;
  if (i >= t->result.rules.size()) return fail(NSM_ERR_ARGUMENT, "rule set index out of range");
  return guarded([&] { *out = new nsm_rules{t->result.rules[i]}; });
}

nsm_status nsm_training_curve(const nsm_training* t, char** out) {
  if (missing(t, "training")) return NSM_ERR_ARGUMENT;
  return emit(nsm::curve_to_text(t->result.curve), out);
}

}  // extern "C"
