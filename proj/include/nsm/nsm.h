#ifndef NSM_H
#define NSM_H

/* C interface to the nsm library. Objects are opaque handles released with
 * their _free function (free(NULL) is a no-op). Every fallible call returns an
 * nsm_status; on failure nsm_last_error() describes the cause until the next
 * call on the same thread. Strings returned through char** are owned by the
 * caller and released with nsm_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define NSM_API __declspec(dllexport)
#else
#define NSM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  NSM_OK = 0,
  NSM_ERR_VALIDATION = 1, /* malformed input: files, graphs, arguments */
  NSM_ERR_RUNTIME = 2,    /* failure while running valid input */
  NSM_ERR_ARGUMENT = 3    /* null handle or out-of-range index */
} nsm_status;

typedef struct nsm_graph nsm_graph;
typedef struct nsm_inference nsm_inference;
typedef struct nsm_scenario nsm_scenario;
typedef struct nsm_rules nsm_rules;
typedef struct nsm_dynamic nsm_dynamic;
typedef struct nsm_report nsm_report;
typedef struct nsm_training nsm_training;

NSM_API const char* nsm_last_error(void);
NSM_API const char* nsm_version(void);
NSM_API void nsm_string_free(char* s);

/* ---- PLNN graphs and inference ---- */

NSM_API nsm_status nsm_graph_load(const char* path, nsm_graph** out);
NSM_API nsm_status nsm_graph_parse(const char* text, nsm_graph** out);
NSM_API nsm_status nsm_graph_domain(nsm_graph** out); /* the bundled domain graph */
NSM_API void nsm_graph_free(nsm_graph* g);
NSM_API size_t nsm_graph_node_count(const nsm_graph* g); /* authored nodes, file order */
NSM_API const char* nsm_graph_node_id(const nsm_graph* g, size_t i); /* NULL when out of range */
NSM_API nsm_status nsm_graph_set_prior(nsm_graph* g, const char* id, double lower, double upper);

typedef struct {
  double epsilon;
  size_t max_iters;
  int use_j;
} nsm_infer_options;

NSM_API void nsm_infer_options_default(nsm_infer_options* o);
NSM_API nsm_status nsm_infer(const nsm_graph* g, const nsm_infer_options* o, nsm_inference** out);
NSM_API void nsm_inference_free(nsm_inference* r);
NSM_API int nsm_inference_converged(const nsm_inference* r);
NSM_API size_t nsm_inference_iterations(const nsm_inference* r);
NSM_API size_t nsm_inference_contradictions(const nsm_inference* r);
NSM_API nsm_status nsm_inference_bounds(const nsm_inference* r, const char* id, double* lower, double* upper,
                                        int* arrested);
NSM_API nsm_status nsm_inference_trace(const nsm_inference* r, char** out);
NSM_API nsm_status nsm_inference_dot(const nsm_graph* g, const nsm_inference* r, char** out);

/* ---- rules ---- */

NSM_API nsm_status nsm_rules_load(const char* path, nsm_rules** out);
NSM_API nsm_status nsm_rules_reference(nsm_rules** out);
NSM_API void nsm_rules_free(nsm_rules* r);
NSM_API nsm_status nsm_rules_serialize(const nsm_rules* r, char** out);
/* One line per action class, "head ← literal ∧ ...". */
NSM_API nsm_status nsm_rules_extract(const nsm_rules* r, double threshold, char** out);

/* ---- simulation ---- */

NSM_API nsm_status nsm_scenario_load(const char* path, nsm_scenario** out);
NSM_API void nsm_scenario_free(nsm_scenario* s);
NSM_API nsm_status nsm_scenario_set_seed(nsm_scenario* s, uint64_t seed);

NSM_API nsm_status nsm_dynamic_load(const char* path, nsm_dynamic** out);
NSM_API void nsm_dynamic_free(nsm_dynamic* d);

/* Gate decision for observed bounds on the dynamic config's graph: 1 for
 * uniform sharing, 0 for the learned rules. */
NSM_API nsm_status nsm_dynamic_gate(const nsm_dynamic* d, const char* const* ids, const double* lowers,
                                    const double* uppers, size_t n, int* uniform, double* lower, double* upper);

NSM_API nsm_status nsm_run_uniform(const nsm_scenario* s, nsm_report** out);
NSM_API nsm_status nsm_run_rules(const nsm_scenario* s, const nsm_rules* r, nsm_report** out);
NSM_API nsm_status nsm_run_dynamic(const nsm_scenario* s, const nsm_dynamic* d, nsm_report** out);
NSM_API void nsm_report_free(nsm_report* r);
NSM_API nsm_status nsm_report_makespan(const nsm_report* r, const char* job, double* out);
NSM_API nsm_status nsm_report_text(const nsm_report* r, char** out);
NSM_API nsm_status nsm_report_events(const nsm_report* r, char** out);
NSM_API nsm_status nsm_report_gate_log(const nsm_report* r, char** out);

/* ---- training ---- */

typedef struct {
  int episodes;
  int batch;
  double lr;
  double gamma;
  uint64_t seed;
} nsm_train_options;

NSM_API void nsm_train_options_default(nsm_train_options* o);
NSM_API nsm_status nsm_train(const nsm_scenario* s, const nsm_train_options* o, nsm_training** out);
NSM_API void nsm_training_free(nsm_training* t);
NSM_API size_t nsm_training_rule_sets(const nsm_training* t); /* 1 when rules are shared */
NSM_API nsm_status nsm_training_rules(const nsm_training* t, size_t i, nsm_rules** out);
NSM_API nsm_status nsm_training_curve(const nsm_training* t, char** out);

#ifdef __cplusplus
}
#endif

#endif
