#ifndef RESEST_H
#define RESEST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum ResestStatus {
  RESEST_STATUS_OK = 0,
  /**
   * Null pointer, bad index or non-UTF-8 text.
   */
  RESEST_STATUS_INVALID_ARGUMENT = 1,
  RESEST_STATUS_PARSE_ERROR = 2,
  /**
   * The graph fails the requested robustness test.
   */
  RESEST_STATUS_NOT_ROBUST = 3,
  /**
   * A hypothesis of the guarantees does not hold.
   */
  RESEST_STATUS_CONFIG_INVALID = 4,
  RESEST_STATUS_DOMAIN_ERROR = 5,
  /**
   * A panic was caught at the boundary.
   */
  RESEST_STATUS_INTERNAL = 6,
} ResestStatus;

typedef struct ResestGraph ResestGraph;

typedef struct ResestMssReport ResestMssReport;

typedef struct ResestScenario ResestScenario;

typedef struct ResestTrace ResestTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Free with
 * `resest_string_free`.
 */
char *resest_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void resest_string_free(char *s);

/**
 * Library version as a static string.
 */
const char *resest_version(void);

/**
 * Parses an edge list; `nodes` of 0 infers the node count.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` writable.
 */
enum ResestStatus resest_graph_parse(const char *text, size_t nodes, struct ResestGraph **out);

/**
 * # Safety
 * `out` must be writable.
 */
enum ResestStatus resest_graph_complete(size_t nodes, struct ResestGraph **out);

/**
 * # Safety
 * `g` must be null or a live graph handle.
 */
void resest_graph_free(struct ResestGraph *g);

/**
 * Node count, or 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live graph handle.
 */
size_t resest_graph_node_count(const struct ResestGraph *g);

/**
 * Writes whether `g` is strongly `r`-robust with respect to `sources`.
 * A negative answer is reported as `Ok` with `*out = false`.
 *
 * # Safety
 * `sources` must point to `len` ids and `out` must be writable.
 */
enum ResestStatus resest_check_robust(const struct ResestGraph *g,
                                      const size_t *sources,
                                      size_t len,
                                      size_t r,
                                      bool *out);

/**
 * Builds the estimation DAG for `f` adversaries and writes it as JSON.
 *
 * # Safety
 * `sources` must point to `len` ids and `out_json` must be writable.
 */
enum ResestStatus resest_build_medag_json(const struct ResestGraph *g,
                                          const size_t *sources,
                                          size_t len,
                                          size_t f,
                                          char **out_json);

/**
 * # Safety
 * `toml` must be a NUL-terminated string and `out` writable.
 */
enum ResestStatus resest_scenario_parse(const char *toml, struct ResestScenario **out);

/**
 * Loads a scenario shipped with the library.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` writable.
 */
enum ResestStatus resest_scenario_bundled(const char *name, struct ResestScenario **out);

/**
 * # Safety
 * `s` must be null or a live scenario handle.
 */
void resest_scenario_free(struct ResestScenario *s);

/**
 * # Safety
 * `s` must be a live scenario handle.
 */
enum ResestStatus resest_scenario_set_seed(struct ResestScenario *s, uint64_t seed);

/**
 * Validates the scenario and runs one simulation.
 *
 * # Safety
 * `s` must be a live scenario handle and `out` writable.
 */
enum ResestStatus resest_simulate(const struct ResestScenario *s, struct ResestTrace **out);

/**
 * # Safety
 * `t` must be null or a live trace handle.
 */
void resest_trace_free(struct ResestTrace *t);

/**
 * Number of recorded steps (horizon + 1), or 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live trace handle.
 */
size_t resest_trace_steps(const struct ResestTrace *t);

/**
 * Number of regular nodes in the trace, or 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live trace handle.
 */
size_t resest_trace_node_count(const struct ResestTrace *t);

/**
 * Full-state error `‖x̂_i[k] − x[k]‖` of the `index`-th regular node.
 *
 * # Safety
 * `t` must be a live trace handle and `out` writable.
 */
enum ResestStatus resest_trace_state_error(const struct ResestTrace *t,
                                           size_t k,
                                           size_t index,
                                           double *out);

/**
 * Summary of the trace as JSON.
 *
 * # Safety
 * `t` must be a live trace handle and `out_json` writable.
 */
enum ResestStatus resest_trace_json(const struct ResestTrace *t, char **out_json);

/**
 * Monte Carlo mean-square error over `trials` runs.
 *
 * # Safety
 * `s` must be a live scenario handle and `out` writable.
 */
enum ResestStatus resest_montecarlo(const struct ResestScenario *s,
                                    size_t trials,
                                    struct ResestMssReport **out);

/**
 * # Safety
 * `r` must be null or a live report handle.
 */
void resest_mss_free(struct ResestMssReport *r);

/**
 * Sample mean of the squared state error of the `index`-th regular node.
 *
 * # Safety
 * `r` must be a live report handle and `out` writable.
 */
enum ResestStatus resest_mss_mean_sq(const struct ResestMssReport *r,
                                     size_t k,
                                     size_t index,
                                     double *out);

/**
 * # Safety
 * `r` must be a live report handle and `out_json` writable.
 */
enum ResestStatus resest_mss_json(const struct ResestMssReport *r, char **out_json);

/**
 * Probability that too few of the `(m−1)f+1` erasure links deliver.
 *
 * # Safety
 * `out` must be writable.
 */
enum ResestStatus resest_pbar(double p, size_t m, size_t f, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RESEST_H */
