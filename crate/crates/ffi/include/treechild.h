#ifndef TREECHILD_H
#define TREECHILD_H

#include <stdbool.h>
#include <stdint.h>

typedef enum TcStatus {
  TC_STATUS_OK = 0,
  TC_STATUS_NO_SOLUTION = 1,
  TC_STATUS_INPUT_ERROR = 2,
  TC_STATUS_TIME_LIMIT = 3,
  TC_STATUS_NULL_POINTER = 4,
  TC_STATUS_PANIC = 5,
} TcStatus;

/**
 * A parsed set of trees.
 */
typedef struct TcInstance TcInstance;

/**
 * A solved instance: weight, sequence and network.
 */
typedef struct TcSolution TcSolution;

/**
 * Solver settings. `max_k < 0` and `time_limit_secs < 0` mean no limit.
 */
typedef struct TcSolveOptions {
  int64_t max_k;
  bool use_rbe;
  bool use_clusters;
  uint32_t workers;
  uint64_t poll_interval;
  double time_limit_secs;
} TcSolveOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The message of the last failed call on this thread, or an empty string.
 */
const char *tc_last_error(void);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and must not be used afterwards.
 */
void tc_string_free(char *s);

/**
 * The library version as a static string.
 */
const char *tc_version(void);

/**
 * Parse Newick trees, separated by `;`, into a new instance.
 *
 * # Safety
 * `text` must be a nul-terminated string and `out` a valid pointer.
 */
enum TcStatus tc_instance_parse(const char *text, struct TcInstance **out);

/**
 * # Safety
 * `inst` must come from [`tc_instance_parse`] or be null.
 */
void tc_instance_free(struct TcInstance *inst);

/**
 * Number of taxa, or 0 for null.
 *
 * # Safety
 * `inst` must be a live instance or null.
 */
uintptr_t tc_instance_num_taxa(const struct TcInstance *inst);

/**
 * Number of trees, or 0 for null.
 *
 * # Safety
 * `inst` must be a live instance or null.
 */
uintptr_t tc_instance_num_trees(const struct TcInstance *inst);

struct TcSolveOptions tc_options_default(void);

/**
 * Solve `inst`. `opts` may be null for the defaults.
 *
 * # Safety
 * `inst` must be a live instance, `opts` null or valid, and `out` a valid pointer.
 */
enum TcStatus tc_solve(const struct TcInstance *inst,
                       const struct TcSolveOptions *opts,
                       struct TcSolution **out);

/**
 * # Safety
 * `sol` must come from [`tc_solve`] or be null.
 */
void tc_solution_free(struct TcSolution *sol);

/**
 * Weight of the sequence, equal to the reticulation number of the network; -1 for null.
 *
 * # Safety
 * `sol` must be a live solution or null.
 */
int64_t tc_solution_weight(const struct TcSolution *sol);

/**
 * The sequence, one `(x,y)` per line, owned by `sol`.
 *
 * # Safety
 * `sol` must be a live solution or null. The string lives as long as `sol`.
 */
const char *tc_solution_sequence(const struct TcSolution *sol);

/**
 * The network in extended Newick, owned by `sol`.
 *
 * # Safety
 * `sol` must be a live solution or null. The string lives as long as `sol`.
 */
const char *tc_solution_network(const struct TcSolution *sol);

/**
 * Number of search nodes visited while solving; 0 for null.
 *
 * # Safety
 * `sol` must be a live solution or null.
 */
uint64_t tc_solution_recursive_calls(const struct TcSolution *sol);

/**
 * Generate a random instance as Newick text followed by the generator comment line. The caller
 * frees `*out` with [`tc_string_free`].
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TcStatus tc_generate(uint32_t n, uint32_t k, uint32_t t, uint64_t seed, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TREECHILD_H */
