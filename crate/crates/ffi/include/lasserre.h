#ifndef LASSERRE_H
#define LASSERRE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LasserreFlavor {
  LASSERRE_FLAVOR_PUTINAR = 0,
  LASSERRE_FLAVOR_SCHMUDGEN = 1,
  LASSERRE_FLAVOR_SOS = 2,
  LASSERRE_FLAVOR_GRADIENT = 3,
  LASSERRE_FLAVOR_JACOBIAN = 4,
} LasserreFlavor;

// Values match the command-line exit codes.
typedef enum LasserreOutcome {
  LASSERRE_OUTCOME_CERTIFIED = 0,
  LASSERRE_OUTCOME_EXHAUSTED = 2,
  LASSERRE_OUTCOME_SOLVER_FAILED = 3,
} LasserreOutcome;

typedef enum LasserreStatus {
  LASSERRE_STATUS_OK = 0,
  LASSERRE_STATUS_NULL_POINTER = 1,
  LASSERRE_STATUS_INVALID_UTF8 = 2,
  LASSERRE_STATUS_PARSE = 3,
  LASSERRE_STATUS_DOMAIN = 4,
  LASSERRE_STATUS_UNSUPPORTED = 5,
  LASSERRE_STATUS_NUMERICAL = 6,
  // Index past the end, or a buffer too short.
  LASSERRE_STATUS_OUT_OF_RANGE = 7,
  // The run has no certificate.
  LASSERRE_STATUS_NOT_CERTIFIED = 8,
  LASSERRE_STATUS_PANIC = 9,
} LasserreStatus;

// A parsed problem file.
typedef struct LasserreProblem LasserreProblem;

// A finished hierarchy run.
typedef struct LasserreRun LasserreRun;

// Orders of 0 select the defaults.
typedef struct LasserreOptions {
  enum LasserreFlavor flavor;
  uint32_t order_min;
  uint32_t order_max;
  double rank_tol;
  double solver_tol;
  uint64_t seed;
} LasserreOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Valid until the
// next failing call on the same thread.
const char *lasserre_last_error_message(void);

// Static NUL-terminated version string.
const char *lasserre_version(void);

// Writes the default options into `out`.
//
// # Safety
// `out` must be null or valid for writes.
enum LasserreStatus lasserre_options_default(struct LasserreOptions *out);

// Parses problem-file text. On success `*out` owns a new handle.
//
// # Safety
// `text` must be null or a NUL-terminated string; `out` must be null or
// valid for writes.
enum LasserreStatus lasserre_problem_parse(const char *text, struct LasserreProblem **out);

// Number of variables, or 0 for null.
//
// # Safety
// `problem` must be null or a live handle.
size_t lasserre_problem_nvars(const struct LasserreProblem *problem);

// # Safety
// `problem` must be null or a handle not yet freed.
void lasserre_problem_free(struct LasserreProblem *problem);

// Runs the hierarchy. `options` may be null for defaults. On success
// `*out` owns a new run handle whatever the outcome.
//
// # Safety
// `problem` must be a live handle; `options` null or valid for reads;
// `out` valid for writes.
enum LasserreStatus lasserre_run(const struct LasserreProblem *problem,
                                 const struct LasserreOptions *options,
                                 struct LasserreRun **out);

// # Safety
// `run` must be null or a live handle; `out` null or valid for writes.
enum LasserreStatus lasserre_run_outcome(const struct LasserreRun *run, enum LasserreOutcome *out);

// Certified minimum and the order that certified it.
//
// # Safety
// `run` must be null or a live handle; `f_min` and `order` null or valid
// for writes.
enum LasserreStatus lasserre_run_minimum(const struct LasserreRun *run,
                                         double *f_min,
                                         uint32_t *order);

// Number of certified atoms; 0 for null or uncertified runs.
//
// # Safety
// `run` must be null or a live handle.
size_t lasserre_run_atom_count(const struct LasserreRun *run);

// Copies atom `index` into `coords[0..len]` and its weight into `weight`.
// `len` must be at least the variable count.
//
// # Safety
// `run` must be null or a live handle; `coords` null or valid for `len`
// writes; `weight` null or valid for writes.
enum LasserreStatus lasserre_run_atom(const struct LasserreRun *run,
                                      size_t index,
                                      double *coords,
                                      size_t len,
                                      double *weight);

// The result document as JSON; free with [`lasserre_string_free`].
// Null on failure.
//
// # Safety
// `run` must be null or a live handle.
char *lasserre_run_json(const struct LasserreRun *run);

// # Safety
// `run` must be null or a handle not yet freed.
void lasserre_run_free(struct LasserreRun *run);

// # Safety
// `s` must be null or a string from this library not yet freed.
void lasserre_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LASSERRE_H */
