/* C ABI for the irsmd solver. All handles are opaque; every function returns an IrsmdStatus unless noted. */

#ifndef IRSMD_H
#define IRSMD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum IrsmdStatus {
  IRSMD_STATUS_OK = 0,
  IRSMD_STATUS_NULL_POINTER = 1,
  IRSMD_STATUS_INVALID_ARGUMENT = 2,
  IRSMD_STATUS_DIMENSION_MISMATCH = 3,
  IRSMD_STATUS_VALIDATION_FAILED = 4,
  IRSMD_STATUS_IO_ERROR = 5,
  IRSMD_STATUS_RUNTIME_ERROR = 6,
} IrsmdStatus;

/**
 * Opaque bilevel problem handle.
 */
typedef struct IrsmdProblem IrsmdProblem;

/**
 * Opaque run-report handle.
 */
typedef struct IrsmdReport IrsmdReport;

/**
 * Opaque schedule handle.
 */
typedef struct IrsmdSchedule IrsmdSchedule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *irsmd_last_error_message(void);

/**
 * Least-squares inner objective ‖Ax − b‖² with an elastic-net outer
 * objective of modulus `mu_h`, over the whole space. `a` is row-major
 * `rows` x `cols`; `b` has length `rows`.
 *
 * # Safety
 * `a` must point to `rows*cols` doubles, `b` to `rows` doubles, and `out`
 * must be a valid location to store the new handle.
 */
enum IrsmdStatus irsmd_problem_least_squares(const double *a,
                                             uintptr_t rows,
                                             uintptr_t cols,
                                             const double *b,
                                             double mu_h,
                                             struct IrsmdProblem **out);

/**
 * Hinge-loss inner objective over sparse examples (CSR layout: `offsets`
 * has `n_examples + 1` entries into `indices`/`values`; feature indices are
 * 0-based and strictly increasing per example; labels are -1 or +1), with
 * an elastic-net outer objective of modulus `mu_h`.
 *
 * # Safety
 * All arrays must match the CSR layout described above.
 */
enum IrsmdStatus irsmd_problem_hinge(const uintptr_t *offsets,
                                     const uint32_t *indices,
                                     const double *values,
                                     uintptr_t n_examples,
                                     const int32_t *labels,
                                     uintptr_t dim,
                                     double mu_h,
                                     struct IrsmdProblem **out);

/**
 * Compile a two-stage problem file (see the crate docs for the format) into
 * a bilevel problem over the stacked variable.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
enum IrsmdStatus irsmd_problem_two_stage_file(const char *path, struct IrsmdProblem **out);

/**
 * Load an experiment config file and build its problem (data paths resolve
 * relative to the config file).
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
enum IrsmdStatus irsmd_problem_from_config(const char *path, struct IrsmdProblem **out);

/**
 * Replace the feasible set with a box (componentwise bounds of length
 * `dim`, which must match the problem dimension).
 *
 * # Safety
 * `lower`/`upper` must point to `dim` doubles.
 */
enum IrsmdStatus irsmd_problem_set_box(struct IrsmdProblem *problem,
                                       const double *lower,
                                       const double *upper,
                                       uintptr_t dim);

/**
 * Switch deterministic mode (exact subgradients, no sampling) on or off.
 *
 * # Safety
 * The handle must be NULL or a live handle from this library.
 */
enum IrsmdStatus irsmd_problem_set_deterministic(struct IrsmdProblem *problem, bool deterministic);

/**
 * Problem dimension, or 0 for a null handle.
 *
 * # Safety
 * The handle must be NULL or a live handle from this library.
 */
uintptr_t irsmd_problem_dim(const struct IrsmdProblem *problem);

/**
 * Schedule attaining the O(1/N^{0.5−δ}) rate: γ_k = γ₀/(k+1)^{0.5+0.5δ},
 * λ_k = λ₀/(k+1)^{0.5−δ}.
 *
 * # Safety
 * `out` must be a valid location to store the new handle.
 */
enum IrsmdStatus irsmd_schedule_rate(double delta,
                                     double gamma0,
                                     double lambda0,
                                     double r,
                                     struct IrsmdSchedule **out);

/**
 * General power-law schedule γ_k = γ₀/(k+1)^a, λ_k = λ₀/(k+1)^b.
 *
 * # Safety
 * `out` must be a valid location to store the new handle.
 */
enum IrsmdStatus irsmd_schedule_power(double gamma0,
                                      double lambda0,
                                      double a,
                                      double b,
                                      double r,
                                      struct IrsmdSchedule **out);

/**
 * Evaluate (γ_k, λ_k).
 *
 * # Safety
 * `gamma`/`lambda` must be valid output locations.
 */
enum IrsmdStatus irsmd_schedule_values(const struct IrsmdSchedule *schedule,
                                       uint64_t k,
                                       double *gamma,
                                       double *lambda);

/**
 * 1 when the schedule passes the convergence validator, 0 when it fails,
 * -1 for a null handle.
 *
 * # Safety
 * The handle must be NULL or a live handle from this library.
 */
int32_t irsmd_schedule_convergence_ok(const struct IrsmdSchedule *schedule);

/**
 * 1 when the schedule satisfies the recursive-bound diagnostic conditions.
 *
 * # Safety
 * The handle must be NULL or a live handle from this library.
 */
int32_t irsmd_schedule_bound_diagnostic_ok(const struct IrsmdSchedule *schedule);

/**
 * Run the solver for `iterations` steps from `x0` (NULL means the origin,
 * projected onto the feasible set) with the given seed.
 *
 * # Safety
 * `x0` must be NULL or point to `irsmd_problem_dim(problem)` doubles;
 * `out` must be a valid location to store the new report handle.
 */
enum IrsmdStatus irsmd_run(const struct IrsmdProblem *problem,
                           const struct IrsmdSchedule *schedule,
                           const double *x0,
                           uint64_t iterations,
                           uint64_t seed,
                           bool override_validation,
                           struct IrsmdReport **out);

/**
 * Dimension of the report's iterates, or 0 for a null handle.
 *
 * # Safety
 * The handle must be NULL or a live handle from this library.
 */
uintptr_t irsmd_report_dim(const struct IrsmdReport *report);

/**
 * Number of iterations the run executed, or 0 for a null handle.
 *
 * # Safety
 * The handle must be NULL or a live handle from this library.
 */
uint64_t irsmd_report_iterations(const struct IrsmdReport *report);

/**
 * Copy the final weighted average x̄_N into `buf`.
 *
 * # Safety
 * `buf` must point to `len >= irsmd_report_dim(report)` doubles.
 */
enum IrsmdStatus irsmd_report_average(const struct IrsmdReport *report, double *buf, uintptr_t len);

/**
 * Exact f and h at the final average, when the run evaluated checkpoints
 * (NaN otherwise).
 *
 * # Safety
 * `f` and `h` must be valid output locations.
 */
enum IrsmdStatus irsmd_report_final_values(const struct IrsmdReport *report, double *f, double *h);

/**
 * Number of checkpoint rows in the trace.
 *
 * # Safety
 * The handle must be NULL or a live handle from this library.
 */
uintptr_t irsmd_report_trace_len(const struct IrsmdReport *report);

/**
 * Read one checkpoint row; f/h are NaN when the run did not evaluate them.
 *
 * # Safety
 * All out pointers must be valid locations.
 */
enum IrsmdStatus irsmd_report_trace_row(const struct IrsmdReport *report,
                                        uintptr_t index,
                                        uint64_t *k,
                                        double *gamma,
                                        double *lambda,
                                        double *f,
                                        double *h);

/**
 * # Safety
 * `problem` must be a handle from this library, not yet freed.
 */
void irsmd_problem_free(struct IrsmdProblem *problem);

/**
 * # Safety
 * `schedule` must be a handle from this library, not yet freed.
 */
void irsmd_schedule_free(struct IrsmdSchedule *schedule);

/**
 * # Safety
 * `report` must be a handle from this library, not yet freed.
 */
void irsmd_report_free(struct IrsmdReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IRSMD_H */
