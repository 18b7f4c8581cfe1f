/* C ABI for the matcomp matrix-completion toolkit. */

#ifndef MATCOMP_H
#define MATCOMP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code of every fallible call.
typedef enum McStatus {
  MC_STATUS_OK = 0,
  MC_STATUS_NULL_POINTER = 1,
  MC_STATUS_UTF8 = 2,
  MC_STATUS_INVALID_ARGUMENT = 3,
  MC_STATUS_DIMENSION = 4,
  MC_STATUS_NUMERIC = 5,
  MC_STATUS_SINGULAR = 6,
  MC_STATUS_PROBE_CAP_EXCEEDED = 7,
  MC_STATUS_BUDGET_EXHAUSTED = 8,
  MC_STATUS_INCONSISTENT = 9,
  MC_STATUS_PARSE_ERROR = 10,
  MC_STATUS_IO_ERROR = 11,
  MC_STATUS_NON_CONVERGENCE = 12,
  MC_STATUS_PANIC = 13,
} McStatus;

// Entry distribution selector for generated instances.
typedef enum McDistribution {
  MC_DISTRIBUTION_GAUSSIAN = 0,
  MC_DISTRIBUTION_INTEGER = 1,
} McDistribution;

// Sampling strategy selector.
typedef enum McStrategy {
  MC_STRATEGY_UNIFORM = 0,
  MC_STRATEGY_OPTIMAL = 1,
  MC_STRATEGY_SELECTIVE = 2,
} McStrategy;

// Opaque dense matrix handle.
typedef struct McMatrix McMatrix;

// Opaque sampling-plan handle.
typedef struct McPlan McPlan;

// Opaque solve-report handle.
typedef struct McReport McReport;

// Solver options; zero-initialize and call `mc_solver_options_default`.
typedef struct McSolverOptions {
  double rho;
  size_t max_iters;
  double tol;
  double rcond_tol;
} McSolverOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *mc_version(void);

// Message of the last failing call on this thread, or NULL.
// Valid until the next failing call on the same thread; do not free.
const char *mc_last_error_message(void);

// Frees a string returned by this library.
void mc_string_free(char *s);

// Fills `out` with the default solver options.
enum McStatus mc_solver_options_default(struct McSolverOptions *out);

// Generates a synthetic instance: a rank-`k` block in the first `t` columns
// plus an independent rank-`r_rest` remainder. `magnitude` is used only by
// the integer distribution.
enum McStatus mc_matrix_generate(size_t m,
                                 size_t n,
                                 size_t t,
                                 size_t k,
                                 size_t r_rest,
                                 uint64_t seed,
                                 enum McDistribution distribution,
                                 uint32_t magnitude,
                                 struct McMatrix **out);

// Parses a matrix from CSV text (one row per line).
enum McStatus mc_matrix_from_csv_text(const char *text, struct McMatrix **out);

// Renders a matrix as CSV text (17 significant digits, lossless).
enum McStatus mc_matrix_to_csv_text(const struct McMatrix *matrix, char **out);

// Row count; 0 for a null handle.
size_t mc_matrix_rows(const struct McMatrix *matrix);

// Column count; 0 for a null handle.
size_t mc_matrix_cols(const struct McMatrix *matrix);

// Reads one entry (0-based indices).
enum McStatus mc_matrix_get(const struct McMatrix *matrix, size_t row, size_t col, double *out);

void mc_matrix_free(struct McMatrix *matrix);

// Builds a sampling plan against `matrix`, treating its first `t` columns as
// the structured block of rank `k`. `budget` is the total observation count;
// `relations < 0` asks for the default relation count (selective only).
enum McStatus mc_plan_build(const struct McMatrix *matrix,
                            enum McStrategy strategy,
                            size_t t,
                            size_t k,
                            size_t budget,
                            int64_t relations,
                            uint64_t seed,
                            struct McPlan **out);

// Serializes a plan to its JSON document (1-based indices).
enum McStatus mc_plan_to_json(const struct McPlan *plan, char **out);

// Parses a plan from its JSON document.
enum McStatus mc_plan_from_json(const char *text, struct McPlan **out);

// Number of observed entries in the plan.
size_t mc_plan_observation_count(const struct McPlan *plan);

// Copies the plan's budget ledger counters into the given slots (any may be
// NULL to skip).
enum McStatus mc_plan_ledger(const struct McPlan *plan,
                             size_t *total_budget,
                             size_t *spent_structured,
                             size_t *spent_uniform,
                             size_t *wasted);

void mc_plan_free(struct McPlan *plan);

// Completes the matrix described by a plan. Optimal plans take the decoupled
// fast path (block filled exactly, splitting solver on the remainder); other
// plans run the full splitting solver. `opts` may be NULL for defaults.
enum McStatus mc_solve_plan(const struct McPlan *plan,
                            const struct McSolverOptions *opts,
                            struct McReport **out);

// True when the solver met its tolerance within the iteration cap.
bool mc_report_converged(const struct McReport *report);

size_t mc_report_iterations(const struct McReport *report);

double mc_report_primal_residual(const struct McReport *report);

double mc_report_dual_residual(const struct McReport *report);

double mc_report_constraint_violation(const struct McReport *report);

// Copies the reconstructed matrix out of a report.
enum McStatus mc_report_matrix(const struct McReport *report, struct McMatrix **out);

// Serializes a report to JSON, optionally embedding the matrix payload.
enum McStatus mc_report_to_json(const struct McReport *report, bool include_matrix, char **out);

void mc_report_free(struct McReport *report);

// Operator-norm relative error of `estimate` against `truth`.
enum McStatus mc_relative_error(const struct McMatrix *estimate,
                                const struct McMatrix *truth,
                                double *out);

// One-shot trial: generate, sample, solve, and return the trial record as
// JSON. `relations < 0` asks for the default count. `p` is the observation
// rate in [0, 1].
enum McStatus mc_run_trial_json(size_t m,
                                size_t n,
                                size_t t,
                                size_t k,
                                size_t r_rest,
                                double p,
                                enum McStrategy strategy,
                                uint64_t seed,
                                int64_t relations,
                                char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MATCOMP_H */
