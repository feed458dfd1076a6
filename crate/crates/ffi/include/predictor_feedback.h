#ifndef PREDICTOR_FEEDBACK_H
#define PREDICTOR_FEEDBACK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define PF_INTEGRATOR_EULER 0

#define PF_INTEGRATOR_RK4 1

typedef enum PfStatus {
  PF_STATUS_OK = 0,
  PF_STATUS_NULL_POINTER = 1,
  PF_STATUS_INVALID_ARGUMENT = 2,
  PF_STATUS_DIMENSION_MISMATCH = 3,
  PF_STATUS_NON_FINITE = 4,
  PF_STATUS_UNKNOWN_SCENARIO = 5,
  PF_STATUS_CONFIG = 6,
  PF_STATUS_IO = 7,
  PF_STATUS_PANIC = 8,
} PfStatus;

/**
 * A loaded scenario: plant, feedback law and certificate.
 */
typedef struct PfSystem PfSystem;

/**
 * The output of [`pf_simulate`].
 */
typedef struct PfTrace PfTrace;

/**
 * Certificate constants. The closed-loop fields are NaN when `has_lk` is 0.
 */
typedef struct PfCertificate {
  double rho;
  double valid_radius;
  double kappa_bound;
  int has_lk;
  double gamma;
  double sigma;
  double m_v;
  double upper_m_v;
  double attraction_radius;
} PfCertificate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a built-in scenario by name (`pendulum`, `cascade`, `scalar`, `linear`).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PfStatus pf_scenario_new(const char *name, struct PfSystem **out);

/**
 * Builds a linear scenario from TOML text in the configuration format.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PfStatus pf_system_from_config(const char *toml, struct PfSystem **out);

/**
 * # Safety
 * `sys` must come from this library and not be used afterwards. Null is ignored.
 */
void pf_system_free(struct PfSystem *sys);

/**
 * State dimension `n`, or 0 for a null handle.
 *
 * # Safety
 * `sys` must be null or a live handle.
 */
size_t pf_system_state_dim(const struct PfSystem *sys);

/**
 * Input dimension `m`, or 0 for a null handle.
 *
 * # Safety
 * `sys` must be null or a live handle.
 */
size_t pf_system_input_dim(const struct PfSystem *sys);

/**
 * Delay `h`, or NaN for a null handle.
 *
 * # Safety
 * `sys` must be null or a live handle.
 */
double pf_system_delay(const struct PfSystem *sys);

/**
 * Snaps a requested step to the delay grid; writes the history length and the step used.
 *
 * # Safety
 * `sys` must be a live handle; `cells_out` and `step_out` valid pointers.
 */
enum PfStatus pf_history_grid(const struct PfSystem *sys,
                              double step,
                              size_t *cells_out,
                              double *step_out);

/**
 * Writes the prediction `y = ξ(h)` (n values).
 *
 * # Safety
 * `x` holds n values, `phi` holds `cells × m`, `y_out` has room for n.
 */
enum PfStatus pf_predict(const struct PfSystem *sys,
                         const double *x,
                         const double *phi,
                         size_t cells,
                         double step,
                         int integrator_code,
                         double *y_out);

/**
 * Writes the transformed input matrix `B(y, φ)` (n × m, row-major).
 *
 * # Safety
 * As for [`pf_predict`]; `b_out` has room for `n × m` values.
 */
enum PfStatus pf_input_matrix(const struct PfSystem *sys,
                              const double *x,
                              const double *phi,
                              size_t cells,
                              double step,
                              int integrator_code,
                              double *b_out);

/**
 * Writes the control `u(t)` (m values) of the scenario's feedback law.
 *
 * # Safety
 * As for [`pf_predict`]; `u_out` has room for m values.
 */
enum PfStatus pf_control(const struct PfSystem *sys,
                         const double *x,
                         const double *phi,
                         size_t cells,
                         double step,
                         int integrator_code,
                         double *u_out);

/**
 * Runs the closed loop from `x0` with constant initial input `u0`.
 *
 * `record` is a comma list of `y,b,v,envelope,flags`, or null for none. When the run
 * overflows, the partial trace is still written to `out` and the status is `NonFinite`.
 *
 * # Safety
 * `x0` holds n values, `u0` holds m, `out` is a valid pointer.
 */
enum PfStatus pf_simulate(const struct PfSystem *sys,
                          const double *x0,
                          const double *u0,
                          double step,
                          double duration,
                          int integrator_code,
                          const char *record,
                          struct PfTrace **out);

/**
 * # Safety
 * `trace` must come from [`pf_simulate`] and not be used afterwards. Null is ignored.
 */
void pf_trace_free(struct PfTrace *trace);

/**
 * Number of recorded rows, or 0 for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t pf_trace_len(const struct PfTrace *trace);

/**
 * The step actually used, or NaN for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
double pf_trace_step(const struct PfTrace *trace);

/**
 * Reads row `index`: time, state (n values) and input (m values). Null outputs are skipped.
 *
 * # Safety
 * `trace` must be a live handle; non-null outputs must have room for their values.
 */
enum PfStatus pf_trace_row(const struct PfTrace *trace,
                           size_t index,
                           double *t_out,
                           double *x_out,
                           double *u_out);

/**
 * Writes the trace as CSV to `path`.
 *
 * # Safety
 * `trace` must be a live handle and `path` a NUL-terminated string.
 */
enum PfStatus pf_trace_write_csv(const struct PfTrace *trace, const char *path);

/**
 * Fills `out` with the scenario's certificate constants.
 *
 * # Safety
 * `sys` must be a live handle and `out` a valid pointer.
 */
enum PfStatus pf_certify(const struct PfSystem *sys, struct PfCertificate *out);

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *pf_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PREDICTOR_FEEDBACK_H */
