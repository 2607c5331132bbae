#ifndef BREGMAN_OCP_H
#define BREGMAN_OCP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BocStatus {
  BOC_STATUS_OK = 0,
  BOC_STATUS_NULL_POINTER = 1,
  BOC_STATUS_INVALID_ARGUMENT = 2,
  BOC_STATUS_UNKNOWN_CASE = 3,
  BOC_STATUS_SOLVER_FAILURE = 4,
  BOC_STATUS_PANIC = 5,
} BocStatus;

/*
 A benchmark problem on a fixed mesh.
 */
typedef struct BocProblem BocProblem;

/*
 A Bregman iteration on (possibly noisy) data of a [`BocProblem`].
 */
typedef struct BocRun BocRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the last error message of this thread into `buf` (NUL-terminated,
 truncated to `len - 1` bytes) and returns the full message length.

 # Safety
 `buf` must be null or point to `len` writable bytes.
 */
size_t boc_last_error(char *buf, size_t len);

/*
 Library version as a static NUL-terminated string.
 */
const char *boc_version(void);

/*
 Builds benchmark `case` ("ex1".."ex4") with `dof` nodes (`0` selects the
 desk default).

 # Safety
 `case` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BocStatus boc_problem_new(const char *case_, size_t dof, struct BocProblem **out);

/*
 # Safety
 `problem` must be null or a handle from [`boc_problem_new`] not yet freed.
 */
void boc_problem_free(struct BocProblem *problem);

/*
 Number of nodal degrees of freedom, or 0 for a null handle.

 # Safety
 `problem` must be null or a live handle.
 */
size_t boc_problem_dof(const struct BocProblem *problem);

/*
 Number of quadrature points carrying control values, or 0 for null.

 # Safety
 `problem` must be null or a live handle.
 */
size_t boc_problem_num_quad(const struct BocProblem *problem);

/*
 Starts a Bregman iteration with constant `alpha` on the problem's data
 perturbed to noise level `delta` with `seed` (`delta = 0` uses exact data).
 The run keeps its own copy of the problem, so `problem` may be freed
 afterwards.

 # Safety
 `problem` must be a live handle and `out` a valid pointer.
 */
enum BocStatus boc_run_new(const struct BocProblem *problem,
                           double alpha,
                           double delta,
                           uint64_t seed,
                           struct BocRun **out);

/*
 # Safety
 `run` must be null or a handle from [`boc_run_new`] not yet freed.
 */
void boc_run_free(struct BocRun *run);

/*
 Performs one outer step. If `error_out` is non-null it receives the L²
 distance of the new iterate to the exact control.

 # Safety
 `run` must be a live handle; `error_out` null or writable.
 */
enum BocStatus boc_run_step(struct BocRun *run, double *error_out);

/*
 Completed outer steps, or 0 for a null handle.

 # Safety
 `run` must be null or a live handle.
 */
size_t boc_run_iteration(const struct BocRun *run);

/*
 Writes the current control at the quadrature points into `buf`, which
 must hold exactly [`boc_problem_num_quad`] values.

 # Safety
 `run` must be a live handle and `buf` point to `len` writable doubles.
 */
enum BocStatus boc_run_control(const struct BocRun *run, double *buf, size_t len);

/*
 A priori stopping index for constant `alpha`. A negative `kappa` selects
 the source condition. `capped_out` (optional) is set when no violation
 occurred up to `k_max`.

 # Safety
 `k_out` must be writable; `capped_out` null or writable.
 */
enum BocStatus boc_decide_stop(double alpha,
                               double delta,
                               double tau,
                               double kappa,
                               size_t k_max,
                               size_t *k_out,
                               bool *capped_out);

/*
 Cumulative noise bound after `k` steps with constant `alpha`; NaN on
 invalid `alpha`.
 */
double boc_noise_bound(size_t k, double alpha, double delta);

/*
 Cumulative regularization bound after `k` steps with constant `alpha`;
 a negative `kappa` selects the source condition. NaN on invalid input.
 */
double boc_reg_bound(size_t k, double alpha, double kappa);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BREGMAN_OCP_H */
