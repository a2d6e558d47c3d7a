#ifndef SGP_H
#define SGP_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SgpStatus {
  SGP_STATUS_OK = 0,
  SGP_STATUS_NULL_POINTER = 1,
  SGP_STATUS_INVALID_ARGUMENT = 2,
  SGP_STATUS_NUMERICAL = 3,
  SGP_STATUS_PANIC = 4,
} SgpStatus;

typedef enum SgpFamily {
  SGP_FAMILY_HERMITE = 0,
  SGP_FAMILY_LEGENDRE = 1,
  SGP_FAMILY_CHEBYSHEV_U = 2,
  /**
   * Uses the `gamma` argument.
   */
  SGP_FAMILY_GEGENBAUER = 3,
} SgpFamily;

typedef enum SgpPreconditionerKind {
  SGP_PRECONDITIONER_KIND_MEAN_BASED = 0,
  SGP_PRECONDITIONER_KIND_TRUNCATED_TP = 1,
  SGP_PRECONDITIONER_KIND_SPLITTING_TP = 2,
  SGP_PRECONDITIONER_KIND_SPLITTING_COMPLETE = 3,
  SGP_PRECONDITIONER_KIND_GAUSS_SEIDEL = 4,
} SgpPreconditionerKind;

typedef enum SgpElement {
  /**
   * Bilinear quadrilaterals.
   */
  SGP_ELEMENT_Q1 = 0,
  /**
   * Two linear triangles per square.
   */
  SGP_ELEMENT_P1 = 1,
} SgpElement;

typedef struct SgpPreconditioner SgpPreconditioner;

typedef struct SgpProblem SgpProblem;

/**
 * Polynomial basis: `complete != 0` selects total degree `< s[0]` in `k`
 * variables, otherwise `s` holds the `k` per-variable sizes.
 */
typedef struct SgpBasis {
  size_t k;
  int32_t complete;
  const size_t *s;
} SgpBasis;

/**
 * Spectral enclosure `[c_lower, c_upper]` of `M⁻¹A`. Fields that do not
 * apply to the preconditioner kind are NaN, `t_arg` is 0 then.
 */
typedef struct SgpBounds {
  double c_lower;
  double c_upper;
  double kappa_bound;
  int32_t vacuous;
  double cbs_gamma;
  double gs2_kappa_bound;
  size_t t_arg;
} SgpBounds;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *sgp_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sgp_version(void);

/**
 * Writes `d_1 … d_s` to `d_out` (length `s`).
 *
 * # Safety
 * `d_out` must point to `s` writable doubles.
 */
enum SgpStatus sgp_d_sequence(enum SgpFamily fam, double gamma, double mu, size_t s, double *d_out);

/**
 * Gauss nodes and weights of the `s`-point rule.
 *
 * # Safety
 * `nodes` and `weights` must each point to `s` writable doubles.
 */
enum SgpStatus sgp_gauss_rule(enum SgpFamily fam,
                              double gamma,
                              size_t s,
                              double *nodes,
                              double *weights);

/**
 * Analytic bounds for a preconditioner kind at dominance ratio `mu`.
 *
 * # Safety
 * `basis.s` must be valid as described on [`SgpBasis`]; `out` must be
 * writable.
 */
enum SgpStatus sgp_bounds(enum SgpPreconditionerKind pk,
                          enum SgpFamily fam,
                          double gamma,
                          struct SgpBasis basis,
                          double mu,
                          struct SgpBounds *out_bounds);

/**
 * Assembles a problem on `(0,1)` or `(0,1)²` with piecewise constant
 * coefficients. `coeffs` holds `(basis.k + 1) × n_elements` values, term
 * major: `coeffs[k * n_elements + j]` is `a_k` on element `j`. In 2D the
 * elements are numbered row by row along x. Pass `ny = 0` for 1D.
 *
 * # Safety
 * `coeffs` must hold the stated number of doubles; `basis.s` as on
 * [`SgpBasis`]; `out_problem` must be writable.
 */
enum SgpStatus sgp_problem_new(size_t nx,
                               size_t ny,
                               enum SgpElement element,
                               enum SgpFamily fam,
                               double gamma,
                               struct SgpBasis basis,
                               const double *coeffs,
                               struct SgpProblem **out_problem);

/**
 * # Safety
 * `problem` must come from [`sgp_problem_new`] and not be used afterwards.
 * NULL is ignored.
 */
void sgp_problem_free(struct SgpProblem *problem);

/**
 * Total number of unknowns `N_P · N_FE`.
 *
 * # Safety
 * `problem` must be a live handle; `out_dim` writable.
 */
enum SgpStatus sgp_problem_dim(const struct SgpProblem *problem, size_t *out_dim);

/**
 * Sampled dominance ratio μ and the classical ratio μ_class.
 *
 * # Safety
 * `problem` must be a live handle; the outputs writable.
 */
enum SgpStatus sgp_problem_mu(const struct SgpProblem *problem,
                              double *out_mu,
                              double *out_mu_class);

/**
 * `y = A x`; both arrays have length `sgp_problem_dim`.
 *
 * # Safety
 * `problem` must be a live handle; `x` and `y` must not overlap.
 */
enum SgpStatus sgp_problem_matvec(const struct SgpProblem *problem, const double *x, double *y);

/**
 * Builds and factors a preconditioner for `problem`. The handle does not
 * borrow the problem.
 *
 * # Safety
 * `problem` must be a live handle; `out_prec` writable.
 */
enum SgpStatus sgp_preconditioner_new(const struct SgpProblem *problem,
                                      enum SgpPreconditionerKind pk,
                                      struct SgpPreconditioner **out_prec);

/**
 * # Safety
 * `prec` must come from [`sgp_preconditioner_new`] and not be used
 * afterwards. NULL is ignored.
 */
void sgp_preconditioner_free(struct SgpPreconditioner *prec);

/**
 * `z = M⁻¹ r`.
 *
 * # Safety
 * `prec` must be a live handle; `r` and `z` hold the problem dimension.
 */
enum SgpStatus sgp_preconditioner_solve(const struct SgpPreconditioner *prec,
                                        const double *r,
                                        double *z);

/**
 * PCG from a zero initial guess until `‖r‖/‖b‖ ≤ tol`.
 *
 * # Safety
 * Live handles; `b` and `x` hold the problem dimension; `out_iterations`
 * may be NULL.
 */
enum SgpStatus sgp_pcg(const struct SgpProblem *problem,
                       const struct SgpPreconditioner *prec,
                       const double *b,
                       double tol,
                       size_t max_iter,
                       double *x,
                       size_t *out_iterations);

/**
 * Extreme eigenvalues of `M⁻¹A` by Lanczos (dense fallback on small
 * problems).
 *
 * # Safety
 * Live handles; the outputs writable.
 */
enum SgpStatus sgp_extreme_eigs(const struct SgpProblem *problem,
                                const struct SgpPreconditioner *prec,
                                double tol,
                                size_t max_iter,
                                uint64_t seed,
                                double *out_min,
                                double *out_max);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SGP_H */
