/* Builds a small 1D problem, solves with the splitting preconditioner and
 * checks its eigenvalues against the analytic enclosure. */
#include <stdio.h>
#include "sgp.h"

#define CHECK(call)                                                        \
  do {                                                                     \
    SgpStatus st_ = (call);                                                \
    if (st_ != SGP_STATUS_OK) {                                            \
      fprintf(stderr, "%s: %d %s\n", #call, st_, sgp_last_error_message()); \
      return 1;                                                            \
    }                                                                      \
  } while (0)

int main(void) {
  enum { NEL = 10 };
  double coeffs[2 * NEL];
  for (int j = 0; j < NEL; j++) {
    coeffs[j] = 1.0;
    coeffs[NEL + j] = 0.4;
  }
  size_t s = 4;
  SgpBasis basis = {1, 1, &s};
  SgpProblem *p = NULL;
  CHECK(sgp_problem_new(NEL, 0, SGP_ELEMENT_Q1, SGP_FAMILY_LEGENDRE, 0.0, basis, coeffs, &p));
  SgpPreconditioner *m = NULL;
  CHECK(sgp_preconditioner_new(p, SGP_PRECONDITIONER_KIND_SPLITTING_COMPLETE, &m));
  double lo, hi;
  CHECK(sgp_extreme_eigs(p, m, 1e-10, 500, 42, &lo, &hi));
  SgpBounds b;
  CHECK(sgp_bounds(SGP_PRECONDITIONER_KIND_SPLITTING_COMPLETE, SGP_FAMILY_LEGENDRE, 0.0, basis, 0.4, &b));
  printf("eigs [%.6f, %.6f] within [%.6f, %.6f]\n", lo, hi, b.c_lower, b.c_upper);
  int ok = b.c_lower <= lo + 1e-8 && hi <= b.c_upper + 1e-8;
  sgp_preconditioner_free(m);
  sgp_problem_free(p);
  return ok ? 0 : 2;
}
