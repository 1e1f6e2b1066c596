#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include "pencil.h"

#define CHECK(cond)                                                        \
  do {                                                                     \
    if (!(cond)) {                                                         \
      const char *msg = pencil_last_error();                               \
      fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond, msg ? msg : ""); \
      return 1;                                                            \
    }                                                                      \
  } while (0)

int main(void) {
  PencilTuple *t = NULL;
  CHECK(pencil_tuple_generate("decomposable", 3, 2, 2, 4, &t) == PENCIL_STATUS_OK);
  CHECK(pencil_tuple_dim(t) == 6 && pencil_tuple_len(t) == 2);
  CHECK(pencil_analyze(t, 2, 0) == PENCIL_STATUS_OK);
  CHECK(pencil_analyze(t, 4, 0) == PENCIL_STATUS_PRECONDITION_VIOLATED);

  PencilDecomposition *d = NULL;
  CHECK(pencil_decompose(t, 2, 0, &d) == PENCIL_STATUS_OK);
  CHECK(pencil_decomposition_residual(d) < 1e-8);
  size_t n = pencil_decomposition_reduced_dim(d);
  CHECK(n == 3);
  double *b = malloc(2 * n * n * sizeof(double));
  CHECK(pencil_decomposition_reduced_matrix(d, 0, b, 2 * n * n) == PENCIL_STATUS_OK);
  for (size_t r = 0; r < n; r++)
    for (size_t c = 0; c < n; c++) {
      /* Hermitian: b[r][c] == conj(b[c][r]) */
      CHECK(fabs(b[2 * (r * n + c)] - b[2 * (c * n + r)]) < 1e-9);
      CHECK(fabs(b[2 * (r * n + c) + 1] + b[2 * (c * n + r) + 1]) < 1e-9);
    }
  CHECK(pencil_decomposition_reduced_matrix(d, 9, b, 2 * n * n) == PENCIL_STATUS_INVALID_ARGUMENT);
  free(b);
  pencil_decomposition_free(d);

  char *json = NULL;
  CHECK(pencil_analyze_json(t, 2, 0, &json) == PENCIL_STATUS_OK && json != NULL);
  pencil_string_free(json);
  CHECK(pencil_tuple_load(NULL, &t) == PENCIL_STATUS_NULL_POINTER);
  pencil_tuple_free(t);
  puts("ok");
  return 0;
}
