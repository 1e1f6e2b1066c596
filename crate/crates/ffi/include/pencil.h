#ifndef PENCIL_H
#define PENCIL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a call. The first four values agree with the `pencil` exit codes.
typedef enum PencilStatus {
  PENCIL_STATUS_OK = 0,
  // The tuple was tested and is not a direct sum of identical copies.
  PENCIL_STATUS_CONDITIONS_FAILED = 1,
  // A hypothesis of the test does not hold, e.g. `k` does not divide the dimension.
  PENCIL_STATUS_PRECONDITION_VIOLATED = 2,
  // I/O or format failure.
  PENCIL_STATUS_ERROR = 3,
  PENCIL_STATUS_NULL_POINTER = 4,
  PENCIL_STATUS_INVALID_ARGUMENT = 5,
  PENCIL_STATUS_NUMERICAL = 6,
  // A Rust panic was caught at the boundary.
  PENCIL_STATUS_PANIC = 7,
} PencilStatus;

// Opaque result of a successful decomposition.
typedef struct PencilDecomposition PencilDecomposition;

// Opaque Hermitian tuple.
typedef struct PencilTuple PencilTuple;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call into this library on the same thread.
const char *pencil_last_error(void);

// Library version as a static NUL-terminated string.
const char *pencil_version(void);

// Builds a tuple from `m` consecutive `dim×dim` matrices in the interleaved
// layout (`2·m·dim²` doubles). Each matrix must be Hermitian.
//
// # Safety
// `data` must address `2·m·dim²` readable doubles; `out` must be writable.
enum PencilStatus pencil_tuple_new(size_t dim,
                                   size_t m,
                                   const double *data,
                                   struct PencilTuple **out);

// Reads a tuple file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum PencilStatus pencil_tuple_load(const char *path, struct PencilTuple **out);

// Writes a tuple file atomically.
//
// # Safety
// `tuple` must come from this library; `path` must be NUL-terminated.
enum PencilStatus pencil_tuple_save(const struct PencilTuple *tuple, const char *path);

// Generates an instance. `family` is `decomposable`, `conjugate_negative`
// or `commuting`.
//
// # Safety
// `family` must be NUL-terminated; `out` must be writable.
enum PencilStatus pencil_tuple_generate(const char *family,
                                        size_t n,
                                        size_t k,
                                        size_t m,
                                        uint64_t seed,
                                        struct PencilTuple **out);

// Matrix dimension, or 0 for a null handle.
//
// # Safety
// `tuple` must be null or come from this library.
size_t pencil_tuple_dim(const struct PencilTuple *tuple);

// Number of matrices, or 0 for a null handle.
//
// # Safety
// `tuple` must be null or come from this library.
size_t pencil_tuple_len(const struct PencilTuple *tuple);

// Copies matrix `index` (0-based) into `out`.
//
// # Safety
// `tuple` must come from this library; `out` must address `out_len` doubles.
enum PencilStatus pencil_tuple_matrix(const struct PencilTuple *tuple,
                                      size_t index,
                                      double *out,
                                      size_t out_len);

// Releases a tuple. Null is ignored.
//
// # Safety
// `tuple` must be null or an unreleased handle from this library.
void pencil_tuple_free(struct PencilTuple *tuple);

// Runs the word test with default options. Returns `Ok` when every word
// passes, `ConditionsFailed` or `PreconditionViolated` for a negative
// verdict, and an error status when the test itself could not finish.
//
// # Safety
// `tuple` must come from this library.
enum PencilStatus pencil_analyze(const struct PencilTuple *tuple, size_t k, uint64_t seed);

// Like [`pencil_analyze`] but always produces the full JSON report in
// `*json_out`, to be released with [`pencil_string_free`]. The status
// reflects only whether the report could be produced.
//
// # Safety
// `tuple` must come from this library; `json_out` must be writable.
enum PencilStatus pencil_analyze_json(const struct PencilTuple *tuple,
                                      size_t k,
                                      uint64_t seed,
                                      char **json_out);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be null or an unreleased string from this library.
void pencil_string_free(char *s);

// Splits the tuple into `k` identical copies.
//
// # Safety
// `tuple` must come from this library; `out` must be writable.
enum PencilStatus pencil_decompose(const struct PencilTuple *tuple,
                                   size_t k,
                                   uint64_t seed,
                                   struct PencilDecomposition **out);

// `max_l ‖Q A_l Q* − I_k ⊗ B_l‖_F`, or NaN for a null handle.
//
// # Safety
// `d` must be null or come from this library.
double pencil_decomposition_residual(const struct PencilDecomposition *d);

// Dimension `n` of the reduced matrices, or 0 for a null handle.
//
// # Safety
// `d` must be null or come from this library.
size_t pencil_decomposition_reduced_dim(const struct PencilDecomposition *d);

// Copies reduced matrix `index` (`n×n`) into `out`.
//
// # Safety
// `d` must come from this library; `out` must address `out_len` doubles.
enum PencilStatus pencil_decomposition_reduced_matrix(const struct PencilDecomposition *d,
                                                      size_t index,
                                                      double *out,
                                                      size_t out_len);

// Copies the reducing unitary `Q` (`nk×nk`, with `Q A_l Q* = I_k ⊗ B_l`) into `out`.
//
// # Safety
// `d` must come from this library; `out` must address `out_len` doubles.
enum PencilStatus pencil_decomposition_unitary(const struct PencilDecomposition *d,
                                               double *out,
                                               size_t out_len);

// Releases a decomposition. Null is ignored.
//
// # Safety
// `d` must be null or an unreleased handle from this library.
void pencil_decomposition_free(struct PencilDecomposition *d);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PENCIL_H */
