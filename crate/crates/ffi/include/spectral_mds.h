#ifndef SPECTRAL_MDS_H
#define SPECTRAL_MDS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum MdsStatus {
  MDS_STATUS_OK = 0,
  MDS_STATUS_NULL_POINTER = 1,
  MDS_STATUS_INVALID_PARAMETER = 2,
  MDS_STATUS_DIMENSION_MISMATCH = 3,
  MDS_STATUS_ZERO_SIGNAL = 4,
  MDS_STATUS_RANK_DEFICIENT = 5,
  MDS_STATUS_BUFFER_TOO_SMALL = 6,
  MDS_STATUS_INTERNAL = 7,
} MdsStatus;

// Opaque sensing matrix handle.
typedef struct MdsMatrix MdsMatrix;

// One component `amplitude * sin(omega * t + phase)`.
typedef struct MdsSinusoid {
  double omega;
  double amplitude;
  double phase;
} MdsSinusoid;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *mds_last_error_message(void);

// Creates an `m x n` matrix with i.i.d. `N(0, 1/m)` entries drawn from `seed`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum MdsStatus mds_matrix_gaussian(size_t m, size_t n, uint64_t seed, struct MdsMatrix **out);

// Creates an `m x n` matrix whose rows are distinct basis vectors chosen by `seed`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum MdsStatus mds_matrix_subsampling(size_t m, size_t n, uint64_t seed, struct MdsMatrix **out);

// Releases a handle. Null is accepted and ignored.
//
// # Safety
// `matrix` must be null or a handle returned by this library that has not
// been freed yet.
void mds_matrix_free(struct MdsMatrix *matrix);

// Number of rows, or 0 for a null handle.
//
// # Safety
// `matrix` must be null or a live handle.
size_t mds_matrix_rows(const struct MdsMatrix *matrix);

// Number of columns, or 0 for a null handle.
//
// # Safety
// `matrix` must be null or a live handle.
size_t mds_matrix_cols(const struct MdsMatrix *matrix);

// Writes `Phi x` (length `rows`) into `out`.
//
// # Safety
// `x` must point to `x_len` readable doubles and `out` to `out_len`
// writable doubles.
enum MdsStatus mds_measure(const struct MdsMatrix *matrix,
                           const double *x,
                           size_t x_len,
                           double *out,
                           size_t out_len);

// Writes `sum_j a_j sin(w_j t + p_j)` for `t = 1..=n` into `out`.
//
// # Safety
// `components` must point to `k` readable records and `out` to `n`
// writable doubles.
enum MdsStatus mds_synthesize(const struct MdsSinusoid *components,
                              size_t k,
                              size_t n,
                              double *out);

// Best single sinusoid for the residual `r` (length `rows`) with the default
// estimator settings. `residual_sq` may be null.
//
// # Safety
// `r` must point to `r_len` readable doubles; `out` must be writable;
// `residual_sq` must be null or writable.
enum MdsStatus mds_estimate_sinusoid(const struct MdsMatrix *matrix,
                                     const double *r,
                                     size_t r_len,
                                     struct MdsSinusoid *out,
                                     double *residual_sq);

// Recovers `k` sinusoids from the measurement `m` (length `rows`).
//
// `max_sweeps = 0` selects the library default. The components go to
// `out_components` (capacity `k`); `out_signal` (length `cols`) and
// `final_residual` may be null.
//
// # Safety
// All non-null pointers must be valid for the stated lengths.
enum MdsStatus mds_recover(const struct MdsMatrix *matrix,
                           const double *m,
                           size_t m_len,
                           size_t k,
                           size_t max_sweeps,
                           struct MdsSinusoid *out_components,
                           double *out_signal,
                           double *final_residual);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECTRAL_MDS_H */
