#ifndef LIPEXT_H
#define LIPEXT_H

#include <stddef.h>
#include <stdint.h>

// Status codes returned by every fallible function.
typedef enum LipextStatus {
  LIPEXT_STATUS_OK = 0,
  LIPEXT_STATUS_NULL_POINTER = 1,
  LIPEXT_STATUS_PARAMETER = 2,
  LIPEXT_STATUS_FORMAT = 3,
  LIPEXT_STATUS_INVARIANT_VIOLATION = 4,
  LIPEXT_STATUS_PREMISE_VIOLATION = 5,
  LIPEXT_STATUS_SOLVER = 6,
  LIPEXT_STATUS_IO = 7,
  LIPEXT_STATUS_PANIC = 8,
} LipextStatus;

// One measure per point of a space.
typedef struct LipextFamily LipextFamily;

// The extension matrix for a family and a subset.
typedef struct LipextOperator LipextOperator;

// A validated finite metric space.
typedef struct LipextSpace LipextSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread. Valid until the next
// failing call on the same thread; never NULL.
const char *lipext_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *lipext_version(void);

// Builds a space from an `n x n` row-major distance matrix, validating the
// metric axioms.
//
// # Safety
// `dist` must point to `n * n` readable doubles; `out` must be writable.
enum LipextStatus lipext_space_from_matrix(const double *dist, size_t n, struct LipextSpace **out);

// Parses a `lipext/1` space document (explicit matrix or generator).
//
// # Safety
// `json` must be a valid NUL-terminated string; `out` must be writable.
enum LipextStatus lipext_space_from_json(const char *json, struct LipextSpace **out);

// Unit-spaced path with `n` points.
//
// # Safety
// `out` must be writable.
enum LipextStatus lipext_space_path(size_t n, struct LipextSpace **out);

// # Safety
// `space` must be a live handle; `out` must be writable.
enum LipextStatus lipext_space_size(const struct LipextSpace *space, size_t *out);

// # Safety
// `space` must be NULL or a handle not yet freed.
void lipext_space_free(struct LipextSpace *space);

// Counting measure at every point.
//
// # Safety
// `space` must be a live handle; `out` must be writable.
enum LipextStatus lipext_family_counting(const struct LipextSpace *space,
                                         struct LipextFamily **out);

// `mu_m = delta_m`.
//
// # Safety
// `space` must be a live handle; `out` must be writable.
enum LipextStatus lipext_family_dirac(const struct LipextSpace *space, struct LipextFamily **out);

// `w_m(x) = exp(-d(m, x) / scale)`.
//
// # Safety
// `space` must be a live handle; `out` must be writable.
enum LipextStatus lipext_family_kernel(const struct LipextSpace *space,
                                       double scale,
                                       struct LipextFamily **out);

// Explicit `n x n` row-major weights, row = center.
//
// # Safety
// `weights` must point to `n * n` readable doubles where `n` is the space
// size; `space` must be a live handle; `out` must be writable.
enum LipextStatus lipext_family_from_weights(const struct LipextSpace *space,
                                             const double *weights,
                                             size_t len,
                                             struct LipextFamily **out);

// Doubling `D`, consistency `C` on `(0, r_max]` and uniformity `K`. A
// nonpositive `r_max` selects the diameter. Any output pointer may be NULL.
//
// # Safety
// `family` must be a live handle; non-NULL outputs must be writable.
enum LipextStatus lipext_family_constants(const struct LipextFamily *family,
                                          double r_max,
                                          double *doubling,
                                          double *consistency_out,
                                          double *uniformity_out);

// # Safety
// `family` must be NULL or a handle not yet freed.
void lipext_family_free(struct LipextFamily *family);

// Builds the extension operator for `subset` (point indices, any order,
// duplicates ignored).
//
// # Safety
// `subset` must point to `len` readable indices; `family` must be a live
// handle; `out` must be writable.
enum LipextStatus lipext_operator_build(const struct LipextFamily *family,
                                        const size_t *subset,
                                        size_t len,
                                        struct LipextOperator **out);

// Number of points `M` and of subset points `|S|`; the subset is sorted.
//
// # Safety
// `op` must be a live handle; non-NULL outputs must be writable.
enum LipextStatus lipext_operator_shape(const struct LipextOperator *op,
                                        size_t *points,
                                        size_t *subset_size);

// Copies the sorted subset into `out` (`len` must equal `|S|`).
//
// # Safety
// `out` must point to `len` writable indices.
enum LipextStatus lipext_operator_subset(const struct LipextOperator *op, size_t *out, size_t len);

// Copies the `M x |S|` matrix into `out`, row-major.
//
// # Safety
// `out` must point to `len` writable doubles.
enum LipextStatus lipext_operator_matrix(const struct LipextOperator *op, double *out, size_t len);

// `F = E f` for `f` given as `|S| x k` (rows in sorted subset order),
// written as `M x k` into `out`.
//
// # Safety
// `f` must point to `|S| * k` readable doubles and `out` to `out_len`
// writable doubles.
enum LipextStatus lipext_operator_apply(const struct LipextOperator *op,
                                        const double *f,
                                        size_t k,
                                        double *out,
                                        size_t out_len);

// Exact operator norm for scalar data. `degenerate` is set to 1 when
// `|S| = 1` (the norm is then reported as 0). Either output may be NULL.
//
// # Safety
// `op` must be a live handle; non-NULL outputs must be writable.
enum LipextStatus lipext_operator_norm(const struct LipextOperator *op,
                                       double *value,
                                       int32_t *degenerate);

// # Safety
// `op` must be NULL or a handle not yet freed.
void lipext_operator_free(struct LipextOperator *op);

// Transport norm of the balanced chain `sum coeffs[i] delta(i)`.
//
// # Safety
// `coeffs` must point to `len` readable doubles (`len` = space size);
// `out` must be writable.
enum LipextStatus lipext_kr_norm(const struct LipextSpace *space,
                                 const double *coeffs,
                                 size_t len,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LIPEXT_H */
