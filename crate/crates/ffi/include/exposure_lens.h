#ifndef EXPOSURE_LENS_H
#define EXPOSURE_LENS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum {
  EL_STATUS_OK = 0,
  EL_STATUS_NULL_POINTER = 1,
  EL_STATUS_INVALID_ARGUMENT = 2,
  EL_STATUS_IO = 3,
  EL_STATUS_PARSE = 4,
  EL_STATUS_VALIDATION = 5,
  EL_STATUS_NUMERICAL = 6,
  EL_STATUS_NOT_FOUND = 7,
  EL_STATUS_PANIC = 99,
} ElStatus;

// Occupation-level exposure scores.
typedef struct ElExposureVector ElExposureVector;

// Selection ratios and task tilts.
typedef struct ElSelectionProfile ElSelectionProfile;

// Occupation share table.
typedef struct ElShareTable ElShareTable;

// Occupation by task matrix.
typedef struct ElTaskMatrix ElTaskMatrix;

// Interval between a baseline and a reweighted coefficient.
typedef struct {
  double low;
  double high;
  double width;
  double attenuation_share;
  bool same_sign;
} ElIdentifiedSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *el_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *el_version(void);

// Load an `occ_code,share` CSV.
//
// # Safety
// `path` and `label` must be NUL-terminated strings; `out` must be writable.
ElStatus el_share_table_load(const char *path,
                             const char *label,
                             bool percent,
                             bool normalize,
                             ElShareTable **out);

// Build a share table from `n` codes and shares.
//
// # Safety
// `codes` and `shares` must point to `n` elements; each code is NUL-terminated.
ElStatus el_share_table_new(const char *label,
                            const char *const *codes,
                            const double *shares,
                            size_t n,
                            bool normalize,
                            ElShareTable **out);

// # Safety
// `t` must be a live handle or NULL.
size_t el_share_table_len(const ElShareTable *t);

// # Safety
// `t` must be a live handle or NULL, and `code` NUL-terminated.
ElStatus el_share_table_get(const ElShareTable *t, const char *code, double *out);

// # Safety
// `t` must come from this library and not be used afterwards.
void el_share_table_free(ElShareTable *t);

// Load an `occ_code,task_id,q,q_p,tau` CSV.
//
// # Safety
// `path` must be NUL-terminated; `out` must be writable.
ElStatus el_task_matrix_load(const char *path, bool normalize, ElTaskMatrix **out);

// # Safety
// `m` must be a live handle or NULL.
size_t el_task_matrix_len(const ElTaskMatrix *m);

// # Safety
// `m` must come from this library and not be used afterwards.
void el_task_matrix_free(ElTaskMatrix *m);

// ψ = platform / workforce share. Pass a task matrix to also fill θ and η, or NULL.
//
// # Safety
// Handles must be live (`tasks` may be NULL); `out` must be writable.
ElStatus el_selection_compute(const ElShareTable *platform,
                              const ElShareTable *workforce,
                              const ElTaskMatrix *tasks,
                              ElSelectionProfile **out);

// Number of occupations with a defined ψ.
//
// # Safety
// `s` must be a live handle or NULL.
size_t el_selection_len(const ElSelectionProfile *s);

// # Safety
// `s` must be a live handle, `code` NUL-terminated and `out` writable.
ElStatus el_selection_psi(const ElSelectionProfile *s, const char *code, double *out);

// Load an `occ_code,psi,flag` CSV.
//
// # Safety
// `path` must be NUL-terminated; `out` must be writable.
ElStatus el_selection_load(const char *path, ElSelectionProfile **out);

// # Safety
// `s` must come from this library and not be used afterwards.
void el_selection_free(ElSelectionProfile *s);

// Load an `occ_code,value,role` CSV.
//
// # Safety
// `path` must be NUL-terminated; `out` must be writable.
ElStatus el_exposure_load(const char *path, ElExposureVector **out);

// True exposure Σ q τ per occupation.
//
// # Safety
// `tasks` must be live; `out` must be writable.
ElStatus el_exposure_true(const ElTaskMatrix *tasks, ElExposureVector **out);

// Platform proxy ψ Σ θ q τ + u with u ~ N(0, noise_sd²) drawn from `seed`.
// The profile needs θ, so build it with a task matrix.
//
// # Safety
// Handles must be live; `out` must be writable.
ElStatus el_exposure_proxy(const ElTaskMatrix *tasks,
                           const ElSelectionProfile *profile,
                           double noise_sd,
                           uint64_t seed,
                           ElExposureVector **out);

// Proxy divided by ψ.
//
// # Safety
// Handles must be live; `out` must be writable.
ElStatus el_exposure_reweight(const ElExposureVector *proxy,
                              const ElSelectionProfile *profile,
                              ElExposureVector **out);

// Weighted z-score using a share table as weights.
//
// # Safety
// Handles must be live; `out` must be writable.
ElStatus el_exposure_standardize(const ElExposureVector *v,
                                 const ElShareTable *weights,
                                 ElExposureVector **out);

// # Safety
// `v` must be a live handle or NULL.
size_t el_exposure_len(const ElExposureVector *v);

// # Safety
// `v` must be live, `code` NUL-terminated and `out` writable.
ElStatus el_exposure_get(const ElExposureVector *v, const char *code, double *out);

// Write the vector as `occ_code,value,role`.
//
// # Safety
// `v` must be live and `path` NUL-terminated.
ElStatus el_exposure_write(const ElExposureVector *v, const char *path);

// # Safety
// `v` must come from this library and not be used afterwards.
void el_exposure_free(ElExposureVector *v);

// Probability limit βλκ/(λ²κ + 1); pass INFINITY for κ to get β/λ.
//
// # Safety
// `out` must be writable.
ElStatus el_plim(double beta, double lambda, double kappa, double *out);

// Magnitude interval between baseline and reweighted coefficients.
//
// # Safety
// `out` must be writable.
ElStatus el_bounds(double baseline, double reweighted, ElIdentifiedSet *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXPOSURE_LENS_H */
