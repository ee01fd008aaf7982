#ifndef MANAKOV_SCATTER_H
#define MANAKOV_SCATTER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. The numeric values of the library errors match the exit
 * codes of the `manakov` binary.
 */
typedef enum MsStatus {
  MS_STATUS_OK = 0,
  MS_STATUS_NULL_POINTER = 1,
  MS_STATUS_INPUT = 2,
  MS_STATUS_NUMERICAL = 3,
  MS_STATUS_CASE_VIOLATION = 4,
  MS_STATUS_PANIC = 5,
} MsStatus;

/**
 * Sampled potential `(u, v)` on a uniform x-grid.
 */
typedef struct MsPotential MsPotential;

/**
 * Reflection coefficients and discrete spectrum on a lambda grid.
 */
typedef struct MsScattering MsScattering;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len` bytes) and returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t ms_last_error(char *buf, uintptr_t len);

/**
 * Builds a potential from `n` interleaved complex samples of `u` and `v`
 * on the uniform grid `[x_min, x_max]`.
 *
 * # Safety
 * `u` and `v` must point to `2 n` doubles; `out` must be writable.
 */
enum MsStatus ms_potential_new(double x_min,
                               double x_max,
                               uintptr_t n,
                               int eps,
                               const double *u,
                               const double *v,
                               struct MsPotential **out_pot);

/**
 * Reads a potential text file.
 *
 * # Safety
 * `file` must be a NUL-terminated string; `out` must be writable.
 */
enum MsStatus ms_potential_read(const char *file, struct MsPotential **out_pot);

/**
 * # Safety
 * `pot` must be a live handle; `file` a NUL-terminated string.
 */
enum MsStatus ms_potential_write(const struct MsPotential *pot, const char *file);

/**
 * Number of grid nodes.
 *
 * # Safety
 * `pot` must be null or a live handle. Null yields 0.
 */
uintptr_t ms_potential_len(const struct MsPotential *pot);

/**
 * Copies the samples into `u` and `v` (each `2 * ms_potential_len` doubles).
 *
 * # Safety
 * `pot` must be a live handle; `u`, `v` must be writable for the length above.
 */
enum MsStatus ms_potential_samples(const struct MsPotential *pot, double *u, double *v);

/**
 * # Safety
 * `pot` must be null or a handle not yet freed.
 */
void ms_potential_free(struct MsPotential *pot);

/**
 * Direct transform on `n_lambda` nodes of `[-lambda_max, lambda_max]`.
 * `case_out` receives 1, 2 or 3. In case 3 (a real zero of `s11` below
 * `tol_zero`) no handle is produced and the status is `CaseViolation`.
 *
 * # Safety
 * `pot` must be a live handle; `out` must be writable; `case_out` may be null.
 */
enum MsStatus ms_direct(const struct MsPotential *pot,
                        double lambda_max,
                        uintptr_t n_lambda,
                        double tol_zero,
                        struct MsScattering **out_data,
                        int *case_out);

/**
 * Reconstructs the potential on `nx` nodes of `[x_min, x_max]`.
 * `residual_out` (optional) receives the largest solver residual.
 *
 * # Safety
 * `data` must be a live handle; `out` writable; `residual_out` may be null.
 */
enum MsStatus ms_inverse(const struct MsScattering *data,
                         double x_min,
                         double x_max,
                         uintptr_t nx,
                         struct MsPotential **out_pot,
                         double *residual_out);

/**
 * Evolves the data to time `t`; `flow` is the power of lambda (2 or 3).
 * A non-finite `kappa` selects the calibrated default of the flow.
 *
 * # Safety
 * `data` must be a live handle; `out` writable.
 */
enum MsStatus ms_evolve(const struct MsScattering *data,
                        double t,
                        int flow_power,
                        double kappa,
                        struct MsScattering **out_data);

/**
 * Number of lambda nodes.
 *
 * # Safety
 * `data` must be null or a live handle. Null yields 0.
 */
uintptr_t ms_scattering_len(const struct MsScattering *data);

/**
 * Copies `rho1` and `rho2` (each `2 * ms_scattering_len` doubles).
 *
 * # Safety
 * `data` must be a live handle; the output buffers writable for that length.
 */
enum MsStatus ms_scattering_rho(const struct MsScattering *data, double *rho1, double *rho2);

/**
 * Number of discrete eigenvalues.
 *
 * # Safety
 * `data` must be null or a live handle. Null yields 0.
 */
uintptr_t ms_scattering_n_discrete(const struct MsScattering *data);

/**
 * Eigenvalue `k` into `z` (2 doubles) and its norming vector into `c`
 * (4 doubles, may be null).
 *
 * # Safety
 * `data` must be a live handle; `z` writable for 2 doubles, `c` for 4.
 */
enum MsStatus ms_scattering_eigenvalue(const struct MsScattering *data,
                                       uintptr_t k,
                                       double *z,
                                       double *c);

/**
 * # Safety
 * `file` must be a NUL-terminated string; `out` writable.
 */
enum MsStatus ms_scattering_read(const char *file, struct MsScattering **out_data);

/**
 * # Safety
 * `data` must be a live handle; `file` a NUL-terminated string.
 */
enum MsStatus ms_scattering_write(const struct MsScattering *data, const char *file);

/**
 * # Safety
 * `data` must be null or a handle not yet freed.
 */
void ms_scattering_free(struct MsScattering *data);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MANAKOV_SCATTER_H */
