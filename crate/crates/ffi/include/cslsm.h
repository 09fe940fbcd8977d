#ifndef CSLSM_H
#define CSLSM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CslsmDenoiser {
  CSLSM_DENOISER_TIKHONOV = 0,
  CSLSM_DENOISER_TV = 1,
  CSLSM_DENOISER_BM3D = 2,
} CslsmDenoiser;

/**
 * Result codes. Configuration, divergence and I/O failures share their
 * numbers with the command-line exit codes.
 */
typedef enum CslsmStatus {
  CSLSM_STATUS_OK = 0,
  CSLSM_STATUS_NULL_POINTER = 1,
  CSLSM_STATUS_CONFIG = 2,
  CSLSM_STATUS_DIVERGENCE = 3,
  CSLSM_STATUS_IO = 4,
  CSLSM_STATUS_DIMENSION = 5,
  CSLSM_STATUS_FORMAT = 6,
  CSLSM_STATUS_PANIC = 7,
} CslsmStatus;

typedef struct CslsmMasks CslsmMasks;

typedef struct CslsmMeasurements CslsmMeasurements;

typedef struct CslsmVolume CslsmVolume;

/**
 * Solver settings. Zero `max_iters` or `rel_tol` selects the defaults for
 * the noise level of the measurements.
 */
typedef struct CslsmSolverParams {
  enum CslsmDenoiser denoiser;
  double lambda;
  double rho;
  double gamma;
  bool temporal;
  size_t max_iters;
  double rel_tol;
} CslsmSolverParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *cslsm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cslsm_version(void);

/**
 * Creates a volume from `nx*ny*nz` voxels, slice-major and row-major.
 *
 * # Safety
 * `voxels` must point to `nx*ny*nz` readable doubles; `out` must be writable.
 */
enum CslsmStatus cslsm_volume_new(size_t nx,
                                  size_t ny,
                                  size_t nz,
                                  const double *voxels,
                                  struct CslsmVolume **out);

/**
 * # Safety
 * `v` must be a live handle; each output pointer must be writable or NULL.
 */
enum CslsmStatus cslsm_volume_dims(const struct CslsmVolume *v, size_t *nx, size_t *ny, size_t *nz);

/**
 * Copies all voxels into `out`, which holds `len` doubles.
 *
 * # Safety
 * `v` must be a live handle and `out` must point to `len` writable doubles.
 */
enum CslsmStatus cslsm_volume_copy_voxels(const struct CslsmVolume *v, double *out, size_t len);

/**
 * # Safety
 * `v` must be NULL or a handle not yet freed.
 */
void cslsm_volume_free(struct CslsmVolume *v);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CslsmStatus cslsm_volume_read(const char *path, struct CslsmVolume **out);

/**
 * # Safety
 * `v` must be a live handle and `path` a NUL-terminated string.
 */
enum CslsmStatus cslsm_volume_write(const struct CslsmVolume *v, const char *path);

/**
 * Renders the synthetic heart phantom.
 *
 * # Safety
 * `out` must be writable.
 */
enum CslsmStatus cslsm_phantom_generate(size_t nx,
                                        size_t ny,
                                        size_t nz,
                                        size_t nuclei,
                                        uint64_t seed,
                                        struct CslsmVolume **out);

/**
 * Encodes `v` into shots with `ratio` masks per shot.
 *
 * # Safety
 * `v` must be a live handle; both output pointers must be writable.
 */
enum CslsmStatus cslsm_encode(const struct CslsmVolume *v,
                              size_t ratio,
                              double mask_density,
                              uint64_t mask_seed,
                              double noise_variance,
                              uint64_t noise_seed,
                              struct CslsmMeasurements **out_measurements,
                              struct CslsmMasks **out_masks);

/**
 * # Safety
 * `m` must be NULL or a handle not yet freed.
 */
void cslsm_measurements_free(struct CslsmMeasurements *m);

/**
 * # Safety
 * `m` must be NULL or a handle not yet freed.
 */
void cslsm_masks_free(struct CslsmMasks *m);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CslsmStatus cslsm_measurements_read(const char *path, struct CslsmMeasurements **out);

/**
 * # Safety
 * `m` must be a live handle and `path` a NUL-terminated string.
 */
enum CslsmStatus cslsm_measurements_write(const struct CslsmMeasurements *m, const char *path);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CslsmStatus cslsm_masks_read(const char *path, struct CslsmMasks **out);

/**
 * # Safety
 * `m` must be a live handle and `path` a NUL-terminated string.
 */
enum CslsmStatus cslsm_masks_write(const struct CslsmMasks *m, const char *path);

/**
 * Runs the ADMM reconstruction. `iterations` may be NULL.
 *
 * # Safety
 * Handles must be live, `params` readable and `out` writable.
 */
enum CslsmStatus cslsm_reconstruct(const struct CslsmMeasurements *measurements,
                                   const struct CslsmMasks *masks,
                                   const struct CslsmSolverParams *params,
                                   struct CslsmVolume **out,
                                   size_t *iterations);

/**
 * PSNR in dB; identical volumes give +infinity.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum CslsmStatus cslsm_psnr(const struct CslsmVolume *reference,
                            const struct CslsmVolume *test,
                            double peak,
                            double *out);

/**
 * Mean 3D SSIM.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum CslsmStatus cslsm_ssim3d(const struct CslsmVolume *reference,
                              const struct CslsmVolume *test,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSLSM_H */
