#ifndef COUPLED_DOA_H
#define COUPLED_DOA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define CDOA_METHOD_SBLMC 0

#define CDOA_METHOD_OGSBI 1

#define CDOA_METHOD_BCS 2

#define CDOA_METHOD_MUSIC 3

typedef enum CdoaStatus {
  CDOA_STATUS_OK = 0,
  CDOA_STATUS_NULL_POINTER = 1,
  CDOA_STATUS_INVALID_ARGUMENT = 2,
  CDOA_STATUS_INVALID_CONFIG = 3,
  CDOA_STATUS_IO = 4,
  CDOA_STATUS_PARSE = 5,
  CDOA_STATUS_NUMERICAL = 6,
  CDOA_STATUS_INFEASIBLE_SCENE = 7,
  CDOA_STATUS_BUFFER_TOO_SMALL = 8,
  CDOA_STATUS_PANIC = 9,
} CdoaStatus;

/**
 * Output of one estimator run.
 */
typedef struct CdoaResult CdoaResult;

/**
 * Simulated or loaded pulse data together with its ground truth.
 */
typedef struct CdoaSnapshots CdoaSnapshots;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. Valid until the next failing call.
 */
const char *cdoa_last_error_message(void);

/**
 * Simulate a scene. `config_toml` is the text of an experiment config, or null for the defaults.
 *
 * # Safety
 * `config_toml` must be null or a valid C string; `out` must be a valid pointer.
 */
enum CdoaStatus cdoa_simulate(const char *config_toml, uint64_t seed, struct CdoaSnapshots **out);

/**
 * # Safety
 * `path` must be a valid C string; `out` must be a valid pointer.
 */
enum CdoaStatus cdoa_snapshots_load(const char *path, struct CdoaSnapshots **out);

/**
 * # Safety
 * `snaps` must come from this library; `path` must be a valid C string.
 */
enum CdoaStatus cdoa_snapshots_save(const struct CdoaSnapshots *snaps, const char *path);

/**
 * Number of true targets, 0 for a null handle.
 *
 * # Safety
 * `snaps` must be null or come from this library.
 */
size_t cdoa_snapshots_num_targets(const struct CdoaSnapshots *snaps);

/**
 * Copy the true DOAs (degrees, ascending) into `out[0..len]`.
 *
 * # Safety
 * `snaps` must come from this library; `out` must point to `len` writable doubles.
 */
enum CdoaStatus cdoa_snapshots_true_doas(const struct CdoaSnapshots *snaps,
                                         double *out,
                                         size_t len);

/**
 * # Safety
 * `snaps` must be null or come from this library, and must not be used afterwards.
 */
void cdoa_snapshots_free(struct CdoaSnapshots *snaps);

/**
 * Run `method` (a `CDOA_METHOD_*` code) for `k` targets; `k = 0` uses the scene's target count.
 * `config_toml` may be null for default hyperparameters.
 *
 * # Safety
 * `snaps` must come from this library; `config_toml` must be null or a valid C string;
 * `out` must be a valid pointer.
 */
enum CdoaStatus cdoa_estimate(const struct CdoaSnapshots *snaps,
                              uint32_t method,
                              size_t k,
                              const char *config_toml,
                              struct CdoaResult **out);

/**
 * # Safety
 * `res` must be null or come from this library.
 */
size_t cdoa_result_num_doas(const struct CdoaResult *res);

/**
 * # Safety
 * `res` must come from this library; `out` must point to `len` writable doubles.
 */
enum CdoaStatus cdoa_result_doas(const struct CdoaResult *res, double *out, size_t len);

/**
 * # Safety
 * `res` must be null or come from this library.
 */
size_t cdoa_result_spectrum_len(const struct CdoaResult *res);

/**
 * Copy spectrum angles (degrees) and powers, each of length `cdoa_result_spectrum_len`.
 *
 * # Safety
 * `res` must come from this library; `angles` and `power` must each point to `len` writable doubles.
 */
enum CdoaStatus cdoa_result_spectrum(const struct CdoaResult *res,
                                     double *angles,
                                     double *power,
                                     size_t len);

/**
 * 1 if the estimator met its stopping threshold, 0 otherwise or for a null handle.
 *
 * # Safety
 * `res` must be null or come from this library.
 */
int32_t cdoa_result_converged(const struct CdoaResult *res);

/**
 * # Safety
 * `res` must be null or come from this library.
 */
size_t cdoa_result_iterations(const struct CdoaResult *res);

/**
 * # Safety
 * `res` must come from this library; `path` must be a valid C string.
 */
enum CdoaStatus cdoa_result_save(const struct CdoaResult *res, const char *path);

/**
 * # Safety
 * `res` must be null or come from this library, and must not be used afterwards.
 */
void cdoa_result_free(struct CdoaResult *res);

/**
 * Squared angle error in dB; writes `-INFINITY` on exact recovery.
 *
 * # Safety
 * `est` and `truth` must point to `n_est` and `n_truth` readable doubles; `out_db` must be valid.
 */
enum CdoaStatus cdoa_error_metric(const double *est,
                                  size_t n_est,
                                  const double *truth,
                                  size_t n_truth,
                                  double *out_db);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COUPLED_DOA_H */
