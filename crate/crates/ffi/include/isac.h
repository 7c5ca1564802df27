#ifndef ISAC_H
#define ISAC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum IsacStatus {
  ISAC_STATUS_OK = 0,
  ISAC_STATUS_NULL_POINTER = 1,
  ISAC_STATUS_INVALID_UTF8 = 2,
  ISAC_STATUS_VALIDATION = 3,
  ISAC_STATUS_RUNTIME = 4,
  ISAC_STATUS_IO = 5,
  ISAC_STATUS_OUT_OF_RANGE = 6,
  ISAC_STATUS_BUFFER_TOO_SMALL = 7,
  ISAC_STATUS_PANIC = 8,
} IsacStatus;

/**
 * Opaque result bundle of one experiment.
 */
typedef struct IsacBundle IsacBundle;

/**
 * Opaque validated scenario.
 */
typedef struct IsacScenario IsacScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf`.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes; `needed` must be null or writable.
 */
enum IsacStatus isac_last_error(char *buf, size_t len, size_t *needed);

/**
 * Parses and validates a JSON scenario.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum IsacStatus isac_scenario_from_json(const char *json, struct IsacScenario **out);

/**
 * Number of unknown fields that were ignored while parsing.
 *
 * # Safety
 * `scenario` must be a live handle or null.
 */
size_t isac_scenario_unknown_field_count(const struct IsacScenario *scenario);

/**
 * Overrides the scenario seed.
 *
 * # Safety
 * `scenario` must be a live handle.
 */
enum IsacStatus isac_scenario_set_seed(struct IsacScenario *scenario, uint64_t seed);

/**
 * Releases a scenario handle. Null is ignored.
 *
 * # Safety
 * `scenario` must be null or a handle not yet freed.
 */
void isac_scenario_free(struct IsacScenario *scenario);

/**
 * Runs one experiment and returns its result bundle.
 *
 * # Safety
 * `scenario` must be a live handle, `experiment` NUL-terminated and `out` writable.
 */
enum IsacStatus isac_run_experiment(const struct IsacScenario *scenario,
                                    const char *experiment,
                                    struct IsacBundle **out);

/**
 * Number of artifacts in a bundle.
 *
 * # Safety
 * `bundle` must be a live handle or null.
 */
size_t isac_bundle_artifact_count(const struct IsacBundle *bundle);

/**
 * File name of artifact `index`, copied as in [`isac_last_error`].
 *
 * # Safety
 * `bundle` must be a live handle; `buf`/`needed` as in [`isac_last_error`].
 */
enum IsacStatus isac_bundle_artifact_name(const struct IsacBundle *bundle,
                                          size_t index,
                                          char *buf,
                                          size_t len,
                                          size_t *needed);

/**
 * Borrows the bytes of artifact `index`; valid until the bundle is freed.
 *
 * # Safety
 * `bundle` must be a live handle; `data` and `len` must be writable.
 */
enum IsacStatus isac_bundle_artifact_data(const struct IsacBundle *bundle,
                                          size_t index,
                                          const uint8_t **data,
                                          size_t *len);

/**
 * Writes the bundle, `run.json` and `manifest.json` under `out_dir/<experiment>/`.
 *
 * # Safety
 * `bundle` must be a live handle and `out_dir` NUL-terminated.
 */
enum IsacStatus isac_bundle_write(const struct IsacBundle *bundle, const char *out_dir);

/**
 * Releases a bundle handle. Null is ignored.
 *
 * # Safety
 * `bundle` must be null or a handle not yet freed.
 */
void isac_bundle_free(struct IsacBundle *bundle);

/**
 * Bessel function of the first kind `J_order(x)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum IsacStatus isac_bessel_j(int32_t order, double x, double *out);

/**
 * Number of mode combinations `C_slot` for `k` users with `sizes[k]` modes each.
 *
 * # Safety
 * `sizes` must be valid for `k` reads and `out` writable.
 */
enum IsacStatus isac_mode_combinations(size_t n_t,
                                       const size_t *sizes,
                                       size_t k,
                                       size_t slot,
                                       uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISAC_H */
