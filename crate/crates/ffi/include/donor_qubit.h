#ifndef DONOR_QUBIT_H
#define DONOR_QUBIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum DqStatus {
  DQ_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  DQ_STATUS_NULL = 1,
  /**
   * Bad parameter, unit, manifest or string encoding.
   */
  DQ_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The simulation itself failed (convergence, leakage, tracking, root finding).
   */
  DQ_STATUS_SIMULATION = 3,
  DQ_STATUS_IO = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  DQ_STATUS_PANIC = 5,
} DqStatus;

/**
 * Integration frame for single-qubit simulations.
 */
typedef enum DqFrame {
  DQ_FRAME_EFFECTIVE = 0,
  DQ_FRAME_LAB_ORBITAL = 1,
  DQ_FRAME_LAB_POSITION = 2,
} DqFrame;

/**
 * A parsed experiment manifest. Opaque.
 */
typedef struct DqManifest DqManifest;

/**
 * Device parameters. Opaque.
 */
typedef struct DqParams DqParams;

/**
 * Phases of a two-qubit CPHASE operation, in radians.
 */
typedef struct DqCphaseReport {
  double alpha;
  double beta;
  double gamma;
  double delta;
  double phi;
  double correction1;
  double correction2;
  double nonadiabaticity;
} DqCphaseReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dq_version(void);

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into the library on the same thread.
 */
const char *dq_last_error(void);

/**
 * Releases a string returned by the library.
 *
 * # Safety
 * `s` is null or a string returned by this library and not yet freed.
 */
void dq_string_free(char *s);

/**
 * Default device parameters. Never returns null.
 */
struct DqParams *dq_params_new(void);

/**
 * Parameters from TOML text with unit-tagged values, e.g.
 * `b0 = "0.25 T"`. Unset keys keep their defaults.
 *
 * # Safety
 * `toml_text` is a NUL-terminated string; `out` is valid for a write.
 */
enum DqStatus dq_params_from_toml(const char *toml_text, struct DqParams **out);

/**
 * # Safety
 * `params` is null or a handle from this library not yet freed.
 */
void dq_params_free(struct DqParams *params);

/**
 * Reads one parameter in internal units (rad/s, rad/s/T, m, T, V/m).
 *
 * # Safety
 * `params` is a live handle, `key` a NUL-terminated string, `out` valid
 * for a write.
 */
enum DqStatus dq_params_get(const struct DqParams *params, const char *key, double *out);

/**
 * Qubit splitting at static field offset `de` (V/m): exact
 * diagonalization and the first-order closed form, both in rad/s.
 *
 * # Safety
 * `params` is a live handle; the outputs are valid for writes.
 */
enum DqStatus dq_qubit_splitting(const struct DqParams *params,
                                 double de,
                                 double *exact,
                                 double *approx);

/**
 * dδq/dΔE at `de`, in rad/s per V/m.
 *
 * # Safety
 * `params` is a live handle; `out` is valid for a write.
 */
enum DqStatus dq_dephasing_sensitivity(const struct DqParams *params, double de, double *out);

/**
 * Z angle of the Rz schedule of the given duration (s): simulated in
 * `frame` and predicted from the phase integral.
 *
 * # Safety
 * `params` is a live handle; the outputs are valid for writes.
 */
enum DqStatus dq_rz_angle(const struct DqParams *params,
                          double duration,
                          enum DqFrame frame,
                          double *simulated,
                          double *predicted);

/**
 * Effective Hamiltonian H′ at a static control point, row-major, 64
 * entries each for real and imaginary parts, in rad/s.
 *
 * # Safety
 * `params` is a live handle; `re` and `im` each point to 64 writable doubles.
 */
enum DqStatus dq_hprime(const struct DqParams *params,
                        double de,
                        double ea,
                        double ba,
                        double *re,
                        double *im);

/**
 * CPHASE phases for two identical donors `separation` metres apart, both
 * driven by the default smooth schedule of the given duration (s).
 *
 * # Safety
 * `params` is a live handle; `out` is valid for a write.
 */
enum DqStatus dq_cphase(const struct DqParams *params,
                        double separation,
                        double duration,
                        struct DqCphaseReport *out);

/**
 * Parses a manifest from TOML text.
 *
 * # Safety
 * `toml_text` is a NUL-terminated string; `out` is valid for a write.
 */
enum DqStatus dq_manifest_from_toml(const char *toml_text, struct DqManifest **out);

/**
 * Reads and parses a manifest file.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is valid for a write.
 */
enum DqStatus dq_manifest_load(const char *path, struct DqManifest **out);

/**
 * # Safety
 * `manifest` is null or a handle from this library not yet freed.
 */
void dq_manifest_free(struct DqManifest *manifest);

/**
 * Checks a manifest without running it.
 *
 * # Safety
 * `manifest` is a live handle.
 */
enum DqStatus dq_manifest_validate(const struct DqManifest *manifest);

/**
 * Runs a manifest. With `write_file` the output file named in the
 * manifest is written. When `text` is non-null it receives the rendered
 * output, to be released with [`dq_string_free`].
 *
 * # Safety
 * `manifest` is a live handle; `text` is null or valid for a write.
 */
enum DqStatus dq_manifest_run(const struct DqManifest *manifest, bool write_file, char **text);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DONOR_QUBIT_H */
