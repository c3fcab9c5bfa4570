#ifndef ECLIPSEWATCH_H
#define ECLIPSEWATCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result of every fallible call.
 */
typedef enum EwStatus {
  EW_STATUS_OK = 0,
  EW_STATUS_NULL_POINTER = 1,
  EW_STATUS_INVALID_ARGUMENT = 2,
  EW_STATUS_DATA_ERROR = 3,
  EW_STATUS_DEGENERATE_VARIANCE = 4,
  EW_STATUS_PROJECTION_FAILED = 5,
  EW_STATUS_IO_ERROR = 6,
  EW_STATUS_PANIC = 99,
} EwStatus;

/**
 * Mean used by the statistic.
 */
typedef enum EwMeanMode {
  EW_MEAN_MODE_EUCLIDEAN = 0,
  EW_MEAN_MODE_SAMPLE_RESTRICTED = 1,
} EwMeanMode;

/**
 * Opaque detection report.
 */
typedef struct EwReport EwReport;

/**
 * Opaque graph sequence.
 */
typedef struct EwSequence EwSequence;

/**
 * Detector settings. Start from [`ew_detect_config_default`].
 */
typedef struct EwDetectConfig {
  double alpha;
  double delta;
  enum EwMeanMode mean_mode;
  /**
   * Projection dimension; 0 disables the projection.
   */
  size_t jl_dim;
  double epsilon;
  uint64_t jl_seed;
  size_t max_retries;
  size_t quantile_paths;
  /**
   * Bridge grid; 0 uses the sequence length.
   */
  size_t quantile_grid;
  uint64_t quantile_seed;
} EwDetectConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *ew_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ew_version(void);

/**
 * Simulates a sequence. `tau` is the 1-based first attacked snapshot and is
 * ignored when `attack` is false. Victim and attacker arrays may be NULL
 * when their length is 0.
 *
 * # Safety
 * Array pointers must be valid for their lengths; `out` must be writable.
 */
enum EwStatus ew_simulate(size_t p,
                          size_t q,
                          size_t n,
                          size_t rows_used,
                          bool attack,
                          size_t tau,
                          const size_t *victims,
                          size_t n_victims,
                          const size_t *attackers,
                          size_t n_attackers,
                          uint64_t seed,
                          struct EwSequence **out);

/**
 * Simulates the 100-vertex, 4-row, 1000-snapshot preset (onset 600).
 *
 * # Safety
 * `out` must be writable.
 */
enum EwStatus ew_simulate_paper_iv(bool attack, uint64_t seed, struct EwSequence **out);

/**
 * Builds a sequence from `n` row-major `rows_used x p` 0/1 matrices laid
 * out back to back.
 *
 * # Safety
 * `entries` must hold `n * rows_used * p` bytes; `out` must be writable.
 */
enum EwStatus ew_sequence_from_entries(size_t n,
                                       size_t rows_used,
                                       size_t p,
                                       size_t q,
                                       const uint8_t *entries,
                                       struct EwSequence **out);

/**
 * Reads a dataset file.
 *
 * # Safety
 * `file` must be a NUL-terminated string; `out` must be writable.
 */
enum EwStatus ew_sequence_load(const char *file, struct EwSequence **out);

/**
 * Writes a dataset file.
 *
 * # Safety
 * `seq` must come from this library; `file` must be NUL-terminated.
 */
enum EwStatus ew_sequence_save(const struct EwSequence *seq, const char *file);

/**
 * Returns a noisy copy; `snr` of +infinity returns an identical copy.
 *
 * # Safety
 * `seq` must come from this library; `out` must be writable.
 */
enum EwStatus ew_sequence_apply_noise(const struct EwSequence *seq,
                                      double snr,
                                      uint64_t seed,
                                      struct EwSequence **out);

/**
 * Number of snapshots, or 0 for NULL.
 *
 * # Safety
 * `seq` must be NULL or come from this library.
 */
size_t ew_sequence_len(const struct EwSequence *seq);

/**
 * Entries per snapshot (`rows_used * p`), or 0 for NULL.
 *
 * # Safety
 * `seq` must be NULL or come from this library.
 */
size_t ew_sequence_dim(const struct EwSequence *seq);

/**
 * # Safety
 * `seq` must be NULL or come from this library, and not be used afterwards.
 */
void ew_sequence_free(struct EwSequence *seq);

struct EwDetectConfig ew_detect_config_default(void);

/**
 * Runs the detector. `config` may be NULL for defaults.
 *
 * # Safety
 * `seq` must come from this library; `out` must be writable.
 */
enum EwStatus ew_detect(const struct EwSequence *seq,
                        const struct EwDetectConfig *config,
                        struct EwReport **out);

/**
 * # Safety
 * `report` must be NULL or come from this library.
 */
bool ew_report_detected(const struct EwReport *report);

/**
 * Writes the estimated onset and returns true when an attack was detected.
 *
 * # Safety
 * `report` must be NULL or come from this library; `out` NULL or writable.
 */
bool ew_report_tau_hat(const struct EwReport *report, size_t *out);

/**
 * Maximum scaled statistic, NaN for NULL.
 *
 * # Safety
 * `report` must be NULL or come from this library.
 */
double ew_report_max_stat(const struct EwReport *report);

/**
 * Threshold used, NaN for NULL.
 *
 * # Safety
 * `report` must be NULL or come from this library.
 */
double ew_report_threshold(const struct EwReport *report);

/**
 * Number of admissible splits in the curve, 0 for NULL.
 *
 * # Safety
 * `report` must be NULL or come from this library.
 */
size_t ew_report_curve_len(const struct EwReport *report);

/**
 * Copies splits and scaled statistics into caller buffers of length `cap`,
 * which must be at least [`ew_report_curve_len`].
 *
 * # Safety
 * Buffers must be writable for `cap` elements.
 */
enum EwStatus ew_report_curve(const struct EwReport *report,
                              size_t *splits,
                              double *scaled,
                              size_t cap);

/**
 * Full report as JSON. Release with [`ew_string_free`].
 *
 * # Safety
 * `report` must come from this library; `out` must be writable.
 */
enum EwStatus ew_report_to_json(const struct EwReport *report, char **out);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library.
 */
void ew_string_free(char *s);

/**
 * # Safety
 * `report` must be NULL or come from this library, and not be used afterwards.
 */
void ew_report_free(struct EwReport *report);

/**
 * `(1 - alpha)` quantile of the squared standardized bridge maximum.
 *
 * # Safety
 * `out` must be writable.
 */
enum EwStatus ew_bridge_quantile(double alpha,
                                 double delta,
                                 size_t grid,
                                 size_t paths,
                                 uint64_t seed,
                                 double *out);

/**
 * Frobenius distance between two row-major `rows x p` 0/1 matrices.
 *
 * # Safety
 * `a` and `b` must hold `rows * p` bytes; `out` must be writable.
 */
enum EwStatus ew_frobenius_distance(const uint8_t *a,
                                    const uint8_t *b,
                                    size_t rows,
                                    size_t p,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ECLIPSEWATCH_H */
