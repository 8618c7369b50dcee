#ifndef COVERT_LAB_H
#define COVERT_LAB_H

/* Generated by cbindgen from crates/covert-lab-ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CovertLabStatus {
  COVERT_LAB_STATUS_OK = 0,
  COVERT_LAB_STATUS_NULL_POINTER = 1,
  COVERT_LAB_STATUS_UTF8 = 2,
  COVERT_LAB_STATUS_INVALID_ARGUMENT = 3,
  COVERT_LAB_STATUS_CONFIG = 4,
  COVERT_LAB_STATUS_UNKNOWN_EXPERIMENT = 5,
  COVERT_LAB_STATUS_PROTOCOL_FAILURE = 6,
  COVERT_LAB_STATUS_IO = 7,
  COVERT_LAB_STATUS_PANIC = 8,
} CovertLabStatus;

/**
 * Parsed experiment configuration.
 */
typedef struct CovertLabConfig CovertLabConfig;

/**
 * Finished experiment report.
 */
typedef struct CovertLabReport CovertLabReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread; returns its full length.
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes.
 */
size_t covert_lab_last_error(char *buf, size_t cap);

size_t covert_lab_experiment_count(void);

/**
 * Copies the id of experiment `index`; returns its length, or 0 when out
 * of range.
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes.
 */
size_t covert_lab_experiment_id(size_t index, char *buf, size_t cap);

/**
 * Acceptance criterion of experiment `index`, or 0 when it has none.
 */
uint8_t covert_lab_experiment_criterion(size_t index);

/**
 * Parses a TOML config.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum CovertLabStatus covert_lab_config_from_toml(const char *toml, struct CovertLabConfig **out);

/**
 * Default config of an experiment id with the given seed.
 *
 * # Safety
 * `id` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum CovertLabStatus covert_lab_config_default(const char *id,
                                               uint64_t seed,
                                               struct CovertLabConfig **out);

/**
 * # Safety
 * `cfg` must come from this library and not be freed.
 */
enum CovertLabStatus covert_lab_config_set_seed(struct CovertLabConfig *cfg, uint64_t seed);

/**
 * Overrides the trial count; 0 restores the experiment default.
 *
 * # Safety
 * `cfg` must come from this library and not be freed.
 */
enum CovertLabStatus covert_lab_config_set_trials(struct CovertLabConfig *cfg, uint64_t trials);

/**
 * # Safety
 * `cfg` must be null or come from this library; it must not be used after.
 */
void covert_lab_config_free(struct CovertLabConfig *cfg);

/**
 * Runs one experiment.
 *
 * # Safety
 * `cfg` must come from this library; `out` must be valid for a write.
 */
enum CovertLabStatus covert_lab_run(const struct CovertLabConfig *cfg,
                                    struct CovertLabReport **out);

/**
 * Re-runs the config echoed by a JSON-lines report; `identical` receives
 * whether the fresh report has the same bytes.
 *
 * # Safety
 * `report` must be a NUL-terminated string; `out` and `identical` must be
 * valid for writes.
 */
enum CovertLabStatus covert_lab_replay(const char *report,
                                       struct CovertLabReport **out,
                                       bool *identical);

/**
 * Whether every metric of the report passes; false for null.
 *
 * # Safety
 * `report` must be null or come from this library.
 */
bool covert_lab_report_passed(const struct CovertLabReport *report);

/**
 * # Safety
 * `report` must be null or come from this library.
 */
size_t covert_lab_report_metric_count(const struct CovertLabReport *report);

/**
 * Value and pass flag of metric `id`.
 *
 * # Safety
 * `report` must come from this library, `id` must be NUL-terminated, and
 * `value`/`pass` must be valid for writes.
 */
enum CovertLabStatus covert_lab_report_metric(const struct CovertLabReport *report,
                                              const char *id,
                                              double *value,
                                              bool *pass);

/**
 * Copies the JSON-lines report; returns its full length.
 *
 * # Safety
 * `report` must be null or come from this library; `buf` must be null or
 * valid for `cap` bytes.
 */
size_t covert_lab_report_jsonl(const struct CovertLabReport *report, char *buf, size_t cap);

/**
 * Copies the plain-text summary table; returns its full length.
 *
 * # Safety
 * As for [`covert_lab_report_jsonl`].
 */
size_t covert_lab_report_table(const struct CovertLabReport *report, char *buf, size_t cap);

/**
 * # Safety
 * `report` must be null or come from this library; it must not be used
 * after.
 */
void covert_lab_report_free(struct CovertLabReport *report);

/**
 * Total variation distance of two laws on a common support of `len` atoms.
 *
 * # Safety
 * `p` and `q` must be valid for `len` reads; `out` for a write.
 */
enum CovertLabStatus covert_lab_tv_distance(const double *p,
                                            const double *q,
                                            size_t len,
                                            double *out);

/**
 * 95% Wilson interval of `successes` out of `trials`.
 *
 * # Safety
 * `lo` and `hi` must be valid for writes.
 */
enum CovertLabStatus covert_lab_wilson95(uint64_t successes,
                                         uint64_t trials,
                                         double *lo,
                                         double *hi);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COVERT_LAB_H */
