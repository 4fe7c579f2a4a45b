#ifndef ATMLOC_H
#define ATMLOC_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Values 1-3 match the command-line exit codes.
 */
typedef enum AtmlocStatus {
  ATMLOC_STATUS_OK = 0,
  /**
   * Schema, parse, validation or configuration error.
   */
  ATMLOC_STATUS_VALIDATION = 1,
  ATMLOC_STATUS_IO = 2,
  /**
   * Numeric precondition violated.
   */
  ATMLOC_STATUS_DOMAIN = 3,
  /**
   * Problem too large for the requested method.
   */
  ATMLOC_STATUS_CAPACITY = 4,
  ATMLOC_STATUS_NULL_ARGUMENT = 5,
  ATMLOC_STATUS_INVALID_UTF8 = 6,
  ATMLOC_STATUS_PANIC = 7,
} AtmlocStatus;

/**
 * Placement method for [`atmloc_optimize`].
 */
typedef enum AtmlocMethod {
  ATMLOC_METHOD_EXACT = 0,
  ATMLOC_METHOD_GREEDY = 1,
} AtmlocMethod;

/**
 * Loaded zipcode and ATM tables.
 */
typedef struct AtmlocDataset AtmlocDataset;

/**
 * Scoring results with C strings cached for row access.
 */
typedef struct AtmlocReport AtmlocReport;

/**
 * Scoring parameters; obtain defaults from [`atmloc_score_config_default`].
 */
typedef struct AtmlocScoreConfig {
  /**
   * Global weight in the fused score; the local weight is `1 - alpha`.
   */
  double alpha;
  size_t k;
  size_t top_features;
  size_t trees;
  size_t restarts;
  uint64_t seed;
} AtmlocScoreConfig;

/**
 * One (county, network) row; strings via [`atmloc_report_row_county`] and
 * [`atmloc_report_row_network`].
 */
typedef struct AtmlocScoreRow {
  double s_local;
  double s_global;
  double s_local_norm;
  double s_global_norm;
  double s_fused;
  /**
   * Nonzero when the local model fell back to the global score.
   */
  uint8_t fallback;
} AtmlocScoreRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread ("" after a success).
 * Valid until the next call into the library on the same thread.
 */
const char *atmloc_last_error(void);

/**
 * Library version as a static string.
 */
const char *atmloc_version(void);

/**
 * Loads `zipcodes.csv` and `atms.csv`. `keywords_path` may be null for the
 * built-in name-tag table.
 *
 * # Safety
 * Path arguments must be null or NUL-terminated strings; `out` must be
 * writable.
 */
enum AtmlocStatus atmloc_dataset_load(const char *zipcodes_path,
                                      const char *atms_path,
                                      const char *keywords_path,
                                      struct AtmlocDataset **out);

/**
 * # Safety
 * `dataset` must be null or a handle from [`atmloc_dataset_load`] not yet freed.
 */
void atmloc_dataset_free(struct AtmlocDataset *dataset);

/**
 * Zipcode rows; 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t atmloc_dataset_zipcode_count(const struct AtmlocDataset *dataset);

/**
 * Accepted ATM rows; 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t atmloc_dataset_atm_count(const struct AtmlocDataset *dataset);

/**
 * ATM rows skipped because their zipcode is unknown; 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t atmloc_dataset_rejected_count(const struct AtmlocDataset *dataset);

/**
 * Distinct counties; 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t atmloc_dataset_county_count(const struct AtmlocDataset *dataset);

struct AtmlocScoreConfig atmloc_score_config_default(void);

/**
 * Scores every (county, network) pair with the built-in global weights.
 * `config` may be null for defaults.
 *
 * # Safety
 * `dataset` must be a live handle, `config` null or readable, `out` writable.
 */
enum AtmlocStatus atmloc_score(const struct AtmlocDataset *dataset,
                               const struct AtmlocScoreConfig *config,
                               struct AtmlocReport **out);

/**
 * # Safety
 * `report` must be null or a handle from [`atmloc_score`] not yet freed.
 */
void atmloc_report_free(struct AtmlocReport *report);

/**
 * Rows, sorted by county then network; 0 for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
size_t atmloc_report_row_count(const struct AtmlocReport *report);

/**
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum AtmlocStatus atmloc_report_row(const struct AtmlocReport *report,
                                    size_t index,
                                    struct AtmlocScoreRow *out);

/**
 * County of row `index`, or null when out of range. Owned by the report.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
const char *atmloc_report_row_county(const struct AtmlocReport *report, size_t index);

/**
 * Network of row `index`, or null when out of range. Owned by the report.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
const char *atmloc_report_row_network(const struct AtmlocReport *report, size_t index);

/**
 * Writes scores, rankings, feature tables and report.json into `out_dir`
 * (created if missing).
 *
 * # Safety
 * `report` must be a live handle and `out_dir` a NUL-terminated string.
 */
enum AtmlocStatus atmloc_report_write(const struct AtmlocReport *report, const char *out_dir);

/**
 * `pd * mhi * (1 - pne)` for normalized inputs in [0, 1].
 *
 * # Safety
 * `out` must be writable.
 */
enum AtmlocStatus atmloc_wealth_estimate(double pd, double mhi, double pne, double *out);

/**
 * Softmax of `n` values into `out` (may alias `raw`).
 *
 * # Safety
 * `raw` must hold `n` readable values and `out` `n` writable ones.
 */
enum AtmlocStatus atmloc_softmax(const double *raw, size_t n, double *out);

/**
 * `(1 - alpha) * s_local_norm + alpha * s_global_norm`.
 *
 * # Safety
 * `out` must be writable.
 */
enum AtmlocStatus atmloc_fuse(double s_local_norm, double s_global_norm, double alpha, double *out);

/**
 * Name-tag relative score (4-10) of a street address under the built-in
 * keyword table.
 *
 * # Safety
 * `street_address` must be a NUL-terminated string and `out` writable.
 */
enum AtmlocStatus atmloc_classify_address(const char *street_address, uint8_t *out);

/**
 * Chooses a subset of `n` candidates maximizing total score within `budget`.
 * `selected[i]` is set to 1 for chosen candidates and 0 otherwise.
 *
 * # Safety
 * `scores` and `costs` must hold `n` readable values, `selected` `n`
 * writable bytes; `total_score` and `total_cost` must be writable.
 */
enum AtmlocStatus atmloc_optimize(const double *scores,
                                  const double *costs,
                                  size_t n,
                                  double budget,
                                  enum AtmlocMethod method,
                                  uint8_t *selected,
                                  double *total_score,
                                  double *total_cost);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ATMLOC_H */
