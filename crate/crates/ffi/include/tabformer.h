#ifndef TABFORMER_H
#define TABFORMER_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Non-zero values match the command-line exit codes where
 * one exists.
 */
typedef enum TfStatus {
  TF_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8 or an undersized output buffer.
   */
  TF_STATUS_INVALID_ARGUMENT = 1,
  TF_STATUS_CONFIG = 2,
  TF_STATUS_DATA = 3,
  TF_STATUS_NUMERIC = 4,
  TF_STATUS_PANIC = 5,
} TfStatus;

/**
 * Report metric selector for [`tf_cv_report_metric`].
 */
typedef enum TfMetric {
  TF_METRIC_ACCURACY = 0,
  TF_METRIC_PRECISION = 1,
  TF_METRIC_RECALL = 2,
  TF_METRIC_F1 = 3,
  TF_METRIC_AUPRC = 4,
} TfMetric;

typedef struct TfCvReport TfCvReport;

/**
 * A loaded dataset with raw (unstandardized) features.
 */
typedef struct TfDataset TfDataset;

/**
 * A model checkpoint together with its schema and statistics.
 */
typedef struct TfModel TfModel;

typedef struct TfMetrics {
  size_t true_pos;
  size_t false_pos;
  size_t true_neg;
  size_t false_neg;
  double accuracy;
  double precision;
  double recall;
  double f1;
} TfMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (always
 * NUL-terminated when `len > 0`) and returns the full message length
 * excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t tf_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tf_version(void);

/**
 * Loads a CSV with `target` as the 0/1 label column.
 *
 * # Safety
 * `path` and `target` must be NUL-terminated strings; `out` must be a
 * valid pointer.
 */
enum TfStatus tf_dataset_load_csv(const char *path, const char *target, struct TfDataset **out);

/**
 * # Safety
 * `ds` must be a live handle or null.
 */
size_t tf_dataset_n_rows(const struct TfDataset *ds);

/**
 * # Safety
 * `ds` must be a live handle or null.
 */
size_t tf_dataset_n_features(const struct TfDataset *ds);

/**
 * Copies the labels into `out` (capacity `len`, at least the row count).
 *
 * # Safety
 * `ds` must be a live handle; `out` must point to `len` writable bytes.
 */
enum TfStatus tf_dataset_labels(const struct TfDataset *ds, uint8_t *out, size_t len);

/**
 * # Safety
 * `ds` must be a handle from [`tf_dataset_load_csv`] or null; it must not
 * be used afterwards.
 */
void tf_dataset_free(struct TfDataset *ds);

/**
 * Loads a checkpoint manifest (and its sibling `.bin`).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum TfStatus tf_model_load(const char *path, struct TfModel **out);

/**
 * Number of input features the model expects.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
size_t tf_model_n_features(const struct TfModel *model);

/**
 * Positive-class probabilities for every row of `ds`, standardized with
 * the checkpoint's statistics. The dataset schema must match the
 * checkpoint's.
 *
 * # Safety
 * Handles must be live; `out` must point to `len` writable doubles.
 */
enum TfStatus tf_model_predict(const struct TfModel *model,
                               const struct TfDataset *ds,
                               double *out,
                               size_t len);

/**
 * Probabilities for `n_rows` raw rows laid out row-major. Categorical
 * cells hold vocabulary indices (the vocabulary length means unknown).
 *
 * # Safety
 * `x` must point to `n_rows * tf_model_n_features(model)` doubles and
 * `out` to `n_rows` writable doubles.
 */
enum TfStatus tf_model_predict_rows(const struct TfModel *model,
                                    const double *x,
                                    size_t n_rows,
                                    double *out);

/**
 * # Safety
 * `model` must be a handle from [`tf_model_load`] or null; it must not be
 * used afterwards.
 */
void tf_model_free(struct TfModel *model);

/**
 * Runs cross-validation from a JSON run config (same document as the
 * command line's `--config`), writing all artifacts to its `out`
 * directory.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` a valid pointer.
 */
enum TfStatus tf_cv_run(const char *config_json, struct TfCvReport **out);

/**
 * Mean and sample standard deviation of one metric across folds.
 *
 * # Safety
 * `report` must be a live handle; `mean` and `std` valid pointers.
 */
enum TfStatus tf_cv_report_metric(const struct TfCvReport *report,
                                  enum TfMetric metric,
                                  double *mean,
                                  double *std);

/**
 * The report as JSON, identical to `cv_report.json`. Release with
 * [`tf_string_free`].
 *
 * # Safety
 * `report` must be a live handle; `out` a valid pointer.
 */
enum TfStatus tf_cv_report_json(const struct TfCvReport *report, char **out);

/**
 * # Safety
 * `report` must be a handle from [`tf_cv_run`] or null.
 */
void tf_cv_report_free(struct TfCvReport *report);

/**
 * # Safety
 * `s` must be a string returned by this library or null.
 */
void tf_string_free(char *s);

/**
 * Average precision of `scores` against 0/1 `labels`.
 *
 * # Safety
 * `scores` and `labels` must each point to `n` elements; `out` valid.
 */
enum TfStatus tf_auprc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Confusion counts and positive-class metrics of hard 0/1 predictions.
 *
 * # Safety
 * `predictions` and `labels` must each point to `n` bytes; `out` valid.
 */
enum TfStatus tf_confusion_metrics(const uint8_t *predictions,
                                   const uint8_t *labels,
                                   size_t n,
                                   struct TfMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TABFORMER_H */
