#ifndef DEPTHSCOPE_H
#define DEPTHSCOPE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum DsStatus {
  DS_STATUS_OK = 0,
  DS_STATUS_NULL_POINTER = 1,
  DS_STATUS_INVALID_UTF8 = 2,
  // Malformed dataset or τ string.
  DS_STATUS_PARSE_ERROR = 3,
  DS_STATUS_INVALID_ARGUMENT = 4,
  DS_STATUS_ANALYSIS_ERROR = 5,
  // Output buffer shorter than the data; nothing was written.
  DS_STATUS_BUFFER_TOO_SMALL = 6,
  DS_STATUS_PANIC = 7,
} DsStatus;

// Parsed, validated dataset.
typedef struct DsDataset DsDataset;

// Shared analysis cache. Safe to use from several threads at once.
typedef struct DsEngine DsEngine;

// Immutable analysis result at one τ.
typedef struct DsSnapshot DsSnapshot;

// Message of the last failed call on this thread, or null. Valid until the
// next call into this library on the same thread.
const char *ds_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ds_version(void);

struct DsEngine *ds_engine_new(void);

// Engine that also caches inclusion matrices under `dir`.
enum DsStatus ds_engine_with_cache_dir(const char *dir, struct DsEngine **out);

// Null is accepted.
void ds_engine_free(struct DsEngine *engine);

// Parses a JSON v1 dataset document of `len` bytes.
enum DsStatus ds_dataset_from_json(const uint8_t *json, size_t len, struct DsDataset **out);

// Null is accepted.
void ds_dataset_free(struct DsDataset *dataset);

// Number of datapoints, 0 for null.
size_t ds_dataset_len(const struct DsDataset *dataset);

// Full analysis. `tau` is `"inf"`, `"q:<quantile>"` or a number; null
// means `"inf"`. `k <= 0` uses the suggested cluster count.
enum DsStatus ds_analyze(const struct DsEngine *engine,
                         const struct DsDataset *dataset,
                         const char *tau,
                         int64_t k,
                         uint64_t seed,
                         struct DsSnapshot **out);

// Same analysis as `snapshot` at a new τ, reusing the cached inclusion
// matrix of `engine`.
enum DsStatus ds_retune(const struct DsEngine *engine,
                        const struct DsSnapshot *snapshot,
                        const char *tau,
                        struct DsSnapshot **out);

// Null is accepted.
void ds_snapshot_free(struct DsSnapshot *snapshot);

// Number of datapoints, 0 for null.
size_t ds_snapshot_len(const struct DsSnapshot *snapshot);

// Resolved τ; infinity when unrestricted, NaN for null.
double ds_snapshot_tau(const struct DsSnapshot *snapshot);

// Eigengap cluster-count suggestion, 0 for null.
size_t ds_snapshot_suggested_k(const struct DsSnapshot *snapshot);

// Copies the `n` depth values into `out`.
enum DsStatus ds_snapshot_depths(const struct DsSnapshot *snapshot, double *out, size_t capacity);

// Copies the `n` cluster labels into `out`.
enum DsStatus ds_snapshot_labels(const struct DsSnapshot *snapshot, uint32_t *out, size_t capacity);

// Copies the heatmap order (a permutation of `0..n`) into `out`.
enum DsStatus ds_snapshot_order(const struct DsSnapshot *snapshot, uint32_t *out, size_t capacity);

// Copies the `n` color bins (0 = most central) into `out`.
enum DsStatus ds_snapshot_color_bins(const struct DsSnapshot *snapshot,
                                     uint8_t *out,
                                     size_t capacity);

// Copies `n` outlier flags (1 = outlier) into `out`.
enum DsStatus ds_snapshot_outliers(const struct DsSnapshot *snapshot,
                                   uint8_t *out,
                                   size_t capacity);

// Copies layout positions as `x0, y0, x1, y1, …` (`2n` values) into `out`.
enum DsStatus ds_snapshot_positions(const struct DsSnapshot *snapshot,
                                    double *out,
                                    size_t capacity);

// Copies the `n × n` similarity matrix, row-major in datapoint order.
enum DsStatus ds_snapshot_similarity(const struct DsSnapshot *snapshot,
                                     double *out,
                                     size_t capacity);

// Snapshot JSON as a new NUL-terminated string; release it with
// [`ds_string_free`].
enum DsStatus ds_snapshot_to_json(const struct DsSnapshot *snapshot, char **out);

// Null is accepted.
void ds_string_free(char *s);

#endif  /* DEPTHSCOPE_H */
