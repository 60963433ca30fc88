#ifndef MCAN_H
#define MCAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum McanStatus {
  MCAN_STATUS_OK = 0,
  MCAN_STATUS_NULL_POINTER = 1,
  MCAN_STATUS_INVALID_ARGUMENT = 2,
  MCAN_STATUS_IO = 3,
  MCAN_STATUS_PARSE = 4,
  MCAN_STATUS_CONFIG = 5,
  MCAN_STATUS_MISSING_DATA = 6,
  MCAN_STATUS_NON_FINITE = 7,
  MCAN_STATUS_BUFFER_TOO_SMALL = 8,
  MCAN_STATUS_INTERNAL = 9,
} McanStatus;

/**
 * A road graph with its speed and context series.
 */
typedef struct McanDataset McanDataset;

/**
 * A trained model together with the normalization it expects.
 */
typedef struct McanModel McanModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or null if none.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *mcan_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mcan_version(void);

/**
 * Generate a synthetic dataset. `config_toml` is a run configuration whose
 * `[generate]` table is used; null or empty selects the defaults.
 *
 * # Safety
 * `config_toml` must be null or a valid NUL-terminated string and `out`
 * a valid pointer.
 */
enum McanStatus mcan_dataset_generate(const char *config_toml,
                                      uint64_t seed,
                                      struct McanDataset **out);

/**
 * Load `graph.json`, `series.csv` and `context.csv` from `dir`.
 *
 * # Safety
 * `dir` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum McanStatus mcan_dataset_load(const char *dir, struct McanDataset **out);

/**
 * Write the dataset files into the existing directory `dir`.
 *
 * # Safety
 * `dataset` must come from this library and `dir` must be a valid
 * NUL-terminated string.
 */
enum McanStatus mcan_dataset_save(const struct McanDataset *dataset, const char *dir);

/**
 * Number of roads in the dataset.
 *
 * # Safety
 * `dataset` must come from this library and `out` must be valid.
 */
enum McanStatus mcan_dataset_road_count(const struct McanDataset *dataset, size_t *out);

/**
 * Number of observations of the road at `road_index`.
 *
 * # Safety
 * `dataset` must come from this library and `out` must be valid.
 */
enum McanStatus mcan_dataset_series_len(const struct McanDataset *dataset,
                                        size_t road_index,
                                        size_t *out);

/**
 * Release a dataset. Null is ignored.
 *
 * # Safety
 * `dataset` must be null or come from this library and not be used again.
 */
void mcan_dataset_free(struct McanDataset *dataset);

/**
 * Train on the configured training fold of `dataset`. `config_toml` is a
 * run configuration whose `[model]` and `[train]` tables are used.
 *
 * # Safety
 * `dataset` must come from this library, `config_toml` must be null or a
 * valid NUL-terminated string and `out` a valid pointer.
 */
enum McanStatus mcan_model_train(const struct McanDataset *dataset,
                                 const char *config_toml,
                                 uint64_t seed,
                                 struct McanModel **out);

/**
 * Load a model file written by [`mcan_model_save`] or the command line tool.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum McanStatus mcan_model_load(const char *path, struct McanModel **out);

/**
 * Write the model and its normalization as a JSON model file.
 *
 * # Safety
 * `model` must come from this library and `path` must be a valid
 * NUL-terminated string.
 */
enum McanStatus mcan_model_save(const struct McanModel *model, const char *path);

/**
 * Number of future slots each prediction covers.
 *
 * # Safety
 * `model` must come from this library and `out` must be valid.
 */
enum McanStatus mcan_model_horizon(const struct McanModel *model, size_t *out);

/**
 * Number of scalar parameters.
 *
 * # Safety
 * `model` must come from this library and `out` must be valid.
 */
enum McanStatus mcan_model_param_count(const struct McanModel *model, size_t *out);

/**
 * Predict the speeds in km/h of road `road_index` at slots `t .. t + H`
 * into `out[0 .. H]`. Fails with `BufferTooSmall` when `out_len < H` and
 * with `InvalidArgument` when the road has too little history at `t`.
 *
 * # Safety
 * `model` and `dataset` must come from this library and `out` must point
 * to `out_len` writable doubles.
 */
enum McanStatus mcan_model_predict(const struct McanModel *model,
                                   const struct McanDataset *dataset,
                                   size_t road_index,
                                   size_t t,
                                   double *out,
                                   size_t out_len);

/**
 * Release a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or come from this library and not be used again.
 */
void mcan_model_free(struct McanModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCAN_H */
