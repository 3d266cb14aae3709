#ifndef GPA_H
#define GPA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GpaStatus {
  GPA_STATUS_OK = 0,
  GPA_STATUS_NULL_POINTER = 1,
  GPA_STATUS_INVALID_ARGUMENT = 2,
  GPA_STATUS_IO = 3,
  GPA_STATUS_FORMAT = 4,
  GPA_STATUS_CONFIG = 5,
  GPA_STATUS_NUMERIC = 6,
  GPA_STATUS_INTERNAL = 7,
} GpaStatus;

/**
 * A parsed dataset with one-hot node-label features.
 */
typedef struct GpaDataset GpaDataset;

/**
 * Trained encoder and selector weights.
 */
typedef struct GpaModel GpaModel;

typedef struct GpaDatasetStats {
  size_t num_graphs;
  double avg_nodes;
  double avg_edges;
  size_t num_classes;
  size_t feature_dim;
} GpaDatasetStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call into this library on the same thread.
 */
const char *gpa_last_error(void);

/**
 * # Safety
 * `dir` and `name` must be NUL-terminated strings; `out` must be writable.
 */
enum GpaStatus gpa_dataset_load(const char *dir, const char *name, struct GpaDataset **out);

/**
 * # Safety
 * `ds` must come from [`gpa_dataset_load`]; `out` must be writable.
 */
enum GpaStatus gpa_dataset_stats(const struct GpaDataset *ds, struct GpaDatasetStats *out);

/**
 * # Safety
 * `ds` must come from [`gpa_dataset_load`] or be null; it is invalid afterwards.
 */
void gpa_dataset_free(struct GpaDataset *ds);

/**
 * Loads the checkpoint directory written by training.
 *
 * # Safety
 * `checkpoint_dir` must be a NUL-terminated string; `out` must be writable.
 */
enum GpaStatus gpa_model_load(const char *checkpoint_dir, struct GpaModel **out);

/**
 * Width of the embeddings written by [`gpa_model_embed`]; 0 for null.
 *
 * # Safety
 * `model` must come from [`gpa_model_load`] or be null.
 */
size_t gpa_model_embedding_dim(const struct GpaModel *model);

/**
 * Writes `num_graphs * embedding_dim` pre-projection embeddings, row-major.
 *
 * # Safety
 * Handles must be live; `out` must hold `out_len` doubles.
 */
enum GpaStatus gpa_model_embed(const struct GpaModel *model,
                               const struct GpaDataset *ds,
                               double *out,
                               size_t out_len);

/**
 * Writes the 15 pair probabilities of one graph, in pair order.
 *
 * # Safety
 * Handles must be live; `out` must hold 15 doubles.
 */
enum GpaStatus gpa_model_pair_scores(const struct GpaModel *model,
                                     const struct GpaDataset *ds,
                                     size_t graph_index,
                                     double *out);

/**
 * # Safety
 * `model` must come from [`gpa_model_load`] or be null; it is invalid afterwards.
 */
void gpa_model_free(struct GpaModel *model);

/**
 * Trains from a JSON run config and writes a checkpoint to `out_dir`.
 *
 * # Safety
 * Both arguments must be NUL-terminated strings.
 */
enum GpaStatus gpa_train_from_config(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GPA_H */
