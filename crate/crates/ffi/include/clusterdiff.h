#ifndef CLUSTERDIFF_H
#define CLUSTERDIFF_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CdStatus {
  CD_STATUS_OK = 0,
  CD_STATUS_NULL_ARGUMENT = 1,
  CD_STATUS_INVALID_UTF8 = 2,
  CD_STATUS_IO = 3,
  CD_STATUS_PARSE = 4,
  CD_STATUS_INVALID_INPUT = 5,
  CD_STATUS_NOT_FOUND = 6,
  CD_STATUS_CONFLICT = 7,
  CD_STATUS_UNESTIMABLE = 8,
  CD_STATUS_PANIC = 99,
} CdStatus;

/**
 * A loaded Base/Exp clustering pair.
 */
typedef struct CdClustering CdClustering;

/**
 * A drawn pair sample, tied to the clustering it was drawn from.
 */
typedef struct CdSample CdSample;

typedef struct CdOverallImpact {
  double jaccard_distance;
  double split_distance;
  double merge_distance;
  double jaccard_index;
  double affected_jaccard_index;
  double unaffected_jaccard_index;
  double total_weight;
  double affected_weight;
  uint64_t affected_items;
  uint64_t items;
} CdOverallImpact;

typedef struct CdItemImpact {
  double jaccard_distance;
  double split_distance;
  double merge_distance;
  double jaccard_index;
} CdItemImpact;

typedef struct CdPairTotals {
  double split_total;
  double merge_total;
  double stable_total;
  double delta_precision_multiplier;
} CdPairTotals;

/**
 * Sampling parameters. With `stratified` false all draws come from one
 * stratum and `diff_fraction` is ignored.
 */
typedef struct CdSamplePlan {
  uint64_t total_draws;
  uint64_t seed;
  bool stratified;
  double diff_fraction;
  double weight_floor;
} CdSamplePlan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *cd_last_error(void);

/**
 * Library version as a static string.
 */
const char *cd_version(void);

/**
 * Loads Base and Exp from two cluster JSONL files.
 *
 * # Safety
 * Paths must be null or NUL-terminated strings; `out` must be writable.
 */
enum CdStatus cd_clustering_load(const char *base_path,
                                 const char *exp_path,
                                 struct CdClustering **out);

/**
 * Loads Base and Exp from one joined JSONL file.
 *
 * # Safety
 * `path` must be null or a NUL-terminated string; `out` must be writable.
 */
enum CdStatus cd_clustering_load_joined(const char *path, struct CdClustering **out);

/**
 * # Safety
 * `handle` must be null or come from a `cd_clustering_load*` call.
 */
void cd_clustering_free(struct CdClustering *handle);

/**
 * # Safety
 * `handle` must be a live clustering handle; `out` must be writable.
 */
enum CdStatus cd_clustering_item_count(const struct CdClustering *handle, uint64_t *out);

/**
 * # Safety
 * `handle` must be a live clustering handle; `out` must be writable.
 */
enum CdStatus cd_overall_impact(const struct CdClustering *handle, struct CdOverallImpact *out);

/**
 * # Safety
 * `handle` must be a live clustering handle, `item_id` a NUL-terminated
 * string and `out` writable.
 */
enum CdStatus cd_item_impact(const struct CdClustering *handle,
                             const char *item_id,
                             struct CdItemImpact *out);

/**
 * # Safety
 * `handle` must be a live clustering handle; `out` must be writable.
 */
enum CdStatus cd_pair_totals(const struct CdClustering *handle, struct CdPairTotals *out);

/**
 * Draws a weighted pair sample.
 *
 * # Safety
 * `handle` must be a live clustering handle, `plan` readable and `out`
 * writable.
 */
enum CdStatus cd_sample(const struct CdClustering *handle,
                        const struct CdSamplePlan *plan,
                        struct CdSample **out);

/**
 * # Safety
 * `handle` must be null or come from `cd_sample`.
 */
void cd_sample_free(struct CdSample *handle);

/**
 * Number of distinct sampled pairs.
 *
 * # Safety
 * `sample` must be a live sample handle; `out` must be writable.
 */
enum CdStatus cd_sample_pair_count(const struct CdSample *sample, uint64_t *out);

/**
 * Writes `sample.jsonl` records to `path` and the sample metadata to
 * `meta_path`.
 *
 * # Safety
 * Handles must be live, the sample drawn from `clustering`, and the paths
 * NUL-terminated strings.
 */
enum CdStatus cd_sample_write(const struct CdClustering *clustering,
                              const struct CdSample *sample,
                              const char *path,
                              const char *meta_path);

/**
 * Estimates every metric from the verdict JSONL file at `verdicts_path`.
 * On success `*out_json` holds a JSON array of estimate lines; release it
 * with [`cd_string_free`].
 *
 * # Safety
 * Handles must be live, the sample drawn from `clustering`, the path a
 * NUL-terminated string and `out_json` writable.
 */
enum CdStatus cd_estimate_json(const struct CdClustering *clustering,
                               const struct CdSample *sample,
                               const char *verdicts_path,
                               double z,
                               char **out_json);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void cd_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLUSTERDIFF_H */
