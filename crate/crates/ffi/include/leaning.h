#ifndef LEANING_H
#define LEANING_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum LeaningStatus {
  LEANING_STATUS_OK = 0,
  LEANING_STATUS_NULL_ARGUMENT = 1,
  LEANING_STATUS_INVALID_UTF8 = 2,
  LEANING_STATUS_CONFIG = 3,
  LEANING_STATUS_VALIDATION = 4,
  LEANING_STATUS_IO = 5,
  LEANING_STATUS_RUNTIME = 6,
  LEANING_STATUS_BUFFER_TOO_SMALL = 7,
  LEANING_STATUS_OUT_OF_RANGE = 8,
  LEANING_STATUS_PANIC = 9,
} LeaningStatus;

/**
 * A trained tweet classifier.
 */
typedef struct LeaningClassifier LeaningClassifier;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL.
 *
 * The pointer stays valid until the next call into the library on the
 * same thread.
 */
const char *leaning_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *leaning_version(void);

/**
 * Loads a classifier saved by the `train` or `enrich` stage.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LeaningStatus leaning_classifier_load(const char *dir, struct LeaningClassifier **out);

/**
 * Releases a classifier. NULL is ignored.
 *
 * # Safety
 * `handle` must come from [`leaning_classifier_load`] and not be used
 * afterwards.
 */
void leaning_classifier_free(struct LeaningClassifier *handle);

/**
 * Number of party labels of the classifier, or 0 for NULL.
 *
 * # Safety
 * `handle` must be NULL or a live classifier.
 */
size_t leaning_classifier_num_labels(const struct LeaningClassifier *handle);

/**
 * Party label at `index`. The string lives as long as the handle.
 *
 * # Safety
 * `handle` must be a live classifier and `out` a valid pointer.
 */
enum LeaningStatus leaning_classifier_label(const struct LeaningClassifier *handle,
                                            size_t index,
                                            const char **out);

/**
 * Writes one probability per party label of `text` into `scores`.
 *
 * `capacity` is the length of `scores`; it must be at least the number of
 * labels.
 *
 * # Safety
 * `handle` must be a live classifier, `text` a NUL-terminated string and
 * `scores` valid for `capacity` writes.
 */
enum LeaningStatus leaning_classifier_classify(const struct LeaningClassifier *handle,
                                               const char *text,
                                               double *scores,
                                               size_t capacity);

/**
 * Runs every stage with the JSON configuration at `config_path`.
 *
 * A non-NULL `output_dir` replaces `paths.output_dir`.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `output_dir` must be NULL
 * or one.
 */
enum LeaningStatus leaning_run_pipeline(const char *config_path, const char *output_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEANING_H */
