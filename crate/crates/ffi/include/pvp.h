#ifndef PVP_H
#define PVP_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible call. The I/O, format and
 * precondition codes match the exit codes of the `pvp` binary.
 */
typedef enum PvpStatus {
  PVP_STATUS_OK = 0,
  PVP_STATUS_NULL_POINTER = 1,
  PVP_STATUS_IO = 2,
  PVP_STATUS_FORMAT = 3,
  PVP_STATUS_PRECONDITION = 4,
  PVP_STATUS_INVALID_UTF8 = 5,
  PVP_STATUS_OUT_OF_RANGE = 6,
  PVP_STATUS_PANIC = 7,
} PvpStatus;

typedef enum PvpLabel {
  PVP_LABEL_BONAFIDE = 0,
  PVP_LABEL_SPOOF = 1,
  PVP_LABEL_UNKNOWN = 2,
} PvpLabel;

typedef enum PvpTier {
  PVP_TIER_SALIENT = 0,
  PVP_TIER_GENERIC = 1,
  PVP_TIER_CLASS = 2,
  PVP_TIER_SPEAKER_ONLY = 3,
} PvpTier;

/**
 * A feature manifest held in memory.
 */
typedef struct PvpManifest PvpManifest;

/**
 * A speaker profile.
 */
typedef struct PvpProfile PvpProfile;

/**
 * The scoring result for one utterance.
 */
typedef struct PvpReport PvpReport;

/**
 * Summary of a bona fide versus spoof evaluation, in percent.
 */
typedef struct PvpEvalSummary {
  double auc_percent;
  double eer_percent;
  double eer_threshold;
  size_t n_bonafide;
  size_t n_spoof;
} PvpEvalSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failed call on this thread, or null. The
 * pointer stays valid until the next call into this library on the thread.
 */
const char *pvp_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pvp_version(void);

/**
 * Logistic normalisation of a log-likelihood.
 */
double pvp_normalize_score(double log_likelihood, double center, double scale);

/**
 * Reads a JSON-lines feature manifest.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PvpStatus pvp_manifest_read(const char *path, struct PvpManifest **out);

/**
 * Number of utterances in a manifest; 0 for null.
 *
 * # Safety
 * `manifest` must be null or a live handle.
 */
size_t pvp_manifest_len(const struct PvpManifest *manifest);

/**
 * Label of utterance `index`.
 *
 * # Safety
 * `manifest` must be a live handle and `out` a valid pointer.
 */
enum PvpStatus pvp_manifest_label(const struct PvpManifest *manifest,
                                  size_t index,
                                  enum PvpLabel *out);

/**
 * # Safety
 * `manifest` must be null or a handle not yet freed.
 */
void pvp_manifest_free(struct PvpManifest *manifest);

/**
 * Builds a profile from every utterance of `manifest`. `config_json` may be
 * null for the default configuration.
 *
 * # Safety
 * `manifest` must be a live handle, `config_json` null or a NUL-terminated
 * string, and `out` a valid pointer.
 */
enum PvpStatus pvp_profile_build(const struct PvpManifest *manifest,
                                 const char *config_json,
                                 struct PvpProfile **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PvpStatus pvp_profile_load(const char *path, struct PvpProfile **out);

/**
 * # Safety
 * `profile` must be a live handle and `path` a NUL-terminated string.
 */
enum PvpStatus pvp_profile_save(const struct PvpProfile *profile, const char *path);

/**
 * Serialises a profile to JSON. Release the string with [`pvp_string_free`].
 *
 * # Safety
 * `profile` must be a live handle and `out` a valid pointer.
 */
enum PvpStatus pvp_profile_to_json(const struct PvpProfile *profile, char **out);

/**
 * Number of salient phonemes in the profile; 0 for null.
 *
 * # Safety
 * `profile` must be null or a live handle.
 */
size_t pvp_profile_salient_count(const struct PvpProfile *profile);

/**
 * # Safety
 * `profile` must be null or a handle not yet freed.
 */
void pvp_profile_free(struct PvpProfile *profile);

/**
 * Scores utterance `index` of `manifest`. Non-zero `skip_salient_tier` and
 * `skip_speaker` disable the salient tier and the speaker branch.
 *
 * # Safety
 * `profile` and `manifest` must be live handles and `out` a valid pointer.
 */
enum PvpStatus pvp_score_utterance(const struct PvpProfile *profile,
                                   const struct PvpManifest *manifest,
                                   size_t index,
                                   int32_t skip_salient_tier,
                                   int32_t skip_speaker,
                                   struct PvpReport **out);

/**
 * Final fused score; NaN for null.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
double pvp_report_final_score(const struct PvpReport *report);

/**
 * Writes the phoneme-level score to `out` and returns 1, or returns 0 when
 * the utterance had no phoneme evidence.
 *
 * # Safety
 * `report` must be null or a live handle, `out` null or a valid pointer.
 */
int32_t pvp_report_phoneme_score(const struct PvpReport *report, double *out);

/**
 * Writes the speaker-embedding score to `out` and returns 1, or returns 0
 * when that branch was not used.
 *
 * # Safety
 * `report` must be null or a live handle, `out` null or a valid pointer.
 */
int32_t pvp_report_speaker_score(const struct PvpReport *report, double *out);

/**
 * Tier that produced the phoneme score.
 *
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum PvpStatus pvp_report_tier(const struct PvpReport *report, enum PvpTier *out);

/**
 * Full report as JSON. Release the string with [`pvp_string_free`].
 *
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum PvpStatus pvp_report_to_json(const struct PvpReport *report, char **out);

/**
 * # Safety
 * `report` must be null or a handle not yet freed.
 */
void pvp_report_free(struct PvpReport *report);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void pvp_string_free(char *s);

/**
 * ROC summary for `n` scores with matching labels. Unknown labels are
 * skipped.
 *
 * # Safety
 * `scores` and `labels` must point to `n` elements; `out` must be valid.
 */
enum PvpStatus pvp_evaluate(const double *scores,
                            const enum PvpLabel *labels,
                            size_t n,
                            struct PvpEvalSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PVP_H */
