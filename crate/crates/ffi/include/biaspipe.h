#ifndef BIASPIPE_H
#define BIASPIPE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BpStatus {
  BP_STATUS_OK = 0,
  BP_STATUS_NULL_ARGUMENT = 1,
  BP_STATUS_INVALID_ARGUMENT = 2,
  BP_STATUS_IO = 3,
  BP_STATUS_PARSE = 4,
  BP_STATUS_MODEL = 5,
  BP_STATUS_PIPELINE = 6,
  BP_STATUS_PANIC = 7,
} BpStatus;

/*
 Fitted biterm topic model.
 */
typedef struct BpBtm BpBtm;

/*
 Preprocessed corpus.
 */
typedef struct BpCorpus BpCorpus;

/*
 Latent class model chosen by BIC.
 */
typedef struct BpLca BpLca;

/*
 Encoded survey responses.
 */
typedef struct BpSurvey BpSurvey;

typedef struct BpBtmConfig {
  size_t topics;
  double alpha;
  double beta;
  size_t window;
  size_t iterations;
  uint64_t seed;
} BpBtmConfig;

typedef struct BpConfusion {
  uint64_t tp;
  uint64_t fn_;
  uint64_t fp;
  uint64_t tn;
} BpConfusion;

/*
 `numerator / denominator`; `defined` is false when the denominator is 0
 and `value` is then NaN.
 */
typedef struct BpRatio {
  uint64_t numerator;
  uint64_t denominator;
  bool defined;
  double value;
} BpRatio;

typedef struct BpMetrics {
  struct BpRatio accuracy;
  struct BpRatio precision;
  struct BpRatio recall;
  struct BpRatio specificity;
  struct BpRatio npv;
} BpMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread, or null. Valid until the next
 failing call on the same thread; do not free.
 */
const char *bp_last_error(void);

/*
 Library version as a static string.
 */
const char *bp_version(void);

/*
 # Safety
 `s` must come from this library, or be null.
 */
void bp_string_free(char *s);

/*
 Loads a JSONL corpus with the default preprocessing.

 # Safety
 `path` must be a valid C string and `out` writable.
 */
enum BpStatus bp_corpus_load(const char *path, size_t min_df, struct BpCorpus **out_corpus);

/*
 Parses a JSONL corpus held in memory.

 # Safety
 `jsonl` must be a valid C string and `out` writable.
 */
enum BpStatus bp_corpus_from_jsonl(const char *jsonl, size_t min_df, struct BpCorpus **out_corpus);

/*
 # Safety
 `corpus` must be a live handle or null.
 */
size_t bp_corpus_documents(const struct BpCorpus *corpus);

/*
 # Safety
 `corpus` must be a live handle or null.
 */
size_t bp_corpus_vocabulary_size(const struct BpCorpus *corpus);

/*
 # Safety
 `corpus` must come from this library, or be null.
 */
void bp_corpus_free(struct BpCorpus *corpus);

/*
 Library defaults for [`BpBtmConfig`].
 */
struct BpBtmConfig bp_btm_default_config(void);

/*
 # Safety
 Pointers must be valid; `out_model` writable.
 */
enum BpStatus bp_btm_fit(const struct BpCorpus *corpus,
                         const struct BpBtmConfig *config,
                         struct BpBtm **out_model);

/*
 Top `k` words per topic as CSV (`topic,rank,word,probability`).

 # Safety
 `model` must be live; `out_csv` writable.
 */
enum BpStatus bp_btm_topic_words_csv(const struct BpBtm *model, size_t k, char **out_csv);

/*
 Mean UMass coherence of the model's top `k` words over `corpus`.

 # Safety
 Handles must be live; `out_value` writable.
 */
enum BpStatus bp_btm_coherence(const struct BpBtm *model,
                               const struct BpCorpus *corpus,
                               size_t k,
                               double *out_value);

/*
 # Safety
 `model` must come from this library, or be null.
 */
void bp_btm_free(struct BpBtm *model);

/*
 Loads a survey CSV against its JSON question schema.

 # Safety
 Paths must be valid C strings; `out_survey` writable.
 */
enum BpStatus bp_survey_load(const char *csv_path,
                             const char *schema_path,
                             struct BpSurvey **out_survey);

/*
 # Safety
 `survey` must be a live handle or null.
 */
size_t bp_survey_respondents(const struct BpSurvey *survey);

/*
 # Safety
 `survey` must come from this library, or be null.
 */
void bp_survey_free(struct BpSurvey *survey);

/*
 Fits K in `[k_min, k_max]` with `restarts` EM runs each and keeps the
 lowest-BIC model.

 # Safety
 `survey` must be live; `out_model` writable.
 */
enum BpStatus bp_lca_select(const struct BpSurvey *survey,
                            size_t k_min,
                            size_t k_max,
                            size_t restarts,
                            uint64_t seed,
                            struct BpLca **out_model);

/*
 # Safety
 `model` must be a live handle or null.
 */
size_t bp_lca_classes(const struct BpLca *model);

/*
 BIC of the model on the survey it was fitted to; NaN for null.

 # Safety
 `model` must be a live handle or null.
 */
double bp_lca_bic(const struct BpLca *model);

/*
 Item-response probabilities, one row per indicator and one column per class.

 # Safety
 `model` must be live; `out_csv` writable.
 */
enum BpStatus bp_lca_measurement_csv(const struct BpLca *model, char **out_csv);

/*
 Class shares per group in percent. `soft` weights respondents by
 posterior membership instead of assigning them to their modal class.

 # Safety
 Handles must be live; `out_csv` writable.
 */
enum BpStatus bp_lca_group_distribution_csv(const struct BpLca *model,
                                            const struct BpSurvey *survey,
                                            bool soft,
                                            char **out_csv);

/*
 # Safety
 `model` must come from this library, or be null.
 */
void bp_lca_free(struct BpLca *model);

/*
 # Safety
 `matrix` must be readable and `out_metrics` writable.
 */
enum BpStatus bp_confusion_metrics(const struct BpConfusion *matrix, struct BpMetrics *out_metrics);

/*
 Kernel SHAP attributions for `m` features. `value` returns the model
 output for a coalition: `mask[j]` is 1 when feature `j` takes its
 observed value and 0 when it takes the background value. Exact for
 small `m`, otherwise estimated from `n_samples` coalitions drawn with
 `seed`. Writes `m` values to `out_phi` and the empty-coalition output
 to `out_base`.

 # Safety
 `out_phi` must hold `m` doubles; `out_base` must be writable.
 */
enum BpStatus bp_kernel_shap(size_t m,
                             double (*value)(const uint8_t *mask, size_t m, void *user),
                             void *user,
                             size_t n_samples,
                             uint64_t seed,
                             double *out_phi,
                             double *out_base);

/*
 Runs a pipeline config. `output_dir` may be null to use the config's
 own. The run id is written to `out_run_id`.

 # Safety
 Strings must be valid C strings; `out_run_id` writable.
 */
enum BpStatus bp_pipeline_run(const char *config_path, const char *output_dir, char **out_run_id);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BIASPIPE_H */
