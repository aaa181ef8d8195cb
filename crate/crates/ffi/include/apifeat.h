#ifndef APIFEAT_H
#define APIFEAT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum ApfStatus {
  APF_STATUS_OK = 0,
  APF_STATUS_NULL_ARGUMENT = 1,
  APF_STATUS_INVALID_UTF8 = 2,
  APF_STATUS_PARSE = 3,
  APF_STATUS_SCHEMA = 4,
  APF_STATUS_CONFIG = 5,
  APF_STATUS_SHAPE = 6,
  APF_STATUS_FORMAT = 7,
  APF_STATUS_IO = 8,
  /*
   The output buffer is too small; the required size was still written.
   */
  APF_STATUS_BUFFER_TOO_SMALL = 9,
  APF_STATUS_OUT_OF_RANGE = 10,
  APF_STATUS_PANIC = 11,
  APF_STATUS_OTHER = 12,
} ApfStatus;

/*
 Type of a raw argument value.
 */
typedef enum ApfValueKind {
  APF_VALUE_KIND_STRING = 0,
  APF_VALUE_KIND_INTEGER = 1,
  APF_VALUE_KIND_ADDRESS = 2,
} ApfValueKind;

/*
 Fitted knowledge encoders.
 */
typedef struct ApfBundle ApfBundle;

/*
 A trained classifier.
 */
typedef struct ApfModel ApfModel;

/*
 A parsed report.
 */
typedef struct ApfReport ApfReport;

/*
 Fitted tokenizer and vocabulary.
 */
typedef struct ApfTokenizer ApfTokenizer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *apf_version(void);

/*
 Copies the calling thread's last error message into `buf`.

 Returns the message length including the terminating NUL. If that exceeds
 `cap`, the message is truncated to fit. Returns 0 when there is no message.

 # Safety
 `buf` must be NULL or point to `cap` writable bytes.
 */
size_t apf_last_error(char *buf, size_t cap);

/*
 Classifies one raw argument literal as string, integer or address.

 # Safety
 `raw` must be a NUL-terminated string; `kind` must be writable.
 */
enum ApfStatus apf_classify_value(const char *raw, enum ApfValueKind *kind);

/*
 Character 3-gram cosine similarity of two strings, in [0, 1].

 # Safety
 `a` and `b` must be NUL-terminated strings; `out` must be writable.
 */
enum ApfStatus apf_cosine_similarity(const char *a, const char *b, double *out);

/*
 Parses a report JSON document of `len` bytes.

 # Safety
 `json` must point to `len` readable bytes; `out` must be writable.
 */
enum ApfStatus apf_report_parse(const uint8_t *json, size_t len, struct ApfReport **out);

/*
 Number of API calls in a report.

 # Safety
 `report` must be a live handle from `apf_report_parse`.
 */
enum ApfStatus apf_report_call_count(const struct ApfReport *report, size_t *out);

/*
 # Safety
 `report` must be NULL or a handle not yet freed.
 */
void apf_report_free(struct ApfReport *report);

/*
 Loads fitted knowledge encoders from a JSON file.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ApfStatus apf_bundle_load(const char *path, struct ApfBundle **out);

/*
 Width of one encoded call.

 # Safety
 `bundle` must be a live handle.
 */
enum ApfStatus apf_bundle_dim(const struct ApfBundle *bundle, size_t *out);

/*
 Encodes the first `max_calls` calls of a report, one row of `dim` values per call.

 `mask` selects feature groups (`all`, `api-only`, `params-only` or a
 `+`-joined list such as `api+string`); NULL means `all`. `rows` receives the
 number of rows; `out` must hold `rows * dim` values or `BufferTooSmall` is
 returned with `rows` still set.

 # Safety
 Handles must be live; `out` must point to `cap` writable doubles.
 */
enum ApfStatus apf_bundle_encode(const struct ApfBundle *bundle,
                                 const struct ApfReport *report,
                                 const char *mask,
                                 size_t max_calls,
                                 double *out,
                                 size_t cap,
                                 size_t *rows);

/*
 # Safety
 `bundle` must be NULL or a handle not yet freed.
 */
void apf_bundle_free(struct ApfBundle *bundle);

/*
 Loads a fitted tokenizer and vocabulary from the directory written by `fit`.

 # Safety
 `dir` must be a NUL-terminated string; `out` must be writable.
 */
enum ApfStatus apf_tokenizer_load(const char *dir, struct ApfTokenizer **out);

/*
 Fixed sequence length of encoded reports.

 # Safety
 `tokenizer` must be a live handle.
 */
enum ApfStatus apf_tokenizer_seq_len(const struct ApfTokenizer *tokenizer, size_t *out);

/*
 Vocabulary size including the padding and unknown tokens.

 # Safety
 `tokenizer` must be a live handle.
 */
enum ApfStatus apf_tokenizer_vocab_size(const struct ApfTokenizer *tokenizer, size_t *out);

/*
 Writes `seq_len` token ids (padded with 0) into `ids` and the unpadded
 length into `true_len`.

 # Safety
 Handles must be live; `ids` must point to `cap` writable values.
 */
enum ApfStatus apf_tokenizer_encode(const struct ApfTokenizer *tokenizer,
                                    const struct ApfReport *report,
                                    uint32_t *ids,
                                    size_t cap,
                                    size_t *true_len);

/*
 # Safety
 `tokenizer` must be NULL or a handle not yet freed.
 */
void apf_tokenizer_free(struct ApfTokenizer *tokenizer);

/*
 Loads a model checkpoint.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ApfStatus apf_model_load(const char *path, struct ApfModel **out);

/*
 Number of output classes.

 # Safety
 `model` must be a live handle.
 */
enum ApfStatus apf_model_num_classes(const struct ApfModel *model, size_t *out);

/*
 Sequence length the model was built for.

 # Safety
 `model` must be a live handle.
 */
enum ApfStatus apf_model_seq_len(const struct ApfModel *model, size_t *out);

/*
 Copies the name of class `index` into `buf`; `needed` receives its size including the NUL.

 # Safety
 `model` must be a live handle; `buf` must point to `cap` writable bytes.
 */
enum ApfStatus apf_model_class_name(const struct ApfModel *model,
                                    size_t index,
                                    char *buf,
                                    size_t cap,
                                    size_t *needed);

/*
 Class probabilities for `n_rows` encoded calls of width `dim` (row-major).
 Rows past the model's sequence length are ignored.

 # Safety
 `model` must be a live handle; `rows` must point to `n_rows * dim` doubles
 and `probs` to `cap` writable doubles.
 */
enum ApfStatus apf_model_predict_dense(const struct ApfModel *model,
                                       const double *rows,
                                       size_t n_rows,
                                       size_t dim,
                                       double *probs,
                                       size_t cap);

/*
 Class probabilities for `n` token ids. Longer input is truncated and
 shorter input padded to the model's sequence length.

 # Safety
 `model` must be a live handle; `ids` must point to `n` values and `probs`
 to `cap` writable doubles.
 */
enum ApfStatus apf_model_predict_tokens(const struct ApfModel *model,
                                        const uint32_t *ids,
                                        size_t n,
                                        double *probs,
                                        size_t cap);

/*
 # Safety
 `model` must be NULL or a handle not yet freed.
 */
void apf_model_free(struct ApfModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* APIFEAT_H */
