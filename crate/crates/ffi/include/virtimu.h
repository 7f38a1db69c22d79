#ifndef VIRTIMU_H
#define VIRTIMU_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum VirtimuStatus {
  VIRTIMU_OK = 0,
  VIRTIMU_ERR_NULL = 1,
  VIRTIMU_ERR_UTF8 = 2,
  VIRTIMU_ERR_INVALID_ARGUMENT = 3,
  VIRTIMU_ERR_PARSE = 4,
  VIRTIMU_ERR_IO = 5,
  VIRTIMU_ERR_TOO_SHORT = 6,
  VIRTIMU_ERR_SCHEMA_MISMATCH = 7,
  VIRTIMU_ERR_CONFIG = 8,
  VIRTIMU_ERR_BUFFER_TOO_SMALL = 9,
  VIRTIMU_ERR_UNKNOWN_NAME = 10,
  VIRTIMU_ERR_INTERNAL = 11,
  VIRTIMU_ERR_PANIC = 12,
} VirtimuStatus;

/**
 * An enrolled tremor template.
 */
typedef struct VirtimuTemplate VirtimuTemplate;

/**
 * A motion trace: named axes sampled on a uniform grid.
 */
typedef struct VirtimuTrace VirtimuTrace;

/**
 * A decoded video clip with its camera manifest.
 */
typedef struct VirtimuVideo VirtimuVideo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *virtimu_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated and
 * NUL-terminated when `cap > 0`). Returns the full message length without
 * the terminator.
 */
size_t virtimu_last_error(char *buf, size_t cap);

/**
 * Builds a trace from axis-major samples: `data[a * len + i]` is sample `i`
 * of axis `a`.
 */
enum VirtimuStatus virtimu_trace_new(double sample_rate,
                                     double t0,
                                     const char *const *axes,
                                     size_t n_axes,
                                     const double *data,
                                     size_t len,
                                     struct VirtimuTrace **out);

/**
 * Parses trace CSV text.
 */
enum VirtimuStatus virtimu_trace_from_csv(const char *text, struct VirtimuTrace **out);

enum VirtimuStatus virtimu_trace_read_csv(const char *path, struct VirtimuTrace **out);

enum VirtimuStatus virtimu_trace_write_csv(const struct VirtimuTrace *trace, const char *path);

/**
 * Samples per axis; 0 for a null handle.
 */
size_t virtimu_trace_len(const struct VirtimuTrace *trace);

size_t virtimu_trace_axis_count(const struct VirtimuTrace *trace);

/**
 * Sample rate in Hz; 0 for a null handle.
 */
double virtimu_trace_sample_rate(const struct VirtimuTrace *trace);

/**
 * Copies the samples of axis `name`. `written` receives the axis length
 * even when `cap` is too small.
 */
enum VirtimuStatus virtimu_trace_axis(const struct VirtimuTrace *trace,
                                      const char *name,
                                      double *buf,
                                      size_t cap,
                                      size_t *written);

void virtimu_trace_free(struct VirtimuTrace *trace);

/**
 * Loads a PGM-sequence video directory with its `manifest`.
 */
enum VirtimuStatus virtimu_video_load(const char *dir, struct VirtimuVideo **out);

size_t virtimu_video_frame_count(const struct VirtimuVideo *video);

void virtimu_video_free(struct VirtimuVideo *video);

/**
 * Runs the `"ite"` or `"rse"` virtual sensor over a video.
 */
enum VirtimuStatus virtimu_extract(const struct VirtimuVideo *video,
                                   const char *method,
                                   struct VirtimuTrace **out);

/**
 * Largest Pearson correlation over integer lags in `[-max_lag, max_lag]`.
 */
enum VirtimuStatus virtimu_max_lag_corr(const double *a,
                                        size_t a_len,
                                        const double *b,
                                        size_t b_len,
                                        size_t max_lag,
                                        int64_t *lag,
                                        double *corr);

/**
 * Feature vector of a trace under the default schema of `source`
 * (`"physical"`, `"ite"` or `"rse"`).
 */
enum VirtimuStatus virtimu_features(const struct VirtimuTrace *trace,
                                    const char *source,
                                    double *buf,
                                    size_t cap,
                                    size_t *written);

enum VirtimuStatus virtimu_template_load(const char *path, struct VirtimuTemplate **out);

void virtimu_template_free(struct VirtimuTemplate *template_);

/**
 * Verifies a trace against a template. `accept` and `degenerate` receive 0
 * or 1.
 */
enum VirtimuStatus virtimu_verify(const struct VirtimuTemplate *template_,
                                  const char *video_id,
                                  const struct VirtimuTrace *trace,
                                  int32_t *accept,
                                  double *score,
                                  int32_t *degenerate);

/**
 * Cost-weighted error `c1 * fpr + c2 * fnr` of an operating point.
 */
enum VirtimuStatus virtimu_error_cost(double fpr, double fnr, double c1, double c2, double *e);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VIRTIMU_H */
