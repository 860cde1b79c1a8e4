#ifndef AUTOADAPT_H
#define AUTOADAPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum AaStatus {
  AA_STATUS_OK = 0,
  AA_STATUS_NULL_POINTER = 1,
  AA_STATUS_INVALID_UTF8 = 2,
  AA_STATUS_INVALID_ARGUMENT = 3,
  AA_STATUS_MODEL = 4,
  AA_STATUS_CONFIG = 5,
  AA_STATUS_SAMPLER = 6,
  AA_STATUS_DIAGNOSTICS = 7,
  AA_STATUS_IO = 8,
  AA_STATUS_PANIC = 9,
} AaStatus;

// A compiled model graph.
typedef struct AaModel AaModel;

// Outcome of an adaptive search.
typedef struct AaResult AaResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty if none. The
// pointer stays valid until the next failing call on this thread.
const char *aa_last_error(void);

// Parse a model from its text description.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum AaStatus aa_model_parse(const char *text, struct AaModel **out);

// Read and parse a model file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum AaStatus aa_model_from_file(const char *path, struct AaModel **out);

// Build a benchmark model (`litters`, `glmm` or `spatial`) with data
// simulated from `data_seed`. `size` 0 selects the model's default.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum AaStatus aa_model_benchmark(const char *name,
                                 uintptr_t size,
                                 uint64_t data_seed,
                                 struct AaModel **out);

// Number of sampled dimensions; 0 for a null handle.
//
// # Safety
// `model` must be null or a handle from this library.
uintptr_t aa_model_dim(const struct AaModel *model);

// # Safety
// `model` must be null or a handle from this library, freed once.
void aa_model_free(struct AaModel *model);

// Run the adaptive kernel search. `config_json` may be null for the
// defaults; otherwise it is a JSON object with any of `outer`, `inner`,
// `candidates`, `trigger`, `cut_heights`, `keep_probability`, `time`,
// `retain_traces`.
//
// # Safety
// `model` must be a live handle, `config_json` null or NUL-terminated,
// `out` a valid pointer.
enum AaStatus aa_run_auto_adapt(const struct AaModel *model,
                                const char *config_json,
                                uint64_t seed,
                                struct AaResult **out);

// Best measured efficiency; NaN for a null handle.
//
// # Safety
// `result` must be null or a live handle.
double aa_result_best_efficiency(const struct AaResult *result);

// Number of outer iterations run; 0 for a null handle.
//
// # Safety
// `result` must be null or a live handle.
uintptr_t aa_result_iterations(const struct AaResult *result);

// Serialise the best kernel, history and final state to JSON. The
// string must be released with [`aa_string_free`].
//
// # Safety
// `result` must be a live handle and `out` a valid pointer.
enum AaStatus aa_result_to_json(const struct AaResult *result, char **out);

// # Safety
// `result` must be null or a live handle, freed once.
void aa_result_free(struct AaResult *result);

// Release a string returned by this library.
//
// # Safety
// `s` must be null or a string from this library, freed once.
void aa_string_free(char *s);

// Integrated autocorrelation time of a chain of `n` values.
//
// # Safety
// `chain` must point to `n` readable doubles and `out` be valid.
enum AaStatus aa_iact(const double *chain, uintptr_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AUTOADAPT_H */
