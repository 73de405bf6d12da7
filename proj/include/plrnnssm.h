#ifndef PLRNNSSM_H
#define PLRNNSSM_H

/* C boundary of the PLRNN state-space library.
 *
 * Every function returns a status code; PSM_OK (0) means success. On any
 * failure, psm_last_error() returns a thread-local message describing what
 * went wrong; out parameters are written only on success. Handles returned
 * through psm_model / psm_trajectory pointers are released with the
 * matching *_free call, strings returned through char** with
 * psm_string_free. Passing NULL where an object is required fails with
 * PSM_INVALID_ARGUMENT instead of crashing.
 *
 * Configs, options, and reports cross the boundary as JSON text. Config
 * documents are plain objects where every key is optional and unknown keys
 * are rejected; reports are schema-tagged documents that the library's own
 * readers (and any JSON parser) can consume.
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum psm_status {
    PSM_OK = 0,
    PSM_INVALID_ARGUMENT = 1,
    PSM_DIMENSION_MISMATCH = 2,
    PSM_IO_ERROR = 3,
    PSM_PARSE_ERROR = 4,
    PSM_SINGULAR_SYSTEM = 5,
    PSM_NOT_CONVERGED = 6,
    PSM_UNSTABLE = 7,
    PSM_INTERNAL = 8
} psm_status;

/* Library version as "major.minor.patch". The pointer is static. */
const char* psm_version(void);

/* Message for the most recent failing call on this thread; the empty
 * string after a success. The pointer stays valid until the next call on
 * the same thread. */
const char* psm_last_error(void);

void psm_string_free(char* s);

/* A fitted or constructed model bundle: latent dynamics plus one of the
 * two observation heads and its metadata. */
typedef struct psm_model psm_model;

/* A time series: T x dim values at spacing dt, with optional input and
 * nuisance series attached, plus the divergence flag of simulated runs. */
typedef struct psm_trajectory psm_trajectory;

/* ------------------------------------------------------------------ */
/* models                                                              */

psm_status psm_model_load(const char* path, psm_model** out);
psm_status psm_model_from_json(const char* json_text, psm_model** out);
psm_status psm_model_save(const psm_model* model, const char* path);

/* indent < 0 emits the compact single-line form. */
psm_status psm_model_to_json(const psm_model* model, int indent, char** out_json);

/* M latent states, N channels, K inputs, P nuisance regressors. Any out
 * pointer may be NULL. */
psm_status psm_model_dims(const psm_model* model, int32_t* M, int32_t* N, int32_t* K,
                          int32_t* P);

void psm_model_free(psm_model* model);

/* ------------------------------------------------------------------ */
/* trajectories                                                        */

/* values is row-major, T rows by dim columns, copied in. */
psm_status psm_trajectory_create(int64_t T, int32_t dim, const double* values,
                                 double dt, psm_trajectory** out);

psm_status psm_trajectory_load_csv(const char* path, psm_trajectory** out);
psm_status psm_trajectory_save_csv(const psm_trajectory* traj, const char* path);
psm_status psm_trajectory_load_json(const char* path, psm_trajectory** out);
psm_status psm_trajectory_save_json(const psm_trajectory* traj, const char* path);

/* Any out pointer may be NULL. */
psm_status psm_trajectory_dims(const psm_trajectory* traj, int64_t* T, int32_t* dim,
                               int32_t* n_inputs, int32_t* n_nuisance);
psm_status psm_trajectory_dt(const psm_trajectory* traj, double* out_dt);
psm_status psm_trajectory_unstable(const psm_trajectory* traj, int32_t* out_flag);

/* Copies the values out row-major; capacity is the element count of the
 * destination and must be at least T * dim. */
psm_status psm_trajectory_values(const psm_trajectory* traj, double* out, size_t capacity);

/* Loads a channel-matrix CSV (a leading 't' column is dropped) and attaches
 * it to the trajectory; role is "inputs" or "nuisance". Row count must
 * match the trajectory. */
psm_status psm_trajectory_attach_csv(psm_trajectory* traj, const char* role,
                                     const char* path);

/* Per-column zero-mean unit-variance rescale in place. When not NULL,
 * out_mean and out_scale receive dim entries of the applied transform. */
psm_status psm_trajectory_standardize(psm_trajectory* traj, double* out_mean,
                                      double* out_scale);

void psm_trajectory_free(psm_trajectory* traj);

/* ------------------------------------------------------------------ */
/* simulation                                                          */

/* Integrates a named benchmark system ("lorenz" or "vdp") with RK4 from a
 * random start and emits T samples at spacing dt * sub_sample, injecting
 * discrete process noise of variance noise_var per coordinate between
 * samples. burn_in emitted-rate samples are discarded first. */
psm_status psm_sample_benchmark(const char* system, int64_t T, double dt,
                                int32_t sub_sample, double noise_var, uint64_t seed,
                                int32_t burn_in, psm_trajectory** out);

/* Free run of the model's latent dynamics. Models with inputs need an
 * input trajectory covering T steps (its values are the input series);
 * pass NULL otherwise. deterministic != 0 suppresses the process noise.
 * A diverged run is truncated and flagged unstable, not an error. */
psm_status psm_model_generate(const psm_model* model, int64_t T, uint64_t seed,
                              int32_t deterministic, const psm_trajectory* inputs,
                              psm_trajectory** out_latent);

/* Applies the model's observation head to a latent trajectory. A model
 * with nuisance loadings reads the series attached to `latent`.
 * with_noise == 0 gives the noise-free mean. */
psm_status psm_model_observe(const psm_model* model, const psm_trajectory* latent,
                             int32_t with_noise, uint64_t seed, psm_trajectory** out);

/* ------------------------------------------------------------------ */
/* metrics                                                             */

/* Binned observation-space divergence KL(data || generated) between two
 * clouds on comparable (standardized) scales. Either out may be NULL;
 * normalized lies in [0, 1]. */
psm_status psm_kl_x(const psm_trajectory* data, const psm_trajectory* generated,
                    double* out_kl, double* out_normalized);

/* Mean per-channel Pearson correlation of Welch power spectra. */
psm_status psm_spectrum_correlation(const psm_trajectory* a, const psm_trajectory* b,
                                    double* out);

/* ------------------------------------------------------------------ */
/* pipelines                                                           */

/* Fits a CSV dataset per the dataset config document (data_csv, head,
 * inputs, training knobs, output_dir, ...) and returns the fit summary
 * digest. Artifacts are written when output_dir is set. */
psm_status psm_fit_dataset(const char* config_json, char** out_summary_json);

/* Scores a model against a standardized trajectory and returns the eval
 * report document. options_json may be NULL for defaults. */
psm_status psm_evaluate(const psm_model* model, const psm_trajectory* data,
                        const char* options_json, char** out_report_json);

/* Fixed points, cycles, and the deterministic probe of a model's latent
 * dynamics as an analysis document. options_json may be NULL. */
psm_status psm_analyze(const psm_model* model, const char* options_json,
                       char** out_report_json);

/* Runs the benchmark reconstruction suite per the suite config document
 * and returns the suite report. Per-run artifacts are written when
 * output_dir is set. */
psm_status psm_run_benchmark_suite(const char* config_json, char** out_report_json);

#ifdef __cplusplus
}
#endif

#endif /* PLRNNSSM_H */
