#pragma once

// Experiment orchestration: the benchmark reconstruction suite (sample an
// ODE system, fit, free-run, score) and the single-dataset fit pipeline
// (ingest CSV, smooth, standardize, fit, evaluate, persist artifacts).

#include <string>
#include <vector>

#include "plrnn/analysis.hpp"
#include "plrnn/benchmarks.hpp"
#include "plrnn/metrics.hpp"
#include "plrnn/serialize.hpp"
#include "plrnn/training.hpp"

namespace plrnn {

struct SuiteConfig {
    std::string system = "lorenz";
    SamplingSpec sampling;  // per-run seeds are derived; sampling.seed is ignored
    int n_seeds = 20;
    std::vector<int> M_list = {12};
    std::vector<Protocol> protocols = {Protocol::anneal};
    Nonlinearity nonlinearity = Nonlinearity::relu;
    AnnealConfig training;  // M, protocol, seed, nonlinearity overridden per run
    std::uint64_t experiment_seed = 1;
    int generate_T = 100000;         // free-run length scored against the sample
    double success_threshold = 0.4;  // normalized divergence counted as reconstructed
    int n_workers = 1;
    std::string output_dir;  // when set, per-run artifacts and the report are written
    void validate() const;
};

// One (seed, M, protocol) cell of the suite. Metric fields are NaN when the
// stage producing them did not run; error says why a run aborted.
struct SuiteRun {
    std::string system;
    int run_index = 0;
    int M = 0;
    Protocol protocol = Protocol::anneal;
    std::uint64_t seed = 0;  // per-run root all stage seeds derive from
    bool fit_success = false;
    bool fit_stable = false;
    bool gen_unstable = false;  // noisy free run hit the divergence guard
    bool det_unstable = false;  // deterministic free run diverged
    double terminal_delta = std::numeric_limits<double>::quiet_NaN();
    double klx = std::numeric_limits<double>::quiet_NaN();
    double klx_normalized = std::numeric_limits<double>::quiet_NaN();
    double lambda_gen = std::numeric_limits<double>::quiet_NaN();  // per data time unit
    double spectrum_correlation = std::numeric_limits<double>::quiet_NaN();
    bool success = false;  // fit succeeded and klx_normalized <= threshold
    double wall_seconds = 0.0;
    std::string error;
};

struct SuiteAggregate {
    int M = 0;
    Protocol protocol = Protocol::anneal;
    int n_runs = 0;
    int n_fit_success = 0;
    int n_stable = 0;
    int n_reconstructed = 0;   // runs with success set
    double success_fraction = 0.0;  // n_reconstructed / n_runs
    double stable_fraction = 0.0;
    double median_klx = std::numeric_limits<double>::quiet_NaN();  // normalized, finite runs
};

struct SuiteReport {
    std::string system;
    std::uint64_t experiment_seed = 0;
    int generate_T = 0;
    double success_threshold = 0.4;
    std::string created;  // wall-clock tag, excluded from any comparison
    std::vector<SuiteRun> runs;
    std::vector<SuiteAggregate> aggregates;
};

// Groups runs by (M, protocol) and recomputes counts and medians from the
// records alone, so re-aggregating persisted run files reproduces the
// report's aggregate block exactly.
std::vector<SuiteAggregate> aggregate_suite(const std::vector<SuiteRun>& runs);

SuiteReport run_benchmark_suite(const SuiteConfig& config);

std::string suite_report_to_json(const SuiteReport& report, int indent = 2);
SuiteReport suite_report_from_json(const std::string& text);
void save_suite_report(const SuiteReport& report, const std::string& path);
SuiteReport load_suite_report(const std::string& path);

std::string suite_run_to_json(const SuiteRun& run, int indent = 2);
SuiteRun suite_run_from_json(const std::string& text);

// Plotting table, one row per run; carries every SuiteRun field except the
// error text, which stays in the JSON artifacts.
void save_suite_csv(const std::vector<SuiteRun>& runs, const std::string& path);
std::vector<SuiteRun> load_suite_csv(const std::string& path);

// ---------------------------------------------------------------------------
// single-dataset pipeline

struct DatasetConfig {
    std::string data_csv;      // T x N channel matrix; a leading 't' column is dropped
    std::string inputs_csv;    // optional T x K design matrix
    std::string nuisance_csv;  // optional T x P regressors (convolved head only)
    int declared_nuisance = 0;  // P promised by the protocol; > 0 requires the file
    bool use_inputs = true;     // ignore the inputs file when off
    bool bold_head = false;
    std::string hrf_csv;  // kernel taps; empty uses the canonical kernel at hrf_tr
    double hrf_tr = 1.0;
    bool smooth = false;  // Gaussian temporal filter, unit variance in samples
    int M = 8;
    Protocol protocol = Protocol::anneal;
    Nonlinearity nonlinearity = Nonlinearity::relu;
    std::uint64_t seed = 0;
    AnnealConfig training;  // knobs; M, protocol, seed, head, hrf overridden
    int klz_samples = 100000;
    int dynamics_inits = 100;
    int dynamics_T = 2000;
    std::string output_dir;
    void validate() const;
};

struct DatasetResult {
    FitResult fit;
    StandardizeTransform transform;
    Trajectory standardized;  // what the fit actually saw, inputs/nuisance attached
    KlzReport klz;
    AttractorSet dynamics;
    PredictionMse mse;
    std::string metric_error;  // set when the fitted model diverged during scoring
};

DatasetResult fit_dataset(const DatasetConfig& config);

// Channel matrix from CSV; a leading 't' column (as written by the
// trajectory writer) is dropped so our own files ingest cleanly.
MatrixXd load_channel_csv(const std::string& path);

// Compact digest of a dataset fit for terminal output; the artifact files
// carry the full detail.
std::string dataset_result_summary(const DatasetResult& result, int indent = 2);

// Symmetric Gaussian filter down each column, kernel truncated at four
// standard deviations and renormalized at the edges.
MatrixXd smooth_columns(const MatrixXd& x, double variance);

// ---------------------------------------------------------------------------
// scoring and dynamics summaries for already-fitted models

// Deterministic free run of the latent map: whether it diverged, how much
// the state still moves at the end (a settled run pins terminal_delta near
// zero, a sustained oscillation keeps it finite), and the twin-separation
// exponent from base points on the visited set, in data time units.
struct LatentProbe {
    bool det_unstable = false;
    double terminal_delta = std::numeric_limits<double>::quiet_NaN();
    double lambda = std::numeric_limits<double>::quiet_NaN();
};

LatentProbe probe_latent_dynamics(const PlrnnParams& p, double dt_data, std::uint64_t seed,
                                  int T_det = 4000);

struct EvalOptions {
    int generate_T = 100000;   // free-run length behind the observation metric; 0 skips
    int klz_samples = 100000;  // MC samples of the latent divergence; 0 skips
    int mse_horizon = 20;      // n-step prediction error horizon; 0 skips
    std::uint64_t seed = 0;
    void validate() const;
};

// Scores a model against a standardized trajectory. Models with external
// inputs are generated along the recorded input series (length T instead of
// generate_T); models with nuisance loadings skip the observation-space
// comparison, since a free run has no nuisance series to feed the head.
// Metric failures land in `error` and the rest of the report is still
// filled in.
struct EvalReport {
    bool klx_computed = false;
    KlReport klx;        // meaningful only when klx_computed
    bool gen_unstable = false;
    double spectrum_correlation = std::numeric_limits<double>::quiet_NaN();
    KlzReport klz;       // n_samples == 0 when skipped
    PredictionMse mse;   // empty when skipped
    LatentProbe probe;
    std::string error;
};

EvalReport evaluate_model(const ModelBundle& model, const Trajectory& data,
                          const EvalOptions& opts);

std::string eval_report_to_json(const EvalReport& report, int indent = 2);
EvalReport eval_report_from_json(const std::string& text);

struct AnalyzeOptions {
    int inits = 100;   // random starts of the attractor search
    int T = 2000;      // free-run length per start
    int probe_T = 4000;
    double dt = 1.0;   // data time per model step, scales the exponent
    std::uint64_t seed = 0;
    void validate() const;
};

struct DynamicsSummary {
    AttractorSet attractors;
    LatentProbe probe;
};

DynamicsSummary analyze_model(const ModelBundle& model, const AnalyzeOptions& opts);

std::string dynamics_summary_to_json(const DynamicsSummary& summary, int indent = 2);
DynamicsSummary dynamics_summary_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// config codecs, used by --config files and the shared-library boundary
//
// Configs are plain JSON objects without a schema tag. Every key is optional
// and falls back to the struct default; unknown keys are rejected so typos
// do not silently vanish. Training knobs live under "training", minus the
// fields the pipelines override (M, protocol, seed, nonlinearity, head).

std::string suite_config_to_json(const SuiteConfig& config, int indent = 2);
SuiteConfig suite_config_from_json(const std::string& text);

std::string dataset_config_to_json(const DatasetConfig& config, int indent = 2);
DatasetConfig dataset_config_from_json(const std::string& text);

std::string eval_options_to_json(const EvalOptions& opts, int indent = 2);
EvalOptions eval_options_from_json(const std::string& text);

std::string analyze_options_to_json(const AnalyzeOptions& opts, int indent = 2);
AnalyzeOptions analyze_options_from_json(const std::string& text);

}  // namespace plrnn
