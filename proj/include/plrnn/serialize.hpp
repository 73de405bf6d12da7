#pragma once

// File formats. JSON carries models, checkpoints, and reports; CSV carries
// time series and flat tables. Every writer here has a reader that rebuilds
// an equal in-memory object, and numbers are printed with shortest
// round-trip precision so equality is exact.

#include <string>
#include <vector>

#include "plrnn/analysis.hpp"
#include "plrnn/inference.hpp"
#include "plrnn/metrics.hpp"
#include "plrnn/types.hpp"

namespace plrnn {

// Bumped when a format changes shape; readers reject other versions.
inline constexpr int kSchemaVersion = 1;

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// Model bundles. Matrices are stored with explicit {rows, cols, data}
// row-major blocks; the observation head carries a "head" tag so a reader
// knows whether to expect the convolution kernel and nuisance loadings.
std::string model_to_json(const ModelBundle& model, int indent = 2);
ModelBundle model_from_json(const std::string& text);
void save_model(const ModelBundle& model, const std::string& path);
ModelBundle load_model(const std::string& path);

// Fit checkpoint: the model together with the posterior summary it was
// scored with. The training trace travels inside model.meta.training_log.
struct FitCheckpoint {
    ModelBundle model;
    MatrixXd posterior_means;  // T x M
    MatrixXd posterior_vars;   // T x M marginal variances
    double q_map = 0.0;
    double entropy = 0.0;
};

FitCheckpoint make_checkpoint(const ModelBundle& model, const StatePosterior& post);
std::string checkpoint_to_json(const FitCheckpoint& ck, int indent = 2);
FitCheckpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const FitCheckpoint& ck, const std::string& path);
FitCheckpoint load_checkpoint(const std::string& path);

// Trajectory CSV: header t,<prefix>1..<prefix>D[,s1..sK][,r1..rP], one row
// per step with t = i*dt. The reader recovers dt from the first two rows
// and recognizes the input/nuisance blocks by their s/r column names, so
// value columns must not be named like "s1". The unstable flag only
// travels through the JSON form.
void save_trajectory_csv(const Trajectory& traj, const std::string& path,
                         const std::string& prefix = "x");
Trajectory load_trajectory_csv(const std::string& path);

std::string trajectory_to_json(const Trajectory& traj, int indent = 2);
Trajectory trajectory_from_json(const std::string& text);
void save_trajectory_json(const Trajectory& traj, const std::string& path);
Trajectory load_trajectory_json(const std::string& path);

// Flat numeric table. columns may be empty for a headerless file; the
// loader treats a first line with any non-numeric field as the header.
void save_matrix_csv(const MatrixXd& table, const std::vector<std::string>& columns,
                     const std::string& path);
MatrixXd load_matrix_csv(const std::string& path, std::vector<std::string>* columns = nullptr);

// Raw CSV cells for tables that mix text and numbers. The first line is
// the header; rows are returned untyped.
struct CsvCells {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};
CsvCells load_csv_cells(const std::string& path);

// Shortest decimal form that parses back to the same double.
std::string csv_number(double v);

// Annealing trace as step,q,q_rescaled,em_iterations rows.
void save_q_trace_csv(const std::vector<TrainingStepLog>& log, const std::string& path);
std::vector<TrainingStepLog> load_q_trace_csv(const std::string& path);

// Response kernel as a one-column CSV, one tap per line. The loader skips
// an optional header line; the sampling interval is not in the file.
void save_hrf_csv(const HrfKernel& hrf, const std::string& path);
HrfKernel load_hrf_csv(const std::string& path, double tr);

// Metric and dynamics reports.
std::string report_to_json(const KlReport& rep, int indent = 2);
std::string report_to_json(const KlzReport& rep, int indent = 2);
std::string report_to_json(const LyapunovEstimate& rep, int indent = 2);
std::string report_to_json(const PredictionMse& rep, int indent = 2);
std::string report_to_json(const AttractorSet& rep, int indent = 2);

KlReport kl_report_from_json(const std::string& text);
KlzReport klz_report_from_json(const std::string& text);
LyapunovEstimate lyapunov_from_json(const std::string& text);
PredictionMse prediction_mse_from_json(const std::string& text);
AttractorSet attractor_set_from_json(const std::string& text);

}  // namespace plrnn
