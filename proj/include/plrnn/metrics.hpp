#pragma once

#include "plrnn/inference.hpp"
#include "plrnn/types.hpp"

#include <functional>

namespace plrnn {

// ---------------------------------------------------------------------------
// Occupancy divergence in observation space.
//
// Both point clouds are histogrammed on a common per-dimension grid and
// compared with an additively smoothed KL divergence. The measure looks at
// which regions of state space the trajectories visit, not at time alignment,
// so two runs of the same system score near zero no matter how their phases
// relate.

struct BinSpec {
    double delta = 1.0;   // bin width
    double lo = -4.0;     // per-dimension range; points outside clamp to the
    double hi = 4.0;      // edge bins so no probability mass is dropped
    double alpha = 1e-6;  // additive smoothing constant

    int bins_per_dim() const;
    void validate() const;
};

struct KlReport {
    double kl = 0.0;             // smoothed KL(true || generated)
    double kl_normalized = 0.0;  // kl / normalizer, in [0, 1]
    double normalizer = 0.0;     // KL against fully disjoint generated mass
    double bins_total = 0.0;     // grid size K (can exceed 2^63 for high dims)
    long occupied_true = 0;      // bins with at least one true point
    long occupied_gen = 0;
    long occupied_union = 0;
    int T_true = 0;
    int T_gen = 0;
    double clamped_true = 0.0;  // fraction of points outside the grid range
    double clamped_gen = 0.0;
    bool clamp_warning = false;  // more than 1% clamped in either cloud
};

// KL(true || gen) over the binned clouds. Rows are time points, columns are
// dimensions; the clouds must share the dimension count and be on comparable
// (standardized) scales for the default range to make sense.
KlReport kl_x(const MatrixXd& x_true, const MatrixXd& x_gen, const BinSpec& spec = {});

// ---------------------------------------------------------------------------
// Latent-space divergence between the inferred posterior and the free-running
// model, both approximated as Gaussian mixtures across trajectory time with
// one diagonal component per step.

struct GaussianMixture {
    MatrixXd means;  // L x M
    MatrixXd vars;   // L x M, strictly positive

    int L() const { return static_cast<int>(means.rows()); }
    int M() const { return static_cast<int>(means.cols()); }
    void validate() const;
};

// Mixture over the smoothed states, component t = N(E[z_t], diag Var[z_t]).
// Variances are floored (default 1) to keep the divergence well defined when
// the posterior is very tight.
GaussianMixture posterior_mixture(const StatePosterior& post, double variance_floor = 1.0);

// Mixture over a noisy free run of the model: component t = N(m_t, I) with
// m_t the one-step conditional mean from the simulated state at t-1. Inputs,
// when the model has them, must cover the run; without inputs a burn-in is
// discarded first. Throws ErrorCode::unstable if the run diverges.
GaussianMixture generated_mixture(const ModelBundle& model, int L, std::uint64_t seed,
                                  const MatrixXd* S = nullptr, int burn_in = 100);

// Monte Carlo estimate of KL(p || q) sampling n times from p. Optional
// standard error of the estimate.
double kl_z_mc(const GaussianMixture& p, const GaussianMixture& q, int n_samples,
               std::uint64_t seed, double* standard_error = nullptr);

// Deterministic variational approximation: matched-bound estimate from the
// closed-form KL between every component pair. Exact for single-component
// mixtures; zero when the mixtures coincide.
double kl_z_variational(const GaussianMixture& p, const GaussianMixture& q);

// Single Gaussian with the mixture's overall mean and per-dimension marginal
// variance. Used as the flow-free reference of the normalized divergence.
GaussianMixture moment_matched_reference(const GaussianMixture& mix);

struct KlzReport {
    double kl_mc = 0.0;
    double mc_standard_error = 0.0;
    double kl_variational = 0.0;
    double kl_reference = 0.0;   // MC KL(posterior || reference), same samples
    double kl_normalized = 0.0;  // kl_mc / kl_reference
    bool degenerate = false;     // reference divergence vanished
    int n_samples = 0;
    double variance_floor = 1.0;
};

// Full latent-space report: MC and variational estimates plus the normalized
// value against the moment-matched reference of the generated mixture. The
// numerator and reference divergence share the same posterior samples, so a
// generated mixture that collapses to the reference normalizes to exactly 1.
// The variational value is reported for comparison but not used in the ratio:
// it underestimates against single broad components and can go negative there.
KlzReport kl_z(const StatePosterior& post, const GaussianMixture& gen,
               int n_samples = 500000, std::uint64_t seed = 0, double variance_floor = 1.0);

// ---------------------------------------------------------------------------
// Largest Lyapunov exponent from trajectory divergence.

struct LyapunovEstimate {
    double lambda_max = 0.0;  // per time unit (slope per lag divided by dt)
    double d0 = 0.0;
    int fit_lo = 0;  // lag range of the regression, inclusive
    int fit_hi = 0;
    double r2 = 0.0;
    double dt = 1.0;
    VectorXd curve;  // mean log separation per lag, length horizon+1
};

// Deterministic trajectory from a given initial state; returns T rows
// starting at that state's successor scale (row 0 = first emitted step).
using Stepper = std::function<MatrixXd(const VectorXd&, int)>;

// Average log-separation curve over one perturbed twin per base point
// (separation d0 in a random direction), regressed over the initial linear
// segment. The fit covers the lags still on the start side of 90% of the
// curve's rise toward its final plateau (at least 5 lags); curves without a
// rise, as for limit cycles, are fit over their whole length. Base points
// should lie on the attractor. Throws when every pair leaves float range
// immediately.
LyapunovEstimate lyapunov_max(const Stepper& stepper, const MatrixXd& base_points, double d0,
                              int horizon, double dt, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Spectral agreement: mean Pearson correlation between per-dimension Welch
// power spectra (segment length min(T)/8, 50% overlap, Hann window).
// Requires at least 16 rows in each trajectory and equal dimension.
double power_spectrum_correlation(const MatrixXd& a, const MatrixXd& b);

// Welch power spectrum of each column; rows are the seg/2+1 nonnegative
// frequency bins. Exposed for report serialization.
MatrixXd welch_psd(const MatrixXd& x, int segment);

// ---------------------------------------------------------------------------
// n-step-ahead prediction error. From each time t the latent model runs
// deterministically n steps from the inferred state, is mapped through the
// observation head (mixing inferred and predicted states across the
// convolution window for the convolved head), and compared against x_{t+n}.
// Index n of the returned vectors is the n-step error; index 0 is the
// observation-model residual.

struct PredictionMse {
    VectorXd obs;    // length max_n + 1, averaged squared error per element
    VectorXd state;  // same, between predicted and inferred latent states
};

PredictionMse n_step_ahead_mse(const ModelBundle& model, const StatePosterior& post,
                               const MatrixXd& X, const MatrixXd* S = nullptr,
                               const MatrixXd* R = nullptr, int max_n = 20);

}  // namespace plrnn
