#pragma once

#include "plrnn/banded.hpp"
#include "plrnn/types.hpp"

#include <optional>

namespace plrnn {

using ArrayXb = Eigen::Array<bool, Eigen::Dynamic, 1>;

struct EstepConfig {
    int max_region_iterations = 100;
    double jitter0 = 1e-8;   // first diagonal jitter on a failed factorization
    double jitter_max = 1e-2;
    std::uint64_t seed = 0;  // cycle-guard bit flips
};

// MAP problem for the stacked state z in R^{MT}, unit-fastest ordering
// (z_{1,t}..z_{M,t} contiguous per step). For a fixed region indicator d the
// negative log posterior is an SPD quadratic; the nonlinearity only moves the
// region, so the solver alternates banded solves with region updates.
//
// The precision decomposes as
//   P(d) = U0 + D U1 + U1^T D + D U2 D + H^T U3 H,
// with U0 the block-tridiagonal prior/dynamics part, U1/U2 the pieces the
// region couples to, U3 the observation part, and H the convolution matrix
// of the BOLD head (identity for the linear head). Bandwidth is 2M-1 for the
// linear head and M*n_taps - 1 for the convolved head.
class EstepProblem {
  public:
    EstepProblem(const ModelBundle& model, const MatrixXd& X, const MatrixXd* S,
                 const MatrixXd* R);

    int M() const { return M_; }
    int T() const { return T_; }
    int size() const { return M_ * T_; }
    int bandwidth() const { return kd_; }
    bool relu() const { return relu_; }

    // Region indicator of a stacked state; the boundary z = 0 sits on the
    // inactive side. The identity nonlinearity has a single region with every
    // unit active, which collapses the MAP step to one linear solve.
    ArrayXb region_of(const VectorXd& z) const {
        if (!relu_) return ArrayXb::Constant(z.size(), true);
        return z.array() > 0.0;
    }

    void assemble_precision(const ArrayXb& d, BandedSpd& P) const;
    VectorXd assemble_rhs(const ArrayXb& d) const;

    // Joint log density of (z, data) up to z-independent constants:
    // -1/2 of the weighted squared residuals of prior, dynamics, and
    // observation, with the region taken from z itself.
    double objective(const VectorXd& z) const;

    // Analytic gradient with the region frozen at d: -(P(d) z - w(d)).
    VectorXd gradient(const VectorXd& z, const ArrayXb& d) const;

    // Factorization with escalating diagonal jitter on failure.
    BandedLdlt factor_with_jitter(const BandedSpd& P, const EstepConfig& cfg) const;

    const MatrixXd& data() const { return X_; }
    const MatrixXd* inputs() const { return S_; }
    const MatrixXd* nuisance() const { return R_; }
    const ModelBundle& model() const { return model_; }
    const VectorXd& taps() const { return taps_; }

    // Windowed convolution of a stacked or T x M state with the head kernel
    // (identity for the linear head).
    MatrixXd convolve(const MatrixXd& zTbyM) const;

  private:
    ModelBundle model_;
    MatrixXd X_;
    const MatrixXd* S_;
    const MatrixXd* R_;
    MatrixXd Sdata_, Rdata_;

    int M_, N_, K_, P_, T_, kd_, ntaps_;
    bool relu_;
    bool bold_;

    VectorXd taps_;    // length 1 for the linear head
    VectorXd sinv_;    // 1/sigma
    VectorXd ginv_;    // 1/gamma
    VectorXd adiag_;
    VectorXd AtSiA_;   // diag of A' Sinv A
    VectorXd SiA_;     // diag of Sinv A
    MatrixXd WtSiA_;   // W' Sinv A
    MatrixXd WtSi_;    // W' Sinv
    MatrixXd WtSiW_;
    MatrixXd SiW_;     // Sinv W
    MatrixXd BtGiB_;
    MatrixXd v0_, v1_;  // M x T block columns
    VectorXd w_base_;   // v0 + H^T v2, stacked
    MatrixXd kernel_cross_;  // c(t, t+delta) = sum_tau k(tau,t) k(tau,t+delta)

    friend struct MomentWork;
};

struct MapEstimate {
    VectorXd z;      // MT
    ArrayXb d;       // region of z
    double q = 0.0;  // objective at z
    bool converged = false;  // region fixed point reached
    int iterations = 0;
};

MapEstimate estep_map(const EstepProblem& prob, const VectorXd* z_init, const EstepConfig& cfg);

// Laplace covariance: banded entries of P(d)^{-1}. log_det, when given,
// receives log|P(d)| of the factorization actually used (jitter included),
// from which the posterior entropy follows.
BandedSpd estep_covariance(const EstepProblem& prob, const ArrayXb& d, const EstepConfig& cfg,
                           double* log_det = nullptr);

// Posterior expectation sums feeding the closed-form M-steps. Lagged sums
// run over t = 2..T; observation sums over t = 1..T. y denotes the convolved
// latent state of the BOLD head (y = z for the linear head).
struct MomentSums {
    int M = 0, K = 0, P = 0, T = 0;
    MatrixXd E1;  // sum E[phi_{t-1} phi_{t-1}']
    MatrixXd E2;  // sum E[z_t z_{t-1}']
    MatrixXd E3;  // sum E[z_{t-1} z_{t-1}']
    MatrixXd E4;  // sum E[phi_{t-1} z_{t-1}']
    MatrixXd E5;  // sum E[z_t phi_{t-1}']
    VectorXd G1_lag, G1_cur, G3;  // sum E[z_{t-1}], sum E[z_t], sum E[phi_{t-1}]
    MatrixXd F3, F4;              // K x M: sum s_t E[z_{t-1}]', sum s_t E[phi_{t-1}]'
    MatrixXd F5;                  // M x K: sum E[z_t] s_t'
    MatrixXd F6;                  // K x K: sum s_t s_t'
    VectorXd G2;                  // K: sum s_t
    MatrixXd Ezz;                 // sum_{t=2..T} E[z_t z_t']
    VectorXd m1;
    MatrixXd V1;
    VectorXd s1;                  // inputs at t=1 (empty when K = 0)
    MatrixXd F2, H1, H2, H3, F7, F8;
    MatrixXd means;     // T x M
    MatrixXd var_diag;  // T x M posterior variances
};

MomentSums compute_moments(const EstepProblem& prob, const VectorXd& z_map, const BandedSpd& V);

// Regression targets/Gram of the latent M-step in block order
// [z_{t-1}, phi(z_{t-1}), 1, s_t].
MatrixXd latent_gram(const MomentSums& s);
MatrixXd latent_cross(const MomentSums& s);  // M x (2M+1+K)

struct MstepOptions {
    double ridge = 0.0;
    bool update_B = true;
    bool update_gamma = true;
    bool update_sigma = false;
};

// Row-wise update of [A W h C] honoring the structural zeros, plus mu0 and
// (optionally) sigma. Returns the updated parameter block.
PlrnnParams mstep_latent(const PlrnnParams& current, const MomentSums& s,
                         const MstepOptions& opt);

// Closed-form update of [B J] and Gamma.
void mstep_observation(ModelBundle& model, const MomentSums& s, const MstepOptions& opt);

// Expected joint log likelihood under the posterior moments, dropping the
// 2*pi constants: -1/2 (weighted residual sums) - T/2 (log|Sigma|+log|Gamma|).
// With sigma_override, residuals are reweighted by that process covariance
// instead (used for comparing fits across annealing levels).
double expected_joint_loglik(const ModelBundle& model, const MomentSums& s,
                             const VectorXd* sigma_override = nullptr);

struct StatePosterior {
    MatrixXd means;  // T x M
    BandedSpd cov;
    ArrayXb d;
    double q_map = 0.0;
    double entropy = 0.0;  // differential entropy of the Gaussian posterior
    MomentSums moments;
};

struct EmConfig {
    int max_iterations = 200;
    double tol = 1e-5;  // relative |dQ|
    double ridge = 0.0;
    bool freeze_B = false;
    bool freeze_gamma = false;
    bool freeze_sigma = true;
    std::uint64_t seed = 0;
    EstepConfig estep;
};

struct EmResult {
    ModelBundle model;
    StatePosterior posterior;
    // Evidence lower bound per iteration: expected joint log likelihood under
    // the kept posterior plus that posterior's entropy. Exact log likelihood
    // in the linear-Gaussian case.
    std::vector<double> q_trace;
    bool converged = false;
    int iterations = 0;
};

// EM with a MAP/Laplace E-step. Each iteration warm-starts the E-step from
// the previous MAP path and keeps the previous posterior whenever the fresh
// one scores a lower bound under the current parameters; with the exact
// block-coordinate M-steps this makes q_trace non-decreasing up to rounding.
EmResult em_fit(const ModelBundle& init, const MatrixXd& X, const MatrixXd* S, const MatrixXd* R,
                const EmConfig& cfg, const VectorXd* z_init = nullptr);

// Default E-step warm start: per-step ridge least squares through B for the
// linear head, zeros for the convolved head.
VectorXd default_state_init(const ModelBundle& model, const MatrixXd& X, const MatrixXd* R);

}  // namespace plrnn
