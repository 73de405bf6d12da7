#include "plrnn/hrf.hpp"

#include "plrnn/rng.hpp"

#include <cmath>

namespace plrnn {

namespace {

// Gamma density with shape a, unit scale.
double gamma_pdf(double t, double a) {
    if (t <= 0.0) return 0.0;
    return std::exp((a - 1.0) * std::log(t) - t - std::lgamma(a));
}

}  // namespace

HrfKernel canonical_hrf(double tr, double duration_s) {
    require(tr > 0.0, ErrorCode::invalid_argument, "canonical_hrf: tr must be positive");
    require(duration_s >= tr, ErrorCode::invalid_argument,
            "canonical_hrf: duration must cover at least one tap");
    const int n = static_cast<int>(std::floor(duration_s / tr)) + 1;
    HrfKernel k;
    k.tr = tr;
    k.taps.resize(n);
    for (int i = 0; i < n; ++i) {
        const double t = i * tr;
        k.taps(i) = gamma_pdf(t, 6.0) - gamma_pdf(t, 16.0) / 6.0;
    }
    const double peak = k.taps.maxCoeff();
    require(peak > 0.0, ErrorCode::internal, "canonical_hrf: degenerate kernel");
    k.taps /= peak;
    return k;
}

HrfKernel delta_kernel() {
    HrfKernel k;
    k.tr = 1.0;
    k.taps = VectorXd::Ones(1);
    return k;
}

MatrixXd convolve_window(const HrfKernel& k, const MatrixXd& z) {
    k.validate();
    const int T = static_cast<int>(z.rows());
    const int n = k.n();
    MatrixXd out = MatrixXd::Zero(T, z.cols());
    for (int t = 0; t < T; ++t) {
        const int lmax = std::min(n - 1, t);
        for (int l = 0; l <= lmax; ++l) out.row(t) += k.taps(n - 1 - l) * z.row(t - l);
    }
    return out;
}

MatrixXd conv_matrix_dense(const HrfKernel& k, int M, int T) {
    k.validate();
    require(M >= 1 && T >= 1, ErrorCode::invalid_argument, "conv_matrix_dense: M, T must be >= 1");
    const int n = k.n();
    MatrixXd H = MatrixXd::Zero(M * T, M * T);
    for (int t = 0; t < T; ++t) {
        const int lmax = std::min(n - 1, t);
        for (int l = 0; l <= lmax; ++l)
            for (int m = 0; m < M; ++m) H(t * M + m, (t - l) * M + m) = k.taps(n - 1 - l);
    }
    return H;
}

Trajectory observe_bold(const ObsParamsBold& obs, const Trajectory& latent,
                        const std::optional<MatrixXd>& nuisance,
                        std::optional<std::uint64_t> seed) {
    obs.validate(latent.dim());
    latent.validate();
    const int T = latent.T();
    const int N = obs.N();
    const int P = obs.P();
    if (P > 0)
        require(nuisance && nuisance->rows() == T && nuisance->cols() == P,
                ErrorCode::dimension_mismatch, "observe_bold: nuisance must be T x P");

    Trajectory out;
    out.dt = latent.dt;
    out.unstable = latent.unstable;
    out.values = convolve_window(obs.hrf, latent.values) * obs.B.transpose();
    if (P > 0) {
        out.values += *nuisance * obs.J.transpose();
        out.nuisance = nuisance;
    }
    if (seed) {
        CounterRng rng(*seed, /*stream=*/4);
        const VectorXd sd = obs.gamma.cwiseSqrt();
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < N; ++i) out.values(t, i) += sd(i) * rng.gaussian();
    }
    return out;
}

}  // namespace plrnn
