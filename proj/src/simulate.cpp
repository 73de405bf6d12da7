#include "plrnn/simulate.hpp"

#include "plrnn/rng.hpp"

namespace plrnn {

VectorXd latent_step(const PlrnnParams& p, const VectorXd& z_prev, const VectorXd* s,
                     const VectorXd* eps) {
    require(z_prev.size() == p.M(), ErrorCode::dimension_mismatch,
            "latent_step: z_prev length != M");
    VectorXd z = p.A.diagonal().cwiseProduct(z_prev) + p.W * apply_phi(p.phi, z_prev) + p.h;
    if (p.K() > 0) {
        require(s != nullptr && s->size() == p.K(), ErrorCode::dimension_mismatch,
                "latent_step: input s length != K");
        z += p.C * (*s);
    }
    if (eps != nullptr) z += *eps;
    return z;
}

Trajectory generate_latent(const PlrnnParams& p, int T, std::uint64_t seed, bool deterministic,
                           const std::optional<MatrixXd>& inputs, double divergence_threshold) {
    p.validate();
    require(T >= 1, ErrorCode::invalid_argument, "generate_latent: T must be >= 1");
    const int M = p.M();
    const int K = p.K();
    if (K > 0)
        require(inputs && inputs->rows() >= T && inputs->cols() == K,
                ErrorCode::dimension_mismatch, "generate_latent: inputs must be T x K");

    Trajectory out;
    out.values.setZero(T, M);
    if (inputs) out.inputs = inputs->topRows(T);

    CounterRng rng(seed, /*stream=*/1);
    const VectorXd noise_sd = p.sigma.cwiseSqrt();
    auto draw_eps = [&]() {
        VectorXd e(M);
        for (int i = 0; i < M; ++i) e(i) = noise_sd(i) * rng.gaussian();
        return e;
    };

    VectorXd z = p.mu0;
    if (K > 0) z += p.C * inputs->row(0).transpose();
    if (!deterministic) z += draw_eps();

    for (int t = 0; t < T; ++t) {
        if (!z.allFinite() || z.cwiseAbs().maxCoeff() > divergence_threshold) {
            out.unstable = true;
            out.values.conservativeResize(t, M);
            if (out.inputs) out.inputs = out.inputs->topRows(t);
            return out;
        }
        out.values.row(t) = z.transpose();
        if (t + 1 < T) {
            VectorXd s;
            const VectorXd* s_ptr = nullptr;
            if (K > 0) {
                s = inputs->row(t + 1).transpose();
                s_ptr = &s;
            }
            VectorXd eps;
            const VectorXd* eps_ptr = nullptr;
            if (!deterministic) {
                eps = draw_eps();
                eps_ptr = &eps;
            }
            z = latent_step(p, z, s_ptr, eps_ptr);
        }
    }
    return out;
}

Trajectory observe_linear(const ObsParamsLinear& obs, const Trajectory& latent, Nonlinearity phi,
                          std::optional<std::uint64_t> seed) {
    obs.validate(latent.dim());
    latent.validate();
    const int T = latent.T();
    const int N = obs.N();

    Trajectory out;
    out.dt = latent.dt;
    out.unstable = latent.unstable;
    out.inputs = latent.inputs;
    out.values.resize(T, N);

    MatrixXd phiz = latent.values;
    if (phi == Nonlinearity::relu) phiz = phiz.cwiseMax(0.0);
    out.values = phiz * obs.B.transpose();

    if (seed) {
        CounterRng rng(*seed, /*stream=*/2);
        const VectorXd sd = obs.gamma.cwiseSqrt();
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < N; ++i) out.values(t, i) += sd(i) * rng.gaussian();
    }
    return out;
}

}  // namespace plrnn
