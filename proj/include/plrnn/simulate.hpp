#pragma once

#include "plrnn/types.hpp"

#include <optional>

namespace plrnn {

inline VectorXd apply_phi(Nonlinearity nl, const VectorXd& z) {
    if (nl == Nonlinearity::identity) return z;
    return z.cwiseMax(0.0);
}

// One step of the latent map. s may be null when K == 0; eps may be null for
// the deterministic step.
VectorXd latent_step(const PlrnnParams& p, const VectorXd& z_prev, const VectorXd* s,
                     const VectorXd* eps);

// Free-running simulation of the latent process. z_1 is drawn from
// N(mu0 + C s_1, diag(sigma)) (or set to the mean when deterministic).
// Generation aborts early with unstable = true if any state exceeds
// divergence_threshold or goes non-finite.
Trajectory generate_latent(const PlrnnParams& p, int T, std::uint64_t seed, bool deterministic,
                           const std::optional<MatrixXd>& inputs = std::nullopt,
                           double divergence_threshold = kDivergenceThreshold);

// x_t = B phi(z_t) + eta_t; the nonlinearity is applied to the state before
// the loading. Pass nullopt seed for noise-free observations.
Trajectory observe_linear(const ObsParamsLinear& obs, const Trajectory& latent,
                          Nonlinearity phi, std::optional<std::uint64_t> seed);

}  // namespace plrnn
