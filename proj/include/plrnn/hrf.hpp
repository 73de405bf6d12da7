#pragma once

#include "plrnn/types.hpp"

#include <optional>

namespace plrnn {

// Canonical double-gamma response sampled at tr seconds: peak at 6 s
// (dispersion 1), undershoot at 16 s (dispersion 1) weighted 1/6,
// peak-normalized to 1. taps[i] is the response at i*tr seconds.
HrfKernel canonical_hrf(double tr, double duration_s = 32.0);

HrfKernel delta_kernel();

// Windowed convolution used by the BOLD head. Row t sums over the window
// tau = max(1, t-n+1)..t with the last kernel tap applied to the current
// sample:
//   out_t = sum_{l=0}^{min(n-1, t-1)} taps[n-1-l] * z_{t-l}.
// Equivalent to multiplying vec(z) by the banded lower-triangular
// convolution matrix (see conv_matrix_dense).
MatrixXd convolve_window(const HrfKernel& k, const MatrixXd& z);

// Explicit MT x MT convolution matrix; each scalar kernel entry expands to
// an M x M diagonal block. Quadratic in T, intended for small instances and
// cross-checks; the solver path never materializes it.
MatrixXd conv_matrix_dense(const HrfKernel& k, int M, int T);

// x_t = B (hrf * z)_t + J r_t + eta_t. Pass nullopt seed for noise-free
// observations. nuisance must be T x P when J has P > 0 columns.
Trajectory observe_bold(const ObsParamsBold& obs, const Trajectory& latent,
                        const std::optional<MatrixXd>& nuisance,
                        std::optional<std::uint64_t> seed);

}  // namespace plrnn
