#pragma once

#include "plrnn/types.hpp"

#include <functional>
#include <string>

namespace plrnn {

// Right-hand side of an autonomous ODE.
using OdeRhs = std::function<VectorXd(const VectorXd&)>;

struct OdeSystem {
    std::string name;
    int dim = 0;
    OdeRhs rhs;
};

// Lorenz system: dx = s(y-x), dy = x(r-z)-y, dz = xy-bz.
OdeSystem lorenz_system(double s = 10.0, double r = 28.0, double b = 8.0 / 3.0);

// Van der Pol oscillator: dx = y, dy = mu(1-x^2)y - omega^2 x.
OdeSystem vdp_system(double mu = 2.0, double omega = 1.0);

OdeSystem benchmark_system(const std::string& name);

// Classical fourth-order Runge-Kutta step.
VectorXd rk4_step(const OdeRhs& rhs, const VectorXd& x, double dt);

struct SamplingSpec {
    int T = 1000;              // emitted samples
    double dt = 0.01;          // integrator step
    int sub_sample = 10;       // integrator steps per emitted sample
    double noise_var = 0.0;    // discrete process noise variance per coordinate
    std::uint64_t seed = 0;
    int burn_in = 500;         // emitted-rate samples discarded after a random start
    std::optional<VectorXd> initial;  // explicit start; disables burn-in
    std::optional<MatrixXd> init_box; // dim x 2 [lo, hi] for random starts
};

// Integrate and sub-sample the system. Noise is injected into the running
// state after each emitted sample, so it propagates like discrete-time
// process noise. Emitted dt is spec.dt * spec.sub_sample.
Trajectory rk4_sample(const OdeSystem& sys, const SamplingSpec& spec);

// Default random-start boxes used by the benchmark suites.
MatrixXd default_init_box(const std::string& system_name);

struct StandardizeTransform {
    VectorXd mean;
    VectorXd scale;  // per-column standard deviation
};

// Z-scores each column; columns with zero variance get scale 1.
std::pair<Trajectory, StandardizeTransform> standardize(const Trajectory& traj);

Trajectory apply_transform(const StandardizeTransform& tf, const Trajectory& traj);
Trajectory invert_transform(const StandardizeTransform& tf, const Trajectory& traj);

}  // namespace plrnn
