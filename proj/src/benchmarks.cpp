#include "plrnn/benchmarks.hpp"

#include "plrnn/rng.hpp"

namespace plrnn {

OdeSystem lorenz_system(double s, double r, double b) {
    OdeSystem sys;
    sys.name = "lorenz";
    sys.dim = 3;
    sys.rhs = [s, r, b](const VectorXd& x) {
        VectorXd d(3);
        d(0) = s * (x(1) - x(0));
        d(1) = x(0) * (r - x(2)) - x(1);
        d(2) = x(0) * x(1) - b * x(2);
        return d;
    };
    return sys;
}

OdeSystem vdp_system(double mu, double omega) {
    OdeSystem sys;
    sys.name = "vdp";
    sys.dim = 2;
    sys.rhs = [mu, omega](const VectorXd& x) {
        VectorXd d(2);
        d(0) = x(1);
        d(1) = mu * (1.0 - x(0) * x(0)) * x(1) - omega * omega * x(0);
        return d;
    };
    return sys;
}

OdeSystem benchmark_system(const std::string& name) {
    if (name == "lorenz") return lorenz_system();
    if (name == "vdp") return vdp_system();
    fail(ErrorCode::invalid_argument, "unknown benchmark system: " + name);
}

VectorXd rk4_step(const OdeRhs& rhs, const VectorXd& x, double dt) {
    const VectorXd k1 = rhs(x);
    const VectorXd k2 = rhs(x + 0.5 * dt * k1);
    const VectorXd k3 = rhs(x + 0.5 * dt * k2);
    const VectorXd k4 = rhs(x + dt * k3);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

MatrixXd default_init_box(const std::string& system_name) {
    if (system_name == "lorenz") {
        MatrixXd box(3, 2);
        box << -10, 10, -10, 10, 0, 40;
        return box;
    }
    if (system_name == "vdp") {
        MatrixXd box(2, 2);
        box << -3, 3, -3, 3;
        return box;
    }
    fail(ErrorCode::invalid_argument, "no default init box for system: " + system_name);
}

Trajectory rk4_sample(const OdeSystem& sys, const SamplingSpec& spec) {
    require(sys.dim >= 1 && sys.rhs != nullptr, ErrorCode::invalid_argument,
            "rk4_sample: system has no rhs");
    require(spec.T >= 1, ErrorCode::invalid_argument, "rk4_sample: T must be >= 1");
    require(spec.dt > 0.0, ErrorCode::invalid_argument, "rk4_sample: dt must be positive");
    require(spec.sub_sample >= 1, ErrorCode::invalid_argument,
            "rk4_sample: sub_sample must be >= 1");
    require(spec.noise_var >= 0.0, ErrorCode::invalid_argument,
            "rk4_sample: noise_var must be nonnegative");

    CounterRng rng(spec.seed, /*stream=*/3);
    const double noise_sd = std::sqrt(spec.noise_var);

    VectorXd x;
    int burn = 0;
    if (spec.initial) {
        require(spec.initial->size() == sys.dim, ErrorCode::dimension_mismatch,
                "rk4_sample: initial state has wrong dimension");
        x = *spec.initial;
    } else {
        MatrixXd box = spec.init_box ? *spec.init_box : default_init_box(sys.name);
        require(box.rows() == sys.dim && box.cols() == 2, ErrorCode::dimension_mismatch,
                "rk4_sample: init box must be dim x 2");
        x.resize(sys.dim);
        for (int i = 0; i < sys.dim; ++i) x(i) = rng.uniform(box(i, 0), box(i, 1));
        burn = spec.burn_in;
    }

    auto advance = [&](VectorXd& state) {
        for (int k = 0; k < spec.sub_sample; ++k) state = rk4_step(sys.rhs, state, spec.dt);
        if (noise_sd > 0.0)
            for (int i = 0; i < sys.dim; ++i) state(i) += noise_sd * rng.gaussian();
    };

    for (int t = 0; t < burn; ++t) advance(x);

    Trajectory out;
    out.dt = spec.dt * spec.sub_sample;
    out.values.resize(spec.T, sys.dim);
    out.values.row(0) = x.transpose();
    for (int t = 1; t < spec.T; ++t) {
        advance(x);
        if (!x.allFinite() || x.cwiseAbs().maxCoeff() > kDivergenceThreshold) {
            out.unstable = true;
            out.values.conservativeResize(t, sys.dim);
            return out;
        }
        out.values.row(t) = x.transpose();
    }
    return out;
}

std::pair<Trajectory, StandardizeTransform> standardize(const Trajectory& traj) {
    traj.validate();
    const int T = traj.T();
    const int D = traj.dim();
    StandardizeTransform tf;
    tf.mean = traj.values.colwise().mean();
    tf.scale.resize(D);
    for (int j = 0; j < D; ++j) {
        const double var =
            (traj.values.col(j).array() - tf.mean(j)).square().sum() / static_cast<double>(T);
        tf.scale(j) = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return {apply_transform(tf, traj), tf};
}

Trajectory apply_transform(const StandardizeTransform& tf, const Trajectory& traj) {
    require(tf.mean.size() == traj.dim() && tf.scale.size() == traj.dim(),
            ErrorCode::dimension_mismatch, "transform dimension != trajectory dimension");
    Trajectory out = traj;
    out.values = ((traj.values.rowwise() - tf.mean.transpose()).array().rowwise() /
                  tf.scale.transpose().array())
                     .matrix();
    return out;
}

Trajectory invert_transform(const StandardizeTransform& tf, const Trajectory& traj) {
    require(tf.mean.size() == traj.dim() && tf.scale.size() == traj.dim(),
            ErrorCode::dimension_mismatch, "transform dimension != trajectory dimension");
    Trajectory out = traj;
    out.values = ((traj.values.array().rowwise() * tf.scale.transpose().array()).rowwise() +
                  tf.mean.transpose().array())
                     .matrix();
    return out;
}

}  // namespace plrnn
