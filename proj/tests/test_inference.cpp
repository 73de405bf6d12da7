#include "doctest.h"

#include "plrnn/hrf.hpp"
#include "plrnn/inference.hpp"
#include "plrnn/simulate.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace plrnn;
using namespace plrnn::testsupport;

namespace {

struct RtsResult {
    std::vector<VectorXd> mean;          // smoothed means
    std::vector<MatrixXd> cov;           // smoothed covariances
    std::vector<MatrixXd> lag1;          // Cov(z_{t+1}, z_t | X), index t
};

// Reference Kalman filter + RTS smoother for the identity-nonlinearity model
// with a linear head. Written directly from the textbook recursions,
// independent of the banded solver.
RtsResult rts_smoother(const PlrnnParams& p, const ObsParamsLinear& obs, const MatrixXd& X,
                       const MatrixXd* S) {
    const int M = p.M();
    const int T = static_cast<int>(X.rows());
    const MatrixXd F = p.A + p.W;
    const MatrixXd Q = p.sigma.asDiagonal();
    const MatrixXd R = obs.gamma.asDiagonal();
    const MatrixXd& B = obs.B;

    auto drive = [&](int t) {
        VectorXd c = (t == 0) ? p.mu0 : p.h;
        if (S) c += p.C * S->row(t).transpose();
        return c;
    };

    std::vector<VectorXd> mf(T), mp(T);
    std::vector<MatrixXd> Pf(T), Pp(T);
    for (int t = 0; t < T; ++t) {
        if (t == 0) {
            mp[t] = drive(0);
            Pp[t] = Q;
        } else {
            mp[t] = F * mf[t - 1] + drive(t);
            Pp[t] = F * Pf[t - 1] * F.transpose() + Q;
        }
        const MatrixXd Sk = B * Pp[t] * B.transpose() + R;
        const MatrixXd K = Pp[t] * B.transpose() * Sk.ldlt().solve(
                               MatrixXd::Identity(obs.N(), obs.N()));
        mf[t] = mp[t] + K * (X.row(t).transpose() - B * mp[t]);
        Pf[t] = (MatrixXd::Identity(M, M) - K * B) * Pp[t];
    }

    RtsResult out;
    out.mean.resize(T);
    out.cov.resize(T);
    out.lag1.assign(T, MatrixXd());
    out.mean[T - 1] = mf[T - 1];
    out.cov[T - 1] = Pf[T - 1];
    for (int t = T - 2; t >= 0; --t) {
        const MatrixXd G =
            Pf[t] * F.transpose() * Pp[t + 1].ldlt().solve(MatrixXd::Identity(M, M));
        out.mean[t] = mf[t] + G * (out.mean[t + 1] - mp[t + 1]);
        out.cov[t] = Pf[t] + G * (out.cov[t + 1] - Pp[t + 1]) * G.transpose();
        out.lag1[t] = out.cov[t + 1] * G.transpose();  // Cov(z_{t+1}, z_t)
    }
    return out;
}

// Dense quadratic (P, w) of the fixed-region joint log density, recovered by
// polarization from an explicit residual evaluator. Machine precision and
// fully independent of the banded assembly.
struct DenseQuadratic {
    MatrixXd P;
    VectorXd w;
    double c = 0.0;
};

double fixed_region_logjoint(const ModelBundle& model, const MatrixXd& X, const MatrixXd* S,
                             const MatrixXd* R, const ArrayXb& d, const VectorXd& z) {
    const int M = model.M();
    const int T = static_cast<int>(X.rows());
    const PlrnnParams& p = model.latent;
    double q = 0.0;

    auto zt = [&](int t) { return z.segment(t * M, M); };
    auto drive = [&](int t) {
        VectorXd c = (t == 0) ? p.mu0 : p.h;
        if (S) c += p.C * S->row(t).transpose();
        return c;
    };
    for (int t = 0; t < T; ++t) {
        VectorXd r;
        if (t == 0) {
            r = zt(0) - drive(0);
        } else {
            VectorXd phi = zt(t - 1);
            for (int i = 0; i < M; ++i)
                if (!d((t - 1) * M + i)) phi(i) = 0.0;
            r = zt(t) - p.A * zt(t - 1) - p.W * phi - drive(t);
        }
        q += -0.5 * (r.array().square() / p.sigma.array()).sum();
    }

    MatrixXd H;
    if (model.is_bold()) {
        H = conv_matrix_dense(std::get<ObsParamsBold>(model.observation).hrf, M, T);
    } else {
        H = MatrixXd::Identity(M * T, M * T);
    }
    const VectorXd y = H * z;
    for (int t = 0; t < T; ++t) {
        VectorXd r = X.row(t).transpose() - model.B() * y.segment(t * M, M);
        if (model.P() > 0)
            r -= std::get<ObsParamsBold>(model.observation).J * R->row(t).transpose();
        q += -0.5 * (r.array().square() / model.gamma().array()).sum();
    }
    return q;
}

DenseQuadratic polarize(const ModelBundle& model, const MatrixXd& X, const MatrixXd* S,
                        const MatrixXd* R, const ArrayXb& d) {
    const int n = model.M() * static_cast<int>(X.rows());
    auto q = [&](const VectorXd& z) { return fixed_region_logjoint(model, X, S, R, d, z); };

    DenseQuadratic out;
    out.P.resize(n, n);
    out.w.resize(n);
    out.c = q(VectorXd::Zero(n));
    VectorXd qe(n);
    for (int i = 0; i < n; ++i) {
        VectorXd e = VectorXd::Zero(n);
        e(i) = 1.0;
        qe(i) = q(e);
        e(i) = 2.0;
        out.P(i, i) = -(q(e) - 2.0 * qe(i) + out.c);
        out.w(i) = qe(i) - out.c + 0.5 * out.P(i, i);
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < i; ++j) {
            VectorXd e = VectorXd::Zero(n);
            e(i) = 1.0;
            e(j) = 1.0;
            out.P(i, j) = out.P(j, i) = -(q(e) - qe(i) - qe(j) + out.c);
        }
    return out;
}

ModelBundle small_relu_bundle(int M, int N, int K, std::uint64_t seed) {
    ModelBundle m;
    m.latent = make_latent(M, K, seed, Nonlinearity::relu, 0.05);
    m.observation = make_linear_obs(N, M, seed + 1);
    return m;
}

}  // namespace

TEST_CASE("linear-gaussian posterior matches the rts smoother") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        const int M = 3, N = 4, K = 2, T = 40;
        ModelBundle model;
        model.latent = make_latent(M, K, seed, Nonlinearity::identity, 0.2);
        model.observation = make_linear_obs(N, M, seed + 50, 0.1);

        const MatrixXd S = random_inputs(T, K, seed + 100);
        const Trajectory lat = generate_latent(model.latent, T, seed + 200, false, S);
        REQUIRE(!lat.unstable);
        const Trajectory obs = observe_linear(std::get<ObsParamsLinear>(model.observation), lat,
                                              Nonlinearity::identity, seed + 300);

        const EstepProblem prob(model, obs.values, &S, nullptr);
        EstepConfig cfg;
        const MapEstimate map = estep_map(prob, nullptr, cfg);
        CHECK(map.converged);
        CHECK(map.iterations == 1);

        const RtsResult ref =
            rts_smoother(model.latent, std::get<ObsParamsLinear>(model.observation), obs.values, &S);
        double dmean = 0.0;
        for (int t = 0; t < T; ++t)
            dmean = std::max(dmean,
                             (map.z.segment(t * M, M) - ref.mean[t]).cwiseAbs().maxCoeff());
        CHECK(dmean < 1e-8);

        const BandedSpd V = estep_covariance(prob, map.d, cfg);
        double dcov = 0.0, dlag = 0.0;
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < M; ++i)
                for (int j = 0; j < M; ++j) {
                    dcov = std::max(dcov, std::abs(V.get(t * M + i, t * M + j) -
                                                   ref.cov[t](i, j)));
                    if (t + 1 < T)
                        dlag = std::max(dlag, std::abs(V.get((t + 1) * M + i, t * M + j) -
                                                       ref.lag1[t](i, j)));
                }
        CHECK(dcov < 1e-9);
        CHECK(dlag < 1e-9);
    }
}

TEST_CASE("banded precision and rhs match dense polarization, both heads") {
    const int M = 2, K = 1, T = 6;
    CounterRng rng(77, 11);

    for (bool bold : {false, true}) {
        ModelBundle model;
        model.latent = make_latent(M, K, 31, Nonlinearity::relu, 0.3);
        if (bold) {
            VectorXd taps(3);
            taps << 0.2, 0.7, 0.4;
            model.observation = make_bold_obs(3, M, 2, 32, taps, 0.2);
        } else {
            model.observation = make_linear_obs(3, M, 33, 0.2);
        }

        const MatrixXd S = random_inputs(T, K, 34);
        MatrixXd R;
        const MatrixXd* Rp = nullptr;
        if (bold) {
            R = random_inputs(T, 2, 35);
            Rp = &R;
        }
        const Trajectory lat = generate_latent(model.latent, T, 36, false, S);
        MatrixXd X(T, 3);
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < 3; ++i) X(t, i) = rng.gaussian();

        const EstepProblem prob(model, X, &S, Rp);

        ArrayXb d(M * T);
        for (int i = 0; i < M * T; ++i) d(i) = rng.uniform() < 0.6;

        const DenseQuadratic ref = polarize(model, X, &S, Rp, d);
        BandedSpd P;
        prob.assemble_precision(d, P);
        CHECK((P.dense() - ref.P).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((prob.assemble_rhs(d) - ref.w).cwiseAbs().maxCoeff() < 1e-9);

        // the piecewise objective agrees with the fixed-region evaluator in
        // the region of the evaluation point
        VectorXd z(M * T);
        for (int i = 0; i < M * T; ++i) z(i) = rng.gaussian();
        const ArrayXb dz = prob.region_of(z);
        CHECK(prob.objective(z) ==
              doctest::Approx(fixed_region_logjoint(model, X, &S, Rp, dz, z) - 0.0)
                  .epsilon(1e-12));

        // analytic gradient against central differences of the objective
        const double h = 1e-6;
        for (int i = 0; i < M * T; ++i) {
            VectorXd zp = z, zm = z;
            zp(i) += h;
            zm(i) -= h;
            const double fd = (prob.objective(zp) - prob.objective(zm)) / (2.0 * h);
            const double an = prob.gradient(z, dz)(i);
            CHECK(an == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}

TEST_CASE("map estimate matches exhaustive region enumeration") {
    int found_better = 0;
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        const int M = 2, N = 2, T = 4;  // 2^8 regions
        const ModelBundle model = small_relu_bundle(M, N, 0, 1000 + seed);
        const Trajectory lat = generate_latent(model.latent, T, seed, false);
        const Trajectory obs = observe_linear(std::get<ObsParamsLinear>(model.observation), lat,
                                              Nonlinearity::relu, seed + 1);

        const EstepProblem prob(model, obs.values, nullptr, nullptr);
        EstepConfig cfg;
        cfg.seed = seed;
        const MapEstimate map = estep_map(prob, nullptr, cfg);

        const int n = M * T;
        double best_q = -std::numeric_limits<double>::infinity();
        VectorXd best_z;
        for (int mask = 0; mask < (1 << n); ++mask) {
            ArrayXb d(n);
            for (int i = 0; i < n; ++i) d(i) = (mask >> i) & 1;
            const DenseQuadratic quad = polarize(model, obs.values, nullptr, nullptr, d);
            const VectorXd z = quad.P.ldlt().solve(quad.w);
            const double q = prob.objective(z);  // true piecewise objective
            if (q > best_q) {
                best_q = q;
                best_z = z;
            }
        }
        REQUIRE(best_z.size() == n);
        // the solver must reach the enumerated optimum
        if (best_q > map.q + 1e-9) ++found_better;
        CHECK(map.q == doctest::Approx(best_q).epsilon(1e-9));
        CHECK((map.z - best_z).cwiseAbs().maxCoeff() < 1e-6);
    }
    CHECK(found_better == 0);
}

TEST_CASE("posterior moment sums match monte carlo") {
    const int M = 2, N = 3, K = 1, T = 10;
    ModelBundle model = small_relu_bundle(M, N, K, 42);
    const MatrixXd S = random_inputs(T, K, 43);
    const Trajectory lat = generate_latent(model.latent, T, 44, false, S);
    const Trajectory obs = observe_linear(std::get<ObsParamsLinear>(model.observation), lat,
                                          Nonlinearity::relu, 45);

    const EstepProblem prob(model, obs.values, &S, nullptr);
    EstepConfig cfg;
    const MapEstimate map = estep_map(prob, nullptr, cfg);
    const BandedSpd V = estep_covariance(prob, map.d, cfg);
    const MomentSums ms = compute_moments(prob, map.z, V);

    // dense covariance for sampling
    BandedSpd P;
    prob.assemble_precision(map.d, P);
    const MatrixXd Vd = P.dense().inverse();
    const Eigen::LLT<MatrixXd> chol(Vd);
    REQUIRE(chol.info() == Eigen::Success);
    const MatrixXd L = chol.matrixL();

    const int n = M * T;
    const int draws = 400000;
    CounterRng rng(4242, 12);
    MatrixXd E1 = MatrixXd::Zero(M, M), E2 = MatrixXd::Zero(M, M), E3 = MatrixXd::Zero(M, M),
             E4 = MatrixXd::Zero(M, M), E5 = MatrixXd::Zero(M, M);
    VectorXd G3 = VectorXd::Zero(M);
    MatrixXd H3 = MatrixXd::Zero(M, M);
    VectorXd g(n);
    for (int s = 0; s < draws; ++s) {
        for (int i = 0; i < n; ++i) g(i) = rng.gaussian();
        const VectorXd z = map.z + L * g;
        for (int t = 1; t < T; ++t) {
            const VectorXd zp = z.segment((t - 1) * M, M);
            const VectorXd zc = z.segment(t * M, M);
            const VectorXd ph = zp.cwiseMax(0.0);
            E1 += ph * ph.transpose();
            E2 += zc * zp.transpose();
            E3 += zp * zp.transpose();
            E4 += ph * zp.transpose();
            E5 += zc * ph.transpose();
            G3 += ph;
        }
        for (int t = 0; t < T; ++t) {
            const VectorXd zc = z.segment(t * M, M);
            H3 += zc * zc.transpose();  // linear head: y = z
        }
    }
    const double inv = 1.0 / draws;
    const double tol = 6e-3;  // MC noise at 400k draws
    auto close = [&](const MatrixXd& a, const MatrixXd& b) {
        return (a - b * inv).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff() * inv);
    };
    CHECK(close(ms.E1, E1) < tol);
    CHECK(close(ms.E2, E2) < tol);
    CHECK(close(ms.E3, E3) < tol);
    CHECK(close(ms.E4, E4) < tol);
    CHECK(close(ms.E5, E5) < tol);
    CHECK(close(ms.H3, H3) < tol);
    CHECK((ms.G3 - G3 * inv).cwiseAbs().maxCoeff() < tol);
}

TEST_CASE("bold moment sums use the convolved covariance window") {
    const int M = 2, N = 3, K = 0, P = 1, T = 8;
    ModelBundle model;
    model.latent = make_latent(M, K, 420, Nonlinearity::relu, 0.2);
    VectorXd taps(3);
    taps << 0.25, 0.9, 0.35;
    model.observation = make_bold_obs(N, M, P, 421, taps, 0.15);

    const MatrixXd R = random_inputs(T, P, 422);
    const Trajectory lat = generate_latent(model.latent, T, 423, false);
    const Trajectory obs =
        observe_bold(std::get<ObsParamsBold>(model.observation), lat, R, 424);

    const EstepProblem prob(model, obs.values, nullptr, &R);
    EstepConfig cfg;
    const MapEstimate map = estep_map(prob, nullptr, cfg);
    const BandedSpd V = estep_covariance(prob, map.d, cfg);
    const MomentSums ms = compute_moments(prob, map.z, V);

    // reference H3 from the dense covariance and dense convolution matrix
    BandedSpd Pm;
    prob.assemble_precision(map.d, Pm);
    const MatrixXd Vd = Pm.dense().inverse();
    const MatrixXd H = conv_matrix_dense(std::get<ObsParamsBold>(model.observation).hrf, M, T);
    const MatrixXd HV = H * Vd * H.transpose();
    const VectorXd y = H * map.z;
    MatrixXd H3 = MatrixXd::Zero(M, M);
    for (int t = 0; t < T; ++t) {
        H3 += y.segment(t * M, M) * y.segment(t * M, M).transpose();
        H3 += HV.block(t * M, t * M, M, M);
    }
    CHECK((ms.H3 - H3).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("latent m step is a constrained maximizer of the surrogate") {
    const int M = 3, N = 4, K = 2, T = 60;
    ModelBundle model = small_relu_bundle(M, N, K, 7);
    const MatrixXd S = random_inputs(T, K, 8);
    const Trajectory lat = generate_latent(model.latent, T, 9, false, S);
    const Trajectory obs = observe_linear(std::get<ObsParamsLinear>(model.observation), lat,
                                          Nonlinearity::relu, 10);

    const EstepProblem prob(model, obs.values, &S, nullptr);
    EstepConfig cfg;
    const MapEstimate map = estep_map(prob, nullptr, cfg);
    const BandedSpd V = estep_covariance(prob, map.d, cfg);
    const MomentSums ms = compute_moments(prob, map.z, V);

    MstepOptions opt;
    opt.update_sigma = true;
    ModelBundle updated = model;
    updated.latent = mstep_latent(model.latent, ms, opt);
    mstep_observation(updated, ms, opt);
    updated.validate();  // structural zeros survive the update

    const double q0 = expected_joint_loglik(updated, ms);

    // no random perturbation of the free parameters may improve the surrogate
    CounterRng rng(99, 13);
    for (int trial = 0; trial < 300; ++trial) {
        ModelBundle pert = updated;
        const double eps = 1e-3;
        for (int i = 0; i < M; ++i) {
            pert.latent.A(i, i) += eps * rng.gaussian();
            pert.latent.h(i) += eps * rng.gaussian();
            pert.latent.mu0(i) += eps * rng.gaussian();
            pert.latent.sigma(i) = std::max(pert.latent.sigma(i) + eps * 0.01 * rng.gaussian(), 1e-10);
            for (int j = 0; j < M; ++j)
                if (j != i) pert.latent.W(i, j) += eps * rng.gaussian();
            for (int k = 0; k < K; ++k) pert.latent.C(i, k) += eps * rng.gaussian();
        }
        auto& po = std::get<ObsParamsLinear>(pert.observation);
        for (int i = 0; i < N; ++i) {
            po.gamma(i) = std::max(po.gamma(i) + eps * 0.01 * rng.gaussian(), 1e-10);
            for (int j = 0; j < M; ++j) po.B(i, j) += eps * rng.gaussian();
        }
        CHECK(expected_joint_loglik(pert, ms) <= q0 + 1e-10);
    }

    // each free coordinate sits at a local maximum along its own axis
    auto fd_check = [&](auto&& setter) {
        const double h = 1e-5;
        ModelBundle p1 = updated, p2 = updated;
        setter(p1, h);
        setter(p2, -h);
        const double tiny = 1e-10 * (std::abs(q0) + 1.0);
        CHECK(expected_joint_loglik(p1, ms) <= q0 + tiny);
        CHECK(expected_joint_loglik(p2, ms) <= q0 + tiny);
    };
    fd_check([](ModelBundle& m, double d) { m.latent.A(1, 1) += d; });
    fd_check([](ModelBundle& m, double d) { m.latent.W(0, 2) += d; });
    fd_check([](ModelBundle& m, double d) { m.latent.h(2) += d; });
    fd_check([](ModelBundle& m, double d) { m.latent.C(1, 0) += d; });
    fd_check([](ModelBundle& m, double d) { m.latent.mu0(0) += d; });
    fd_check([](ModelBundle& m, double d) { std::get<ObsParamsLinear>(m.observation).B(2, 1) += d; });
    fd_check([](ModelBundle& m, double d) { m.latent.sigma(0) += d; });
    fd_check([](ModelBundle& m, double d) { std::get<ObsParamsLinear>(m.observation).gamma(1) += d; });
}

TEST_CASE("frozen parameters stay frozen across em") {
    const int M = 2, N = 3, T = 50;
    ModelBundle model = small_relu_bundle(M, N, 0, 70);
    const Trajectory lat = generate_latent(model.latent, T, 71, false);
    const Trajectory obs = observe_linear(std::get<ObsParamsLinear>(model.observation), lat,
                                          Nonlinearity::relu, 72);

    EmConfig cfg;
    cfg.max_iterations = 5;
    cfg.freeze_B = true;
    cfg.freeze_gamma = true;
    cfg.freeze_sigma = true;
    const EmResult res = em_fit(model, obs.values, nullptr, nullptr, cfg);
    CHECK((res.model.B() - model.B()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((res.model.gamma() - model.gamma()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((res.model.latent.sigma - model.latent.sigma).cwiseAbs().maxCoeff() == 0.0);
    CHECK((res.model.latent.A - model.latent.A).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("em surrogate trace is monotone on simulated data") {
    for (std::uint64_t seed : {5ull, 6ull, 7ull}) {
        const int M = 2, N = 3, T = 150;
        ModelBundle gen = small_relu_bundle(M, N, 0, 600 + seed);
        const Trajectory lat = generate_latent(gen.latent, T, seed, false);
        const Trajectory obs = observe_linear(std::get<ObsParamsLinear>(gen.observation), lat,
                                              Nonlinearity::relu, seed + 1);

        ModelBundle init = small_relu_bundle(M, N, 0, 900 + seed);
        init.latent.sigma.setConstant(1e-3);
        EmConfig cfg;
        cfg.max_iterations = 40;
        cfg.freeze_sigma = true;
        cfg.seed = seed;
        const EmResult res = em_fit(init, obs.values, nullptr, nullptr, cfg);
        REQUIRE(res.q_trace.size() >= 2);
        for (size_t i = 1; i < res.q_trace.size(); ++i) {
            const double drop = res.q_trace[i - 1] - res.q_trace[i];
            CHECK(drop <= 1e-6 * (std::abs(res.q_trace[i - 1]) + 1.0));
        }
    }
}

TEST_CASE("noise-free bold observations pin the map path to the truth") {
    const int M = 2, N = 2, T = 30;
    PlrnnParams p = make_latent(M, 0, 55, Nonlinearity::relu, 0.3);
    const Trajectory lat = generate_latent(p, T, 56, false);

    ObsParamsBold obs;
    obs.B = MatrixXd::Identity(N, M) + 0.1 * MatrixXd::Ones(N, M);
    obs.J.resize(N, 0);
    obs.gamma = VectorXd::Constant(N, 1e-8);
    obs.hrf.tr = 1.0;
    obs.hrf.taps.resize(2);
    obs.hrf.taps << 0.3, 1.0;

    const Trajectory x = observe_bold(obs, lat, std::nullopt, std::nullopt);

    ModelBundle model;
    model.latent = p;
    model.observation = obs;
    const EstepProblem prob(model, x.values, nullptr, nullptr);
    EstepConfig cfg;
    const MapEstimate map = estep_map(prob, nullptr, cfg);
    double dmax = 0.0;
    for (int t = 0; t < T; ++t)
        dmax = std::max(
            dmax, (map.z.segment(t * M, M) - lat.values.row(t).transpose()).cwiseAbs().maxCoeff());
    CHECK(dmax < 1e-3);
}
