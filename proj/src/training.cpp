#include "plrnn/training.hpp"

#include "plrnn/rng.hpp"
#include "plrnn/simulate.hpp"

#include <chrono>

namespace plrnn {

void AnnealConfig::validate() const {
    require(M >= 1, ErrorCode::invalid_argument, "AnnealConfig: M must be >= 1");
    require(!sigma_schedule.empty(), ErrorCode::invalid_argument,
            "AnnealConfig: sigma schedule is empty");
    for (size_t i = 0; i < sigma_schedule.size(); ++i) {
        require(sigma_schedule[i] > 0.0, ErrorCode::invalid_argument,
                "AnnealConfig: sigma scales must be positive");
        require(i == 0 || sigma_schedule[i] < sigma_schedule[i - 1],
                ErrorCode::invalid_argument, "AnnealConfig: sigma schedule must decrease");
    }
    require(em_max_iterations >= 1, ErrorCode::invalid_argument,
            "AnnealConfig: EM iteration cap must be >= 1");
    require(random_init_sigma > 0.0, ErrorCode::invalid_argument,
            "AnnealConfig: baseline sigma must be positive");
    if (bold_head) hrf.validate();
}

ModelBundle draw_initial_params(int M, int N, int K, int P, std::uint64_t seed,
                                const MatrixXd* X, bool bold, const HrfKernel* hrf,
                                Nonlinearity phi) {
    require(M >= 1 && N >= 1 && K >= 0 && P >= 0, ErrorCode::invalid_argument,
            "draw_initial_params: bad dimensions");
    CounterRng rng(seed, /*stream=*/6);

    ModelBundle m;
    PlrnnParams& p = m.latent;
    p.A = MatrixXd::Zero(M, M);
    p.W = MatrixXd::Zero(M, M);
    p.h.resize(M);
    p.mu0.resize(M);
    p.C.resize(M, K);
    p.sigma = VectorXd::Ones(M);
    p.phi = phi;
    const double wsd = 0.1 / std::sqrt(static_cast<double>(M));
    for (int i = 0; i < M; ++i) {
        p.A(i, i) = rng.uniform(0.3, 0.9);
        p.h(i) = 0.1 * rng.gaussian();
        p.mu0(i) = 0.1 * rng.gaussian();
        for (int j = 0; j < M; ++j)
            if (j != i) p.W(i, j) = wsd * rng.gaussian();
        for (int k = 0; k < K; ++k) p.C(i, k) = 0.5 * rng.gaussian();
    }
    // bias toward stable models: contract the linearized map when needed
    const Eigen::VectorXcd ev = (p.A + p.W).eigenvalues();
    double rho = 0.0;
    for (int i = 0; i < M; ++i) rho = std::max(rho, std::abs(ev(i)));
    if (rho >= 1.0) {
        const double scale = 0.95 / rho;
        p.A *= scale;
        p.W *= scale;
    }

    MatrixXd B(N, M);
    bool filled = false;
    if (X != nullptr && X->rows() >= 2 && X->cols() == N) {
        // leading principal directions of the centered data
        MatrixXd Xc = *X;
        Xc.rowwise() -= X->colwise().mean();
        Eigen::JacobiSVD<MatrixXd> svd(Xc, Eigen::ComputeThinV);
        const int r = std::min<int>(static_cast<int>(svd.matrixV().cols()), M);
        if (r > 0) {
            B.setZero();
            B.leftCols(r) = svd.matrixV().leftCols(r);
            for (int j = r; j < M; ++j)
                for (int i = 0; i < N; ++i) B(i, j) = rng.gaussian();
            filled = true;
        }
    }
    if (!filled)
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < M; ++j) B(i, j) = rng.gaussian();

    if (bold) {
        ObsParamsBold obs;
        obs.B = B;
        obs.J = MatrixXd::Zero(N, P);
        obs.gamma = VectorXd::Ones(N);
        obs.hrf = hrf ? *hrf : canonical_hrf(1.0);
        m.observation = obs;
    } else {
        require(P == 0, ErrorCode::invalid_argument,
                "draw_initial_params: nuisance channels need the convolved head");
        ObsParamsLinear obs;
        obs.B = B;
        obs.gamma = VectorXd::Ones(N);
        m.observation = obs;
    }
    m.meta.seed = seed;
    m.validate();
    return m;
}

namespace {

std::string check_standardized(const MatrixXd& X) {
    for (int j = 0; j < X.cols(); ++j) {
        const double mean = X.col(j).mean();
        const double var = (X.col(j).array() - mean).square().mean();
        if (std::abs(mean) > 0.5 || var < 0.25 || var > 4.0)
            return "data does not look standardized (column " + std::to_string(j) +
                   " mean " + std::to_string(mean) + ", var " + std::to_string(var) +
                   "); fits assume roughly unit scale";
    }
    return {};
}

struct StepOutcome {
    EmResult em;
    TrainingStepLog log;
};

StepOutcome run_em_step(const std::string& name, ModelBundle model, const MatrixXd& X,
                        const MatrixXd* S, const MatrixXd* R, const AnnealConfig& cfg,
                        double sigma_scale, bool freeze_obs, const VectorXd* z_warm,
                        std::uint64_t step_seed) {
    model.latent.sigma = VectorXd::Constant(model.M(), sigma_scale);

    EmConfig em;
    em.max_iterations = cfg.em_max_iterations;
    em.tol = cfg.em_tol;
    em.ridge = cfg.ridge;
    em.freeze_sigma = true;
    em.freeze_B = freeze_obs;
    em.freeze_gamma = freeze_obs && model.is_bold();
    em.seed = step_seed;
    em.estep = cfg.estep;

    StepOutcome out{em_fit(model, X, S, R, em, z_warm), {}};
    out.log.step = name;
    out.log.q = out.em.q_trace.empty() ? 0.0 : out.em.q_trace.back();
    const VectorXd ones = VectorXd::Ones(model.M());
    out.log.q_rescaled = expected_joint_loglik(out.em.model, out.em.posterior.moments, &ones);
    out.log.em_iterations = out.em.iterations;
    return out;
}

bool probe_stability(const ModelBundle& model, int T, std::uint64_t seed) {
    // autonomous probe: external drive clamped at zero
    std::optional<MatrixXd> s;
    if (model.K() > 0) s = MatrixXd::Zero(T, model.K());
    const Trajectory z = generate_latent(model.latent, T, seed, /*deterministic=*/false, s);
    return !z.unstable;
}

VectorXd stack_state(const MatrixXd& means) {
    VectorXd z(means.rows() * means.cols());
    for (int t = 0; t < means.rows(); ++t)
        z.segment(t * means.cols(), means.cols()) = means.row(t).transpose();
    return z;
}

}  // namespace

StatePosterior reestimate_posterior_unit_sigma(const ModelBundle& model, const MatrixXd& X,
                                               const MatrixXd* S, const MatrixXd* R,
                                               const EstepConfig& cfg, const VectorXd* z_warm) {
    ModelBundle eval = model;
    eval.latent.sigma = VectorXd::Ones(model.M());
    const EstepProblem prob(eval, X, S, R);
    const MapEstimate map = estep_map(prob, z_warm, cfg);
    double log_det = 0.0;
    StatePosterior post;
    post.cov = estep_covariance(prob, map.d, cfg, &log_det);
    post.moments = compute_moments(prob, map.z, post.cov);
    post.means = post.moments.means;
    post.d = map.d;
    post.q_map = map.q;
    post.entropy =
        0.5 * (model.M() * static_cast<int>(X.rows()) * (std::log(2.0 * M_PI) + 1.0) - log_det);
    return post;
}

FitResult anneal_fit(const MatrixXd& X, const MatrixXd* S, const MatrixXd* R,
                     const AnnealConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const int N = static_cast<int>(X.cols());
    const int K = S ? static_cast<int>(S->cols()) : 0;
    const int P = R ? static_cast<int>(R->cols()) : 0;

    FitResult res;
    res.warning = check_standardized(X);

    ModelBundle model = draw_initial_params(cfg.M, N, K, P, cfg.seed, &X, cfg.bold_head,
                                            cfg.bold_head ? &cfg.hrf : nullptr,
                                            cfg.nonlinearity);
    res.model = model;

    VectorXd z_warm;
    const VectorXd* warm = nullptr;
    CounterRng seeds(cfg.seed, /*stream=*/11);
    std::vector<TrainingStepLog> logs;

    try {
        // warm-up at the first noise scale: linear dynamics, then piecewise
        ModelBundle lds = model;
        lds.latent.phi = Nonlinearity::identity;
        StepOutcome s1 = run_em_step("lds", lds, X, S, R, cfg, cfg.sigma_schedule[0],
                                     /*freeze_obs=*/false, warm, seeds.fork(1).next_u64());
        model = s1.em.model;
        model.latent.phi = cfg.nonlinearity;
        res.model = model;
        logs.push_back(s1.log);
        z_warm = stack_state(s1.em.posterior.means);
        warm = &z_warm;

        StepOutcome s2 = run_em_step("plrnn", model, X, S, R, cfg, cfg.sigma_schedule[0],
                                     /*freeze_obs=*/false, warm, seeds.fork(2).next_u64());
        model = s2.em.model;
        res.model = model;
        logs.push_back(s2.log);
        z_warm = stack_state(s2.em.posterior.means);

        for (size_t i = 1; i < cfg.sigma_schedule.size(); ++i) {
            const double scale = cfg.sigma_schedule[i];
            StepOutcome s = run_em_step("sigma_" + std::to_string(scale), model, X, S, R, cfg,
                                        scale, /*freeze_obs=*/true, warm,
                                        seeds.fork(2 + i).next_u64());
            model = s.em.model;
            res.model = model;
            logs.push_back(s.log);
            z_warm = stack_state(s.em.posterior.means);
        }

        // evaluation posterior at unit process noise
        res.posterior =
            reestimate_posterior_unit_sigma(model, X, S, R, cfg.estep, warm);
        TrainingStepLog plog;
        plog.step = "posterior";
        {
            ModelBundle eval = model;
            eval.latent.sigma = VectorXd::Ones(model.M());
            plog.q = expected_joint_loglik(eval, res.posterior.moments) + res.posterior.entropy;
            plog.q_rescaled = plog.q - res.posterior.entropy;
        }
        plog.em_iterations = 0;
        logs.push_back(plog);

        res.success = true;
    } catch (const Error& e) {
        res.error = e.what();
        res.success = false;
    }

    res.model.meta.training_log = logs;
    res.model.meta.seed = cfg.seed;
    res.stable = probe_stability(res.model, cfg.stability_probe_T, seeds.fork(99).next_u64());
    res.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

FitResult random_init_fit(const MatrixXd& X, const MatrixXd* S, const MatrixXd* R,
                          const AnnealConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const int N = static_cast<int>(X.cols());
    const int K = S ? static_cast<int>(S->cols()) : 0;
    const int P = R ? static_cast<int>(R->cols()) : 0;

    FitResult res;
    res.warning = check_standardized(X);

    ModelBundle model = draw_initial_params(cfg.M, N, K, P, cfg.seed, &X, cfg.bold_head,
                                            cfg.bold_head ? &cfg.hrf : nullptr,
                                            cfg.nonlinearity);
    res.model = model;
    CounterRng seeds(cfg.seed, /*stream=*/11);

    try {
        StepOutcome s = run_em_step("random_init", model, X, S, R, cfg, cfg.random_init_sigma,
                                    /*freeze_obs=*/false, nullptr, seeds.fork(1).next_u64());
        model = s.em.model;
        res.model = model;
        res.model.meta.training_log.push_back(s.log);
        VectorXd z_warm = stack_state(s.em.posterior.means);

        res.posterior =
            reestimate_posterior_unit_sigma(model, X, S, R, cfg.estep, &z_warm);
        TrainingStepLog plog;
        plog.step = "posterior";
        {
            ModelBundle eval = model;
            eval.latent.sigma = VectorXd::Ones(model.M());
            plog.q = expected_joint_loglik(eval, res.posterior.moments) + res.posterior.entropy;
            plog.q_rescaled = plog.q - res.posterior.entropy;
        }
        plog.em_iterations = 0;
        res.model.meta.training_log.push_back(plog);
        res.success = true;
    } catch (const Error& e) {
        res.error = e.what();
        res.success = false;
    }

    res.model.meta.seed = cfg.seed;
    res.stable = probe_stability(res.model, cfg.stability_probe_T, seeds.fork(99).next_u64());
    res.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

FitResult fit_timeseries(const MatrixXd& X, const MatrixXd* S, const MatrixXd* R,
                         const AnnealConfig& cfg) {
    return cfg.protocol == Protocol::anneal ? anneal_fit(X, S, R, cfg)
                                            : random_init_fit(X, S, R, cfg);
}

}  // namespace plrnn
