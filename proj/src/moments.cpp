#include "plrnn/gauss.hpp"
#include "plrnn/inference.hpp"

#include <cmath>

namespace plrnn {

MomentSums compute_moments(const EstepProblem& prob, const VectorXd& z_map, const BandedSpd& V) {
    const int M = prob.M();
    const int T = prob.T();
    require(z_map.size() == M * T, ErrorCode::dimension_mismatch, "z_map size != MT");
    require(V.n() == M * T, ErrorCode::dimension_mismatch, "covariance size != MT");
    const ModelBundle& model = prob.model();
    const int K = static_cast<int>(model.latent.C.cols());
    const int P = prob.nuisance() ? static_cast<int>(prob.nuisance()->cols()) : 0;
    const int N = static_cast<int>(prob.data().cols());
    const bool relu = prob.relu();

    MomentSums s;
    s.M = M;
    s.K = K;
    s.P = P;
    s.T = T;
    s.E1.setZero(M, M);
    s.E2.setZero(M, M);
    s.E3.setZero(M, M);
    s.E4.setZero(M, M);
    s.E5.setZero(M, M);
    s.G1_lag.setZero(M);
    s.G1_cur.setZero(M);
    s.G3.setZero(M);
    s.Ezz.setZero(M, M);
    s.F3.setZero(K, M);
    s.F4.setZero(K, M);
    s.F5.setZero(M, K);
    s.F6.setZero(K, K);
    s.G2.setZero(K);

    s.means.resize(T, M);
    s.var_diag.resize(T, M);
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < M; ++i) {
            s.means(t, i) = z_map(t * M + i);
            s.var_diag(t, i) = std::max(V.get(t * M + i, t * M + i), 0.0);
        }

    auto cov_block = [&](int t, int tp) {
        MatrixXd S(M, M);
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < M; ++j) S(i, j) = V.get(t * M + i, tp * M + j);
        return S;
    };

    s.m1 = s.means.row(0).transpose();
    s.V1 = cov_block(0, 0);
    if (K > 0) s.s1 = prob.inputs()->row(0).transpose();

    MatrixXd Sp = s.V1;  // same-time covariance at t-1, carried forward
    for (int t = 1; t < T; ++t) {
        const VectorXd mp = s.means.row(t - 1).transpose();
        const VectorXd mc = s.means.row(t).transpose();
        const MatrixXd Sc = cov_block(t, t);
        const MatrixXd Scp = cov_block(t, t - 1);  // Cov(z_t, z_{t-1})

        s.E3 += Sp + mp * mp.transpose();
        s.E2 += Scp + mc * mp.transpose();
        s.Ezz += Sc + mc * mc.transpose();
        s.G1_lag += mp;
        s.G1_cur += mc;

        VectorXd ephi(M);
        if (relu) {
            for (int j = 0; j < M; ++j) ephi(j) = rect_mean(mp(j), Sp(j, j));
            for (int i = 0; i < M; ++i)
                for (int j = 0; j < M; ++j) {
                    // E4(i,j) = E[phi(z_{t-1,i}) z_{t-1,j}]
                    s.E4(i, j) += (i == j)
                                      ? rect_sqmean(mp(i), Sp(i, i))
                                      : rect_cross_zphi(mp(j), Sp(j, j), mp(i), Sp(i, i),
                                                        Sp(j, i));
                    // E1(i,j) = E[phi(z_{t-1,i}) phi(z_{t-1,j})]
                    s.E1(i, j) += (i == j)
                                      ? rect_sqmean(mp(i), Sp(i, i))
                                      : rect_cross_phiphi(mp(i), Sp(i, i), mp(j), Sp(j, j),
                                                          Sp(i, j));
                    // E5(i,j) = E[z_{t,i} phi(z_{t-1,j})]
                    s.E5(i, j) += rect_cross_zphi(mc(i), Sc(i, i), mp(j), Sp(j, j), Scp(i, j));
                }
        } else {
            ephi = mp;
            s.E4 += Sp + mp * mp.transpose();
            s.E1 += Sp + mp * mp.transpose();
            s.E5 += Scp + mc * mp.transpose();
        }
        s.G3 += ephi;

        if (K > 0) {
            const VectorXd st = prob.inputs()->row(t).transpose();
            s.F3 += st * mp.transpose();
            s.F4 += st * ephi.transpose();
            s.F5 += mc * st.transpose();
            s.F6 += st * st.transpose();
            s.G2 += st;
        }
        Sp = Sc;
    }

    // Observation-side sums over all T steps. y is the convolved latent mean
    // path; its covariance blocks come from the kernel window.
    const MatrixXd ybar = prob.convolve(s.means);  // T x M
    const VectorXd& taps = prob.taps();
    const int ntaps = static_cast<int>(taps.size());

    s.F2.setZero(N, N);
    s.H1.setZero(N, M);
    s.H2.setZero(P, M);
    s.H3.setZero(M, M);
    s.F7.setZero(N, P);
    s.F8.setZero(P, P);
    for (int t = 0; t < T; ++t) {
        const VectorXd xt = prob.data().row(t).transpose();
        const VectorXd yt = ybar.row(t).transpose();
        s.F2 += xt * xt.transpose();
        s.H1 += xt * yt.transpose();
        s.H3 += yt * yt.transpose();
        const int lmax = std::min(ntaps - 1, t);
        for (int l = 0; l <= lmax; ++l)
            for (int lp = 0; lp <= lmax; ++lp) {
                const double kk = taps(ntaps - 1 - l) * taps(ntaps - 1 - lp);
                if (kk == 0.0) continue;
                s.H3 += kk * cov_block(t - l, t - lp);
            }
        if (P > 0) {
            const VectorXd rt = prob.nuisance()->row(t).transpose();
            s.H2 += rt * yt.transpose();
            s.F7 += xt * rt.transpose();
            s.F8 += rt * rt.transpose();
        }
    }
    return s;
}

MatrixXd latent_gram(const MomentSums& s) {
    const int M = s.M;
    const int K = s.K;
    const int D = 2 * M + 1 + K;
    MatrixXd G(D, D);
    G.block(0, 0, M, M) = s.E3;
    G.block(0, M, M, M) = s.E4.transpose();
    G.block(M, 0, M, M) = s.E4;
    G.block(M, M, M, M) = s.E1;
    G.block(0, 2 * M, M, 1) = s.G1_lag;
    G.block(2 * M, 0, 1, M) = s.G1_lag.transpose();
    G.block(M, 2 * M, M, 1) = s.G3;
    G.block(2 * M, M, 1, M) = s.G3.transpose();
    G(2 * M, 2 * M) = static_cast<double>(s.T - 1);
    if (K > 0) {
        G.block(0, 2 * M + 1, M, K) = s.F3.transpose();
        G.block(2 * M + 1, 0, K, M) = s.F3;
        G.block(M, 2 * M + 1, M, K) = s.F4.transpose();
        G.block(2 * M + 1, M, K, M) = s.F4;
        G.block(2 * M, 2 * M + 1, 1, K) = s.G2.transpose();
        G.block(2 * M + 1, 2 * M, K, 1) = s.G2;
        G.block(2 * M + 1, 2 * M + 1, K, K) = s.F6;
    }
    return G;
}

MatrixXd latent_cross(const MomentSums& s) {
    const int M = s.M;
    const int K = s.K;
    MatrixXd C(M, 2 * M + 1 + K);
    C.block(0, 0, M, M) = s.E2;
    C.block(0, M, M, M) = s.E5;
    C.block(0, 2 * M, M, 1) = s.G1_cur;
    if (K > 0) C.block(0, 2 * M + 1, M, K) = s.F5;
    return C;
}

namespace {

// Ridge-escalating symmetric solve of G X' = C' for X (rows of C regressed
// on G). Throws once the escalation cap is passed.
MatrixXd solve_gram(const MatrixXd& G, const MatrixXd& C, double ridge) {
    double lambda = ridge;
    for (;;) {
        MatrixXd Greg = G;
        if (lambda > 0.0) Greg.diagonal().array() += lambda;
        Eigen::LDLT<MatrixXd> ldlt(Greg);
        if (ldlt.info() == Eigen::Success) {
            MatrixXd X = ldlt.solve(C.transpose()).transpose();
            if (X.allFinite()) return X;
        }
        if (lambda >= 1e-2) break;
        lambda = std::max(lambda * 10.0, 1e-10);
    }
    fail(ErrorCode::singular_system, "normal equations singular after ridge escalation");
}

}  // namespace

PlrnnParams mstep_latent(const PlrnnParams& current, const MomentSums& s,
                         const MstepOptions& opt) {
    const int M = s.M;
    const int K = s.K;
    require(current.M() == M && current.K() == K, ErrorCode::dimension_mismatch,
            "moment sums do not match parameter shapes");
    const MatrixXd G = latent_gram(s);
    const MatrixXd C = latent_cross(s);

    PlrnnParams out = current;
    out.A.setZero(M, M);
    out.W.setZero(M, M);
    out.h.setZero(M);
    if (K > 0) out.C.setZero(M, K);

    VectorXd resid = VectorXd::Zero(M);
    for (int j = 0; j < M; ++j) {
        // Row j regresses on its own lagged unit, every other unit's ramp,
        // the bias, and the inputs. Diagonal-A/zero-diagonal-W structure is
        // imposed by the column selection.
        std::vector<int> idx;
        idx.reserve(M + 1 + K);
        idx.push_back(j);
        for (int i = 0; i < M; ++i)
            if (i != j) idx.push_back(M + i);
        idx.push_back(2 * M);
        for (int k = 0; k < K; ++k) idx.push_back(2 * M + 1 + k);
        const int Dj = static_cast<int>(idx.size());

        MatrixXd Gs(Dj, Dj);
        VectorXd cs(Dj);
        for (int a = 0; a < Dj; ++a) {
            cs(a) = C(j, idx[a]);
            for (int b = 0; b < Dj; ++b) Gs(a, b) = G(idx[a], idx[b]);
        }
        const VectorXd x = solve_gram(Gs, cs.transpose(), opt.ridge).transpose();

        out.A(j, j) = x(0);
        int slot = 1;
        for (int i = 0; i < M; ++i)
            if (i != j) out.W(j, i) = x(slot++);
        out.h(j) = x(slot++);
        for (int k = 0; k < K; ++k) out.C(j, k) = x(slot++);

        resid(j) = s.Ezz(j, j) - 2.0 * x.dot(cs) + x.dot(Gs * x);
    }

    out.mu0 = s.m1;
    if (K > 0) out.mu0 -= out.C * s.s1;

    if (opt.update_sigma) {
        for (int j = 0; j < M; ++j)
            out.sigma(j) = std::max((s.V1(j, j) + resid(j)) / static_cast<double>(s.T), 1e-12);
    }
    return out;
}

void mstep_observation(ModelBundle& model, const MomentSums& s, const MstepOptions& opt) {
    const int M = s.M;
    const int P = s.P;
    const int N = static_cast<int>(s.F2.rows());
    require(model.M() == M && model.P() == P && model.N() == N,
            ErrorCode::dimension_mismatch, "moment sums do not match model shapes");

    MatrixXd Gobs(M + P, M + P);
    Gobs.block(0, 0, M, M) = s.H3;
    if (P > 0) {
        Gobs.block(0, M, M, P) = s.H2.transpose();
        Gobs.block(M, 0, P, M) = s.H2;
        Gobs.block(M, M, P, P) = s.F8;
    }
    MatrixXd rhs(N, M + P);
    rhs.block(0, 0, N, M) = s.H1;
    if (P > 0) rhs.block(0, M, N, P) = s.F7;

    MatrixXd Y(N, M + P);
    if (opt.update_B) {
        Y = solve_gram(Gobs, rhs, opt.ridge);
        if (model.is_bold()) {
            auto& obs = std::get<ObsParamsBold>(model.observation);
            obs.B = Y.block(0, 0, N, M);
            obs.J = Y.block(0, M, N, P);
        } else {
            std::get<ObsParamsLinear>(model.observation).B = Y;
        }
    } else {
        Y.block(0, 0, N, M) = model.B();
        if (P > 0) Y.block(0, M, N, P) = std::get<ObsParamsBold>(model.observation).J;
    }

    if (opt.update_gamma) {
        const MatrixXd R =
            s.F2 - Y * rhs.transpose() - rhs * Y.transpose() + Y * Gobs * Y.transpose();
        VectorXd gamma(N);
        for (int i = 0; i < N; ++i)
            gamma(i) = std::max(R(i, i) / static_cast<double>(s.T), 1e-12);
        if (model.is_bold())
            std::get<ObsParamsBold>(model.observation).gamma = gamma;
        else
            std::get<ObsParamsLinear>(model.observation).gamma = gamma;
    }
}

double expected_joint_loglik(const ModelBundle& model, const MomentSums& s,
                             const VectorXd* sigma_override) {
    const int M = s.M;
    const int K = s.K;
    const int P = s.P;
    const int N = static_cast<int>(s.F2.rows());
    const PlrnnParams& lat = model.latent;

    MatrixXd L(M, 2 * M + 1 + K);
    L.block(0, 0, M, M) = lat.A;
    L.block(0, M, M, M) = lat.W;
    L.block(0, 2 * M, M, 1) = lat.h;
    if (K > 0) L.block(0, 2 * M + 1, M, K) = lat.C;

    const MatrixXd G = latent_gram(s);
    const MatrixXd C = latent_cross(s);
    const MatrixXd Rdyn = s.Ezz - L * C.transpose() - C * L.transpose() + L * G * L.transpose();

    VectorXd rp = s.m1 - lat.mu0;
    if (K > 0) rp -= lat.C * s.s1;

    MatrixXd Y(N, M + P);
    Y.block(0, 0, N, M) = model.B();
    if (P > 0) Y.block(0, M, N, P) = std::get<ObsParamsBold>(model.observation).J;
    MatrixXd Gobs(M + P, M + P);
    Gobs.block(0, 0, M, M) = s.H3;
    if (P > 0) {
        Gobs.block(0, M, M, P) = s.H2.transpose();
        Gobs.block(M, 0, P, M) = s.H2;
        Gobs.block(M, M, P, P) = s.F8;
    }
    MatrixXd rhs(N, M + P);
    rhs.block(0, 0, N, M) = s.H1;
    if (P > 0) rhs.block(0, M, N, P) = s.F7;
    const MatrixXd Robs =
        s.F2 - Y * rhs.transpose() - rhs * Y.transpose() + Y * Gobs * Y.transpose();

    VectorXd sigma = sigma_override ? *sigma_override : lat.sigma;
    require(sigma.size() == M && (sigma.array() > 0.0).all(), ErrorCode::invalid_argument,
            "expected_joint_loglik needs positive sigma");
    const VectorXd& gamma = model.gamma();
    require((gamma.array() > 0.0).all(), ErrorCode::invalid_argument,
            "expected_joint_loglik needs positive gamma");

    double q = 0.0;
    for (int j = 0; j < M; ++j)
        q -= 0.5 * (s.V1(j, j) + rp(j) * rp(j) + Rdyn(j, j)) / sigma(j);
    for (int i = 0; i < N; ++i) q -= 0.5 * Robs(i, i) / gamma(i);
    q -= 0.5 * s.T * (sigma.array().log().sum() + gamma.array().log().sum());
    return q;
}

VectorXd default_state_init(const ModelBundle& model, const MatrixXd& X, const MatrixXd* R) {
    const int M = model.M();
    const int T = static_cast<int>(X.rows());
    if (model.is_bold()) {
        (void)R;
        return VectorXd::Zero(M * T);
    }
    const MatrixXd& B = model.B();
    MatrixXd BtB = B.transpose() * B;
    BtB.diagonal().array() += 0.01;
    const MatrixXd Minv = BtB.ldlt().solve(B.transpose());  // M x N
    const MatrixXd Z = X * Minv.transpose();                // T x M
    VectorXd z(M * T);
    for (int t = 0; t < T; ++t) z.segment(t * M, M) = Z.row(t).transpose();
    return z;
}

EmResult em_fit(const ModelBundle& init, const MatrixXd& X, const MatrixXd* S, const MatrixXd* R,
                const EmConfig& cfg, const VectorXd* z_init) {
    EmResult res;
    res.model = init;
    res.model.validate();

    const int M = res.model.M();
    const int T = static_cast<int>(X.rows());
    const double log2pie = std::log(2.0 * M_PI) + 1.0;

    VectorXd z_warm = z_init ? *z_init : default_state_init(res.model, X, R);

    // Posterior kept across iterations; a fresh E-step replaces it only when
    // it improves the bound under the current parameters.
    VectorXd z_cur;
    BandedSpd V_cur;
    ArrayXb d_cur;
    MomentSums mom_cur;
    double entropy_cur = 0.0, q_map_cur = 0.0;
    bool have_cur = false;

    double q_prev = 0.0;
    for (int it = 1; it <= cfg.max_iterations; ++it) {
        EstepProblem prob(res.model, X, S, R);
        EstepConfig ecfg = cfg.estep;
        ecfg.seed = cfg.seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(it));
        const MapEstimate map = estep_map(prob, &z_warm, ecfg);
        double log_det = 0.0;
        const BandedSpd V = estep_covariance(prob, map.d, ecfg, &log_det);
        const MomentSums mom = compute_moments(prob, map.z, V);
        const double entropy = 0.5 * (M * T * log2pie - log_det);

        const double elbo_new = expected_joint_loglik(res.model, mom) + entropy;
        const bool take = !have_cur ||
                          elbo_new > expected_joint_loglik(res.model, mom_cur) + entropy_cur;
        if (take) {
            z_cur = map.z;
            V_cur = V;
            d_cur = map.d;
            mom_cur = mom;
            entropy_cur = entropy;
            q_map_cur = map.q;
            have_cur = true;
        }

        MstepOptions mopt;
        mopt.ridge = cfg.ridge;
        mopt.update_B = !cfg.freeze_B;
        mopt.update_gamma = !cfg.freeze_gamma;
        mopt.update_sigma = !cfg.freeze_sigma;
        res.model.latent = mstep_latent(res.model.latent, mom_cur, mopt);
        mstep_observation(res.model, mom_cur, mopt);

        const double q = expected_joint_loglik(res.model, mom_cur) + entropy_cur;
        res.q_trace.push_back(q);
        res.iterations = it;
        z_warm = z_cur;

        if (it >= 2 && std::abs(q - q_prev) <= cfg.tol * (std::abs(q_prev) + 1e-12)) {
            res.converged = true;
            break;
        }
        q_prev = q;
    }

    res.posterior.means.resize(T, M);
    for (int t = 0; t < T; ++t)
        res.posterior.means.row(t) = z_cur.segment(t * M, M).transpose();
    res.posterior.cov = V_cur;
    res.posterior.d = d_cur;
    res.posterior.q_map = q_map_cur;
    res.posterior.entropy = entropy_cur;
    res.posterior.moments = mom_cur;
    return res;
}

}  // namespace plrnn
