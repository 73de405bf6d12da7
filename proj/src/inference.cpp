#include "plrnn/inference.hpp"

#include "plrnn/rng.hpp"
#include "plrnn/simulate.hpp"

#include <unordered_set>

namespace plrnn {

EstepProblem::EstepProblem(const ModelBundle& model, const MatrixXd& X, const MatrixXd* S,
                           const MatrixXd* R)
    : model_(model), X_(X) {
    model_.validate();
    M_ = model_.M();
    N_ = model_.N();
    K_ = model_.K();
    P_ = model_.P();
    T_ = static_cast<int>(X.rows());
    require(T_ >= 1, ErrorCode::invalid_argument, "E-step needs at least one observation");
    require(static_cast<int>(X.cols()) == N_, ErrorCode::dimension_mismatch,
            "data column count != N");
    require(X.allFinite(), ErrorCode::invalid_argument, "data contains non-finite values");
    if (K_ > 0) {
        require(S != nullptr && S->rows() == T_ && S->cols() == K_,
                ErrorCode::dimension_mismatch, "inputs must be T x K");
        Sdata_ = *S;
    }
    if (P_ > 0) {
        require(R != nullptr && R->rows() == T_ && R->cols() == P_,
                ErrorCode::dimension_mismatch, "nuisance must be T x P");
        Rdata_ = *R;
    }
    S_ = K_ > 0 ? &Sdata_ : nullptr;
    R_ = P_ > 0 ? &Rdata_ : nullptr;

    relu_ = model_.latent.phi == Nonlinearity::relu;
    bold_ = model_.is_bold();
    if (bold_) {
        taps_ = std::get<ObsParamsBold>(model_.observation).hrf.taps;
    } else {
        taps_ = VectorXd::Ones(1);
    }
    ntaps_ = static_cast<int>(taps_.size());
    kd_ = std::max(2 * M_ - 1, M_ * ntaps_ - 1);
    kd_ = std::min(kd_, M_ * T_ - 1);

    const VectorXd& sigma = model_.latent.sigma;
    const VectorXd& gamma = model_.gamma();
    require((sigma.array() > 0.0).all(), ErrorCode::invalid_argument,
            "inference requires strictly positive sigma");
    require((gamma.array() > 0.0).all(), ErrorCode::invalid_argument,
            "inference requires strictly positive gamma");
    sinv_ = sigma.cwiseInverse();
    ginv_ = gamma.cwiseInverse();
    adiag_ = model_.latent.A.diagonal();
    AtSiA_ = adiag_.array().square() * sinv_.array();
    SiA_ = sinv_.cwiseProduct(adiag_);
    const MatrixXd& W = model_.latent.W;
    WtSi_ = W.transpose() * sinv_.asDiagonal();
    WtSiA_ = WtSi_ * adiag_.asDiagonal();
    WtSiW_ = WtSi_ * W;
    SiW_ = sinv_.asDiagonal() * W;
    const MatrixXd& B = model_.B();
    const MatrixXd BtGi = B.transpose() * ginv_.asDiagonal();
    BtGiB_ = BtGi * B;

    // theta_t = h + C s_t (mu0 + C s_1 for the first block).
    auto theta = [&](int t) {
        VectorXd v = (t == 0) ? model_.latent.mu0 : model_.latent.h;
        if (K_ > 0) v += model_.latent.C * Sdata_.row(t).transpose();
        return v;
    };

    v0_.setZero(M_, T_);
    v1_.setZero(M_, T_);
    for (int t = 0; t < T_; ++t) {
        VectorXd v = sinv_.cwiseProduct(theta(t));
        if (t + 1 < T_) {
            const VectorXd th_next = theta(t + 1);
            v -= adiag_.cwiseProduct(sinv_.cwiseProduct(th_next));
            v1_.col(t) = -(WtSi_ * th_next);
        }
        v0_.col(t) = v;
    }

    // v2_t = B' Ginv (x_t - J r_t); w_base = v0 + H' v2 stacked.
    MatrixXd resid = X_;
    if (P_ > 0) resid -= Rdata_ * std::get<ObsParamsBold>(model_.observation).J.transpose();
    const MatrixXd v2 = BtGi * resid.transpose();  // M x T

    w_base_.setZero(M_ * T_);
    for (int t = 0; t < T_; ++t) {
        VectorXd acc = v0_.col(t);
        const int tmax = std::min(T_ - 1, t + ntaps_ - 1);
        for (int tau = t; tau <= tmax; ++tau)
            acc += taps_(ntaps_ - 1 - (tau - t)) * v2.col(tau);
        w_base_.segment(t * M_, M_) = acc;
    }

    // kernel_cross_(t, delta) = sum_tau k(tau,t) k(tau,t+delta), the scalar
    // factor of the observation coupling between time blocks t and t+delta.
    kernel_cross_.setZero(T_, ntaps_);
    for (int t = 0; t < T_; ++t)
        for (int delta = 0; delta < ntaps_ && t + delta < T_; ++delta) {
            double c = 0.0;
            const int tmax = std::min(T_ - 1, t + ntaps_ - 1);
            for (int tau = t + delta; tau <= tmax; ++tau)
                c += taps_(ntaps_ - 1 - (tau - t)) * taps_(ntaps_ - 1 - (tau - t - delta));
            kernel_cross_(t, delta) = c;
        }
}

void EstepProblem::assemble_precision(const ArrayXb& d, BandedSpd& P) const {
    require(d.size() == M_ * T_, ErrorCode::dimension_mismatch, "region size != MT");
    if (P.n() != M_ * T_ || P.kd() != kd_) P = BandedSpd(M_ * T_, kd_);
    P.set_zero();

    for (int t = 0; t < T_; ++t) {
        const int base = t * M_;
        const bool has_next = t + 1 < T_;
        for (int i = 0; i < M_; ++i)
            P.at(base + i, base + i) += sinv_(i) + (has_next ? AtSiA_(i) : 0.0);
        if (has_next) {
            for (int i = 0; i < M_; ++i) {
                const double di = d(base + i) ? 1.0 : 0.0;
                for (int j = 0; j <= i; ++j) {
                    const double dj = d(base + j) ? 1.0 : 0.0;
                    P.at(base + i, base + j) += di * WtSiA_(i, j) + dj * WtSiA_(j, i) +
                                                di * dj * WtSiW_(i, j);
                }
            }
            // transition block (t+1, t) = -(Sinv A + Sinv W D_t)
            for (int i = 0; i < M_; ++i) {
                const int row = base + M_ + i;
                for (int j = 0; j < M_; ++j) {
                    double val = -(SiW_(i, j) * (d(base + j) ? 1.0 : 0.0));
                    if (i == j) val -= SiA_(i);
                    if (val != 0.0) P.at(row, base + j) += val;
                }
            }
        }
        // observation couplings
        for (int delta = 0; delta < ntaps_ && t + delta < T_; ++delta) {
            const double c = kernel_cross_(t, delta);
            if (c == 0.0) continue;
            if (delta == 0) {
                for (int i = 0; i < M_; ++i)
                    for (int j = 0; j <= i; ++j) P.at(base + i, base + j) += c * BtGiB_(i, j);
            } else {
                const int rowbase = (t + delta) * M_;
                for (int i = 0; i < M_; ++i)
                    for (int j = 0; j < M_; ++j)
                        P.at(rowbase + i, base + j) += c * BtGiB_(i, j);
            }
        }
    }
}

VectorXd EstepProblem::assemble_rhs(const ArrayXb& d) const {
    VectorXd w = w_base_;
    for (int t = 0; t + 1 < T_; ++t)
        for (int i = 0; i < M_; ++i)
            if (d(t * M_ + i)) w(t * M_ + i) += v1_(i, t);
    return w;
}

MatrixXd EstepProblem::convolve(const MatrixXd& zTbyM) const {
    const int T = static_cast<int>(zTbyM.rows());
    MatrixXd out = MatrixXd::Zero(T, zTbyM.cols());
    for (int t = 0; t < T; ++t) {
        const int lmax = std::min(ntaps_ - 1, t);
        for (int l = 0; l <= lmax; ++l)
            out.row(t) += taps_(ntaps_ - 1 - l) * zTbyM.row(t - l);
    }
    return out;
}

double EstepProblem::objective(const VectorXd& z) const {
    require(z.size() == M_ * T_, ErrorCode::dimension_mismatch, "state size != MT");
    Eigen::Map<const MatrixXd> Zc(z.data(), M_, T_);
    const PlrnnParams& lat = model_.latent;

    double q = 0.0;
    {
        VectorXd r = Zc.col(0) - lat.mu0;
        if (K_ > 0) r -= lat.C * Sdata_.row(0).transpose();
        q += r.array().square().matrix().dot(sinv_);
    }
    for (int t = 1; t < T_; ++t) {
        const VectorXd zp = Zc.col(t - 1);
        VectorXd r = Zc.col(t) - adiag_.cwiseProduct(zp) - lat.W * apply_phi(lat.phi, zp) - lat.h;
        if (K_ > 0) r -= lat.C * Sdata_.row(t).transpose();
        q += r.array().square().matrix().dot(sinv_);
    }
    const MatrixXd Y = convolve(Zc.transpose());
    const MatrixXd& B = model_.B();
    for (int t = 0; t < T_; ++t) {
        VectorXd e = X_.row(t).transpose() - B * Y.row(t).transpose();
        if (P_ > 0)
            e -= std::get<ObsParamsBold>(model_.observation).J * Rdata_.row(t).transpose();
        q += e.array().square().matrix().dot(ginv_);
    }
    return -0.5 * q;
}

VectorXd EstepProblem::gradient(const VectorXd& z, const ArrayXb& d) const {
    BandedSpd P(M_ * T_, kd_);
    assemble_precision(d, P);
    return assemble_rhs(d) - P.matvec(z);
}

BandedLdlt EstepProblem::factor_with_jitter(const BandedSpd& P, const EstepConfig& cfg) const {
    try {
        return BandedLdlt(P);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::singular_system) throw;
    }
    for (double jit = cfg.jitter0; jit <= cfg.jitter_max * (1.0 + 1e-12); jit *= 10.0) {
        BandedSpd Pj = P;
        Pj.add_diagonal(jit);
        try {
            return BandedLdlt(Pj);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::singular_system) throw;
        }
    }
    fail(ErrorCode::singular_system, "state precision not positive definite after max jitter");
}

MapEstimate estep_map(const EstepProblem& prob, const VectorXd* z_init, const EstepConfig& cfg) {
    const int n = prob.size();
    VectorXd z = z_init ? *z_init : VectorXd::Zero(n);
    require(z.size() == n, ErrorCode::dimension_mismatch, "z_init size != MT");

    MapEstimate best;
    best.z = z;
    best.q = prob.objective(z);
    best.d = prob.region_of(z);

    ArrayXb d = prob.region_of(z);
    std::unordered_set<std::uint64_t> visited;
    CounterRng rng(cfg.seed, /*stream=*/5);

    auto region_hash = [](const ArrayXb& r) {
        std::uint64_t h = 0x9E3779B97F4A7C15ull;
        std::uint64_t word = 0;
        int bits = 0;
        for (int i = 0; i < r.size(); ++i) {
            word = (word << 1) | (r(i) ? 1u : 0u);
            if (++bits == 64 || i + 1 == r.size()) {
                h ^= word + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
                word = 0;
                bits = 0;
            }
        }
        return h;
    };

    BandedSpd P;
    MapEstimate result;
    for (int it = 0; it < cfg.max_region_iterations; ++it) {
        if (visited.count(region_hash(d))) {
            // Cycle guard: flip one random bit where the proposal disagrees
            // with the region of the current iterate.
            const ArrayXb zr = prob.region_of(z);
            std::vector<int> mismatched;
            for (int i = 0; i < n; ++i)
                if (d(i) != zr(i)) mismatched.push_back(i);
            for (int attempt = 0; attempt < 16; ++attempt) {
                const int idx = mismatched.empty()
                                    ? static_cast<int>(rng.below(n))
                                    : mismatched[rng.below(mismatched.size())];
                d(idx) = !d(idx);
                if (!visited.count(region_hash(d))) break;
            }
        }
        visited.insert(region_hash(d));

        prob.assemble_precision(d, P);
        const BandedLdlt ldlt = prob.factor_with_jitter(P, cfg);
        z = ldlt.solve(prob.assemble_rhs(d));
        result.iterations = it + 1;

        const double q = prob.objective(z);
        if (q > best.q) {
            best.z = z;
            best.q = q;
        }
        const ArrayXb d_new = prob.region_of(z);
        if ((d_new == d).all()) {
            result.converged = true;
            break;
        }
        d = d_new;
    }

    result.z = best.z;
    result.q = best.q;
    result.d = prob.region_of(best.z);
    return result;
}

BandedSpd estep_covariance(const EstepProblem& prob, const ArrayXb& d, const EstepConfig& cfg,
                           double* log_det) {
    BandedSpd P(prob.size(), prob.bandwidth());
    prob.assemble_precision(d, P);
    const BandedLdlt f = prob.factor_with_jitter(P, cfg);
    if (log_det) *log_det = f.log_det();
    return f.selected_inverse();
}

}  // namespace plrnn
