#include "plrnn/metrics.hpp"

#include "plrnn/rng.hpp"
#include "plrnn/simulate.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <vector>

namespace plrnn {

// ---------------------------------------------------------------------------
// binned observation-space divergence

int BinSpec::bins_per_dim() const {
    return static_cast<int>(std::llround((hi - lo) / delta));
}

void BinSpec::validate() const {
    require(delta > 0.0 && hi > lo && alpha > 0.0, ErrorCode::invalid_argument,
            "BinSpec: need delta > 0, hi > lo, alpha > 0");
    require(bins_per_dim() >= 1, ErrorCode::invalid_argument, "BinSpec: empty grid");
    require(std::abs(bins_per_dim() * delta - (hi - lo)) < 1e-9 * (hi - lo),
            ErrorCode::invalid_argument, "BinSpec: range must be a whole number of bins");
}

KlReport kl_x(const MatrixXd& x_true, const MatrixXd& x_gen, const BinSpec& spec) {
    spec.validate();
    require(x_true.rows() >= 1 && x_gen.rows() >= 1, ErrorCode::invalid_argument,
            "kl_x: empty trajectory");
    require(x_true.cols() == x_gen.cols(), ErrorCode::dimension_mismatch,
            "kl_x: dimension mismatch between the point clouds");

    const int N = static_cast<int>(x_true.cols());
    const int nb = spec.bins_per_dim();

    // sparse joint histogram; exact keys so clouds of any dimension work
    std::map<std::vector<int>, std::pair<long, long>> cells;
    long clamped_t = 0, clamped_g = 0;
    std::vector<int> key(N);
    auto deposit = [&](const MatrixXd& x, bool is_true, long& clamped) {
        for (int t = 0; t < x.rows(); ++t) {
            bool clamp = false;
            for (int j = 0; j < N; ++j) {
                int idx = static_cast<int>(std::floor((x(t, j) - spec.lo) / spec.delta));
                if (idx < 0 || idx >= nb) {
                    clamp = true;
                    idx = std::clamp(idx, 0, nb - 1);
                }
                key[j] = idx;
            }
            auto& c = cells[key];
            (is_true ? c.first : c.second) += 1;
            if (clamp) ++clamped;
        }
    };
    deposit(x_true, true, clamped_t);
    deposit(x_gen, false, clamped_g);

    KlReport rep;
    rep.T_true = static_cast<int>(x_true.rows());
    rep.T_gen = static_cast<int>(x_gen.rows());
    rep.bins_total = std::pow(static_cast<double>(nb), N);
    rep.clamped_true = static_cast<double>(clamped_t) / rep.T_true;
    rep.clamped_gen = static_cast<double>(clamped_g) / rep.T_gen;
    rep.clamp_warning = rep.clamped_true > 0.01 || rep.clamped_gen > 0.01;

    const double dt = rep.T_true + spec.alpha * rep.bins_total;
    const double dg = rep.T_gen + spec.alpha * rep.bins_total;
    const double floor_t = spec.alpha / dt;  // smoothed mass of an empty bin
    const double floor_g = spec.alpha / dg;

    double kl = 0.0, normalizer = 0.0;
    for (const auto& [k, c] : cells) {
        const double pt = (c.first + spec.alpha) / dt;
        const double pg = (c.second + spec.alpha) / dg;
        kl += pt * std::log(pt / pg);
        normalizer += pt * std::log(pt / floor_g);
        if (c.first > 0) ++rep.occupied_true;
        if (c.second > 0) ++rep.occupied_gen;
    }
    rep.occupied_union = static_cast<long>(cells.size());

    // bins empty in both clouds contribute at the smoothing floor
    const double rest = rep.bins_total - static_cast<double>(cells.size());
    const double floor_term = floor_t * std::log(floor_t / floor_g);
    kl += rest * floor_term;
    normalizer += rest * floor_term;

    rep.kl = kl;
    rep.normalizer = normalizer;
    rep.kl_normalized = normalizer > 0.0 ? std::clamp(kl / normalizer, 0.0, 1.0) : 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// latent mixtures

void GaussianMixture::validate() const {
    require(means.rows() >= 1 && means.cols() >= 1, ErrorCode::invalid_argument,
            "GaussianMixture: empty");
    require(vars.rows() == means.rows() && vars.cols() == means.cols(),
            ErrorCode::dimension_mismatch, "GaussianMixture: vars shape != means shape");
    require((vars.array() > 0.0).all() && means.allFinite(), ErrorCode::invalid_argument,
            "GaussianMixture: degenerate components");
}

GaussianMixture posterior_mixture(const StatePosterior& post, double variance_floor) {
    require(variance_floor > 0.0, ErrorCode::invalid_argument, "variance floor must be > 0");
    const int T = static_cast<int>(post.means.rows());
    const int M = static_cast<int>(post.means.cols());
    require(T >= 1 && M >= 1 && post.cov.n() == T * M, ErrorCode::dimension_mismatch,
            "posterior_mixture: posterior covariance does not match the means");
    GaussianMixture mix;
    mix.means = post.means;
    mix.vars.resize(T, M);
    for (int t = 0; t < T; ++t)
        for (int m = 0; m < M; ++m)
            mix.vars(t, m) = std::max(post.cov.get(t * M + m, t * M + m), variance_floor);
    mix.validate();
    return mix;
}

GaussianMixture generated_mixture(const ModelBundle& model, int L, std::uint64_t seed,
                                  const MatrixXd* S, int burn_in) {
    require(L >= 1, ErrorCode::invalid_argument, "generated_mixture: L must be >= 1");
    const PlrnnParams& p = model.latent;
    const int M = p.M();

    int skip = 0;
    std::optional<MatrixXd> inputs;
    if (p.K() > 0) {
        require(S != nullptr && S->rows() >= L + 1 && S->cols() == p.K(),
                ErrorCode::dimension_mismatch,
                "generated_mixture: model has inputs; need at least L+1 input rows");
        inputs = S->topRows(L + 1);  // input-aligned run, no burn-in
    } else {
        skip = std::max(0, burn_in);
    }

    const Trajectory run = generate_latent(p, L + 1 + skip, seed, /*deterministic=*/false, inputs);
    require(!run.unstable, ErrorCode::unstable,
            "generated_mixture: free-running model diverged");

    GaussianMixture mix;
    mix.means.resize(L, M);
    mix.vars = MatrixXd::Ones(L, M);  // evaluation scale, matching the unit-noise posterior
    for (int t = 0; t < L; ++t) {
        const VectorXd z = run.values.row(skip + t).transpose();
        VectorXd s;
        const VectorXd* sp = nullptr;
        if (p.K() > 0) {
            s = S->row(t + 1).transpose();
            sp = &s;
        }
        mix.means.row(t) = latent_step(p, z, sp, nullptr).transpose();
    }
    mix.validate();
    return mix;
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Per-sample log density under the mixture, evaluated through two matrix
// products per chunk so large sample counts stay cheap.
VectorXd mixture_logpdf(const GaussianMixture& mix, const MatrixXd& Z) {
    const int L = mix.L();
    const int M = mix.M();
    const int n = static_cast<int>(Z.rows());

    const MatrixXd IV = mix.vars.cwiseInverse();           // L x M
    const MatrixXd MIV = mix.means.cwiseProduct(IV);       // L x M
    const VectorXd base = (mix.means.cwiseProduct(MIV) +
                           mix.vars.array().log().matrix())
                              .rowwise()
                              .sum();                      // L

    VectorXd out(n);
    const int chunk = 2048;
    for (int lo = 0; lo < n; lo += chunk) {
        const int nc = std::min(chunk, n - lo);
        const MatrixXd Zc = Z.middleRows(lo, nc);
        MatrixXd Q = Zc.cwiseProduct(Zc) * IV.transpose() - 2.0 * (Zc * MIV.transpose());
        Q.rowwise() += base.transpose();
        // logsumexp over components of -Q/2
        for (int i = 0; i < nc; ++i) {
            const double m = -0.5 * Q.row(i).minCoeff();
            double s = 0.0;
            for (int l = 0; l < L; ++l) s += std::exp(-0.5 * Q(i, l) - m);
            out(lo + i) = m + std::log(s) - std::log(static_cast<double>(L)) -
                          0.5 * M * kLog2Pi;
        }
    }
    return out;
}

// T x L matrix of closed-form KLs between all diagonal-Gaussian pairs.
MatrixXd pairwise_kl(const GaussianMixture& p, const GaussianMixture& q) {
    const MatrixXd IVq = q.vars.cwiseInverse();
    const MatrixXd MIVq = q.means.cwiseProduct(IVq);
    const VectorXd logdet_q = q.vars.array().log().matrix().rowwise().sum();
    const VectorXd logdet_p = p.vars.array().log().matrix().rowwise().sum();
    const VectorXd m2iv_q = q.means.cwiseProduct(MIVq).rowwise().sum();

    MatrixXd K = p.vars * IVq.transpose();                       // trace term
    K += p.means.cwiseProduct(p.means) * IVq.transpose();        // mean shift ...
    K -= 2.0 * (p.means * MIVq.transpose());
    K.rowwise() += m2iv_q.transpose();
    K.rowwise() += logdet_q.transpose();
    K.colwise() -= logdet_p;
    K.array() -= static_cast<double>(p.M());
    return 0.5 * K;
}

VectorXd row_logsumexp(const MatrixXd& A) {
    VectorXd out(A.rows());
    for (int i = 0; i < A.rows(); ++i) {
        const double m = A.row(i).maxCoeff();
        out(i) = m + std::log((A.row(i).array() - m).exp().sum());
    }
    return out;
}

}  // namespace

double kl_z_mc(const GaussianMixture& p, const GaussianMixture& q, int n_samples,
               std::uint64_t seed, double* standard_error) {
    p.validate();
    q.validate();
    require(p.M() == q.M(), ErrorCode::dimension_mismatch, "kl_z_mc: dimension mismatch");
    require(n_samples >= 2, ErrorCode::invalid_argument, "kl_z_mc: need at least 2 samples");

    CounterRng rng(seed, /*stream=*/12);
    const int M = p.M();
    const int chunk = 8192;
    double sum = 0.0, sumsq = 0.0;
    MatrixXd Z(chunk, M);
    for (int done = 0; done < n_samples; done += chunk) {
        const int nc = std::min(chunk, n_samples - done);
        for (int i = 0; i < nc; ++i) {
            const int l = static_cast<int>(rng.below(static_cast<std::uint64_t>(p.L())));
            for (int m = 0; m < M; ++m)
                Z(i, m) = p.means(l, m) + std::sqrt(p.vars(l, m)) * rng.gaussian();
        }
        const VectorXd lp = mixture_logpdf(p, Z.topRows(nc));
        const VectorXd lq = mixture_logpdf(q, Z.topRows(nc));
        for (int i = 0; i < nc; ++i) {
            const double d = lp(i) - lq(i);
            sum += d;
            sumsq += d * d;
        }
    }
    const double mean = sum / n_samples;
    if (standard_error) {
        const double var = std::max(0.0, sumsq / n_samples - mean * mean);
        *standard_error = std::sqrt(var / n_samples);
    }
    return mean;
}

double kl_z_variational(const GaussianMixture& p, const GaussianMixture& q) {
    p.validate();
    q.validate();
    require(p.M() == q.M(), ErrorCode::dimension_mismatch,
            "kl_z_variational: dimension mismatch");
    const VectorXd num = row_logsumexp(-pairwise_kl(p, p));
    const VectorXd den = row_logsumexp(-pairwise_kl(p, q));
    const double weight_shift = std::log(static_cast<double>(q.L())) -
                                std::log(static_cast<double>(p.L()));
    return (num - den).mean() + weight_shift;
}

GaussianMixture moment_matched_reference(const GaussianMixture& mix) {
    mix.validate();
    GaussianMixture ref;
    ref.means = mix.means.colwise().mean();
    const MatrixXd second = (mix.vars + mix.means.cwiseProduct(mix.means)).colwise().mean();
    ref.vars = (second - ref.means.cwiseProduct(ref.means)).cwiseMax(1e-12);
    return ref;
}

KlzReport kl_z(const StatePosterior& post, const GaussianMixture& gen, int n_samples,
               std::uint64_t seed, double variance_floor) {
    const GaussianMixture pm = posterior_mixture(post, variance_floor);
    gen.validate();
    require(pm.M() == gen.M(), ErrorCode::dimension_mismatch, "kl_z: dimension mismatch");
    require(n_samples >= 2, ErrorCode::invalid_argument, "kl_z: need at least 2 samples");
    const GaussianMixture ref = moment_matched_reference(gen);

    KlzReport rep;
    rep.n_samples = n_samples;
    rep.variance_floor = variance_floor;

    // one sample set from the posterior mixture feeds both divergences, so
    // the normalized value is exact when the generated mixture collapses to
    // the reference. Sampling order matches kl_z_mc with the same seed.
    CounterRng rng(seed, /*stream=*/12);
    const int M = pm.M();
    const int chunk = 8192;
    double sum_g = 0.0, sumsq_g = 0.0, sum_r = 0.0;
    MatrixXd Z(chunk, M);
    for (int done = 0; done < n_samples; done += chunk) {
        const int nc = std::min(chunk, n_samples - done);
        for (int i = 0; i < nc; ++i) {
            const int l = static_cast<int>(rng.below(static_cast<std::uint64_t>(pm.L())));
            for (int m = 0; m < M; ++m)
                Z(i, m) = pm.means(l, m) + std::sqrt(pm.vars(l, m)) * rng.gaussian();
        }
        const VectorXd lp = mixture_logpdf(pm, Z.topRows(nc));
        const VectorXd lq = mixture_logpdf(gen, Z.topRows(nc));
        const VectorXd lr = mixture_logpdf(ref, Z.topRows(nc));
        for (int i = 0; i < nc; ++i) {
            const double dg = lp(i) - lq(i);
            sum_g += dg;
            sumsq_g += dg * dg;
            sum_r += lp(i) - lr(i);
        }
    }
    rep.kl_mc = sum_g / n_samples;
    const double var_g = std::max(0.0, sumsq_g / n_samples - rep.kl_mc * rep.kl_mc);
    rep.mc_standard_error = std::sqrt(var_g / n_samples);
    rep.kl_reference = sum_r / n_samples;
    rep.kl_variational = kl_z_variational(pm, gen);
    rep.degenerate = !(rep.kl_reference > 1e-12);
    rep.kl_normalized = rep.degenerate ? 0.0 : rep.kl_mc / rep.kl_reference;
    return rep;
}

// ---------------------------------------------------------------------------
// largest Lyapunov exponent

LyapunovEstimate lyapunov_max(const Stepper& stepper, const MatrixXd& base_points, double d0,
                              int horizon, double dt, std::uint64_t seed) {
    require(d0 > 0.0 && horizon >= 5 && dt > 0.0, ErrorCode::invalid_argument,
            "lyapunov_max: need d0 > 0, horizon >= 5, dt > 0");
    require(base_points.rows() >= 1, ErrorCode::invalid_argument,
            "lyapunov_max: no base points");

    const int dim = static_cast<int>(base_points.cols());
    CounterRng rng(seed, /*stream=*/13);

    // log separation per lag, averaged over the pairs that stay finite for
    // the whole horizon
    VectorXd sum = VectorXd::Zero(horizon + 1);
    int pairs = 0;
    for (int b = 0; b < base_points.rows(); ++b) {
        VectorXd u(dim);
        for (int j = 0; j < dim; ++j) u(j) = rng.gaussian();
        u.normalize();
        const VectorXd z0 = base_points.row(b).transpose();
        const MatrixXd t1 = stepper(z0, horizon);
        const MatrixXd t2 = stepper(z0 + d0 * u, horizon);
        if (t1.rows() < horizon || t2.rows() < horizon) continue;

        VectorXd curve(horizon + 1);
        curve(0) = std::log(d0);
        bool ok = true;
        for (int l = 1; l <= horizon; ++l) {
            const double d = (t1.row(l - 1) - t2.row(l - 1)).norm();
            if (!std::isfinite(d) || d < 1e-300) {
                ok = false;
                break;
            }
            curve(l) = std::log(d);
        }
        if (!ok) continue;
        sum += curve;
        ++pairs;
    }
    require(pairs >= 1, ErrorCode::not_converged,
            "lyapunov_max: every trajectory pair left float range");

    LyapunovEstimate est;
    est.curve = sum / pairs;
    est.d0 = d0;
    est.dt = dt;

    // regress the segment where the curve is still on the start side of 90%
    // of its rise toward the plateau, never fewer than 5 lags. Flat curves
    // (zero exponent) never leave that side, so they fit their whole length
    // and per-period oscillations average out of the slope.
    const int len = horizon + 1;
    const int tail = std::max(1, len / 10);
    const double plateau = est.curve.tail(tail).mean();
    const double rise = plateau - est.curve(0);
    const double knee_level = est.curve(0) + 0.9 * rise;
    int knee = 0;
    for (int l = 0; l < len; ++l) {
        const bool start_side = rise >= 0.0 ? est.curve(l) < knee_level
                                            : est.curve(l) > knee_level;
        if (start_side) knee = l;
    }
    est.fit_lo = 0;
    est.fit_hi = std::min(len - 1, std::max(knee + 1, 4));

    const int n = est.fit_hi - est.fit_lo + 1;
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (int l = est.fit_lo; l <= est.fit_hi; ++l) {
        sx += l;
        sy += est.curve(l);
        sxx += static_cast<double>(l) * l;
        sxy += l * est.curve(l);
        syy += est.curve(l) * est.curve(l);
    }
    const double sxx_c = sxx - sx * sx / n;
    const double sxy_c = sxy - sx * sy / n;
    const double syy_c = syy - sy * sy / n;
    const double slope = sxy_c / sxx_c;
    est.lambda_max = slope / dt;
    est.r2 = syy_c > 0.0 ? (sxy_c * sxy_c) / (sxx_c * syy_c) : 1.0;
    return est;
}

// ---------------------------------------------------------------------------
// spectral agreement

MatrixXd welch_psd(const MatrixXd& x, int segment) {
    const int T = static_cast<int>(x.rows());
    const int D = static_cast<int>(x.cols());
    require(segment >= 8, ErrorCode::invalid_argument, "welch_psd: segment too short");
    require(T >= 2 * segment, ErrorCode::invalid_argument,
            "welch_psd: time series shorter than two segments");

    const int hop = segment / 2;
    const int nseg = (T - segment) / hop + 1;
    const int nf = segment / 2 + 1;

    VectorXd window(segment);
    for (int i = 0; i < segment; ++i)
        window(i) = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / (segment - 1)));
    const double wnorm = window.squaredNorm();

    double* in = fftw_alloc_real(segment);
    fftw_complex* out = fftw_alloc_complex(nf);
    // plan creation and destruction are not thread-safe (execution is)
    static std::mutex plan_mutex;
    fftw_plan plan;
    {
        const std::lock_guard<std::mutex> lock(plan_mutex);
        plan = fftw_plan_dft_r2c_1d(segment, in, out, FFTW_ESTIMATE);
    }

    MatrixXd psd = MatrixXd::Zero(nf, D);
    for (int d = 0; d < D; ++d) {
        for (int s = 0; s < nseg; ++s) {
            const int off = s * hop;
            double mean = 0.0;
            for (int i = 0; i < segment; ++i) mean += x(off + i, d);
            mean /= segment;
            for (int i = 0; i < segment; ++i) in[i] = (x(off + i, d) - mean) * window(i);
            fftw_execute(plan);
            for (int k = 0; k < nf; ++k)
                psd(k, d) += out[k][0] * out[k][0] + out[k][1] * out[k][1];
        }
    }
    psd /= static_cast<double>(nseg) * wnorm;

    {
        const std::lock_guard<std::mutex> lock(plan_mutex);
        fftw_destroy_plan(plan);
    }
    fftw_free(in);
    fftw_free(out);
    return psd;
}

double power_spectrum_correlation(const MatrixXd& a, const MatrixXd& b) {
    require(a.cols() == b.cols(), ErrorCode::dimension_mismatch,
            "power_spectrum_correlation: dimension mismatch");
    const int T = static_cast<int>(std::min(a.rows(), b.rows()));
    const int segment = T / 8;
    const MatrixXd pa = welch_psd(a, segment);
    const MatrixXd pb = welch_psd(b, segment);

    double acc = 0.0;
    for (int d = 0; d < a.cols(); ++d) {
        const VectorXd u = pa.col(d).array() - pa.col(d).mean();
        const VectorXd v = pb.col(d).array() - pb.col(d).mean();
        const double nu = u.norm(), nv = v.norm();
        if (nu < 1e-150 || nv < 1e-150) {
            // flat spectra carry no shape to correlate; identical flats agree
            acc += (pa.col(d) - pb.col(d)).cwiseAbs().maxCoeff() < 1e-12 ? 1.0 : 0.0;
            continue;
        }
        acc += u.dot(v) / (nu * nv);
    }
    return acc / a.cols();
}

// ---------------------------------------------------------------------------
// n-step-ahead prediction

PredictionMse n_step_ahead_mse(const ModelBundle& model, const StatePosterior& post,
                               const MatrixXd& X, const MatrixXd* S, const MatrixXd* R,
                               int max_n) {
    require(max_n >= 0, ErrorCode::invalid_argument, "n_step_ahead_mse: max_n must be >= 0");
    const int T = static_cast<int>(X.rows());
    const int N = static_cast<int>(X.cols());
    const int M = model.M();
    require(post.means.rows() == T && post.means.cols() == M, ErrorCode::dimension_mismatch,
            "n_step_ahead_mse: posterior does not match the data");
    require(max_n < T, ErrorCode::invalid_argument, "n_step_ahead_mse: horizon exceeds data");
    if (model.K() > 0)
        require(S != nullptr && S->rows() == T && S->cols() == model.K(),
                ErrorCode::dimension_mismatch, "n_step_ahead_mse: inputs missing");
    const bool bold = model.is_bold();
    const ObsParamsBold* ob = bold ? &std::get<ObsParamsBold>(model.observation) : nullptr;
    if (bold && ob->J.cols() > 0)
        require(R != nullptr && R->rows() == T && R->cols() == ob->J.cols(),
                ErrorCode::dimension_mismatch, "n_step_ahead_mse: nuisance series missing");

    const MatrixXd& Zinf = post.means;
    const int taps_n = bold ? ob->hrf.n() : 1;

    // observation at time tau, reading latent rows <= t0 from the posterior
    // and rows > t0 from the prediction buffer
    MatrixXd pred(std::max(1, max_n), M);
    auto latent_at = [&](int tau, int t0) -> VectorXd {
        if (tau <= t0) return Zinf.row(tau).transpose();
        return pred.row(tau - t0 - 1).transpose();
    };
    auto predict_obs = [&](int tau, int t0) -> VectorXd {
        if (!bold) {
            const auto& ol = std::get<ObsParamsLinear>(model.observation);
            return ol.B * latent_at(tau, t0);
        }
        VectorXd conv = VectorXd::Zero(M);
        for (int l = 0; l < std::min(taps_n, tau + 1); ++l)
            conv += ob->hrf.taps(taps_n - 1 - l) * latent_at(tau - l, t0);
        VectorXd x = ob->B * conv;
        if (ob->J.cols() > 0) x += ob->J * R->row(tau).transpose();
        return x;
    };

    PredictionMse out;
    out.obs = VectorXd::Zero(max_n + 1);
    out.state = VectorXd::Zero(max_n + 1);
    VectorXd counts = VectorXd::Zero(max_n + 1);

    for (int t0 = 0; t0 < T; ++t0) {
        out.obs(0) += (predict_obs(t0, t0) - X.row(t0).transpose()).squaredNorm();
        counts(0) += 1;
        VectorXd cur = Zinf.row(t0).transpose();
        for (int n = 1; n <= max_n && t0 + n < T; ++n) {
            VectorXd s;
            const VectorXd* sp = nullptr;
            if (model.K() > 0) {
                s = S->row(t0 + n).transpose();
                sp = &s;
            }
            cur = latent_step(model.latent, cur, sp, nullptr);
            pred.row(n - 1) = cur.transpose();
            out.obs(n) += (predict_obs(t0 + n, t0) - X.row(t0 + n).transpose()).squaredNorm();
            out.state(n) += (cur - Zinf.row(t0 + n).transpose()).squaredNorm();
            counts(n) += 1;
        }
    }
    for (int n = 0; n <= max_n; ++n) {
        if (counts(n) > 0) {
            out.obs(n) /= counts(n) * N;
            out.state(n) /= counts(n) * M;
        }
    }
    return out;
}

}  // namespace plrnn
