#include "plrnn/analysis.hpp"

#include "plrnn/metrics.hpp"
#include "plrnn/rng.hpp"
#include "plrnn/simulate.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <vector>

namespace plrnn {

namespace {

// continued fraction of the regularized incomplete beta (modified Lentz)
double betacf(double a, double b, double x) {
    const double tiny = 1e-30;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double f = d;
    for (int m = 1; m <= 300; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        f *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        f *= del;
        if (std::abs(del - 1.0) < 3e-14) break;
    }
    return f;
}

double reg_inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    const double front = std::exp(a * std::log(x) + b * std::log1p(-x) - lbeta);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

std::vector<int> live_indices(const ArrayXb& live) {
    std::vector<int> idx;
    for (int i = 0; i < live.size(); ++i)
        if (live(i)) idx.push_back(i);
    return idx;
}

MatrixXd select_cols(const MatrixXd& X, const std::vector<int>& idx) {
    MatrixXd out(X.rows(), static_cast<int>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<int>(j)) = X.col(idx[j]);
    return out;
}

double hausdorff(const MatrixXd& A, const MatrixXd& B) {
    auto directed = [](const MatrixXd& P, const MatrixXd& Q) {
        double worst = 0.0;
        for (int i = 0; i < P.rows(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int j = 0; j < Q.rows(); ++j)
                best = std::min(best, (P.row(i) - Q.row(j)).squaredNorm());
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::sqrt(std::max(directed(A, B), directed(B, A)));
}

// cycle vs chaos: regress the averaged twin log-separation curve over its
// pre-plateau window and require a significantly positive slope for chaos
AttractorKind classify_pattern(const PlrnnParams& p, const VectorXd* s, const MatrixXd& traj,
                               int transient, const std::vector<int>& idx,
                               const AttractorOptions& opt, std::uint64_t twin_seed) {
    const int T = static_cast<int>(traj.rows());
    const int wlen = T - transient;
    const int nb = std::min(opt.twin_base_points, wlen);
    MatrixXd bases(nb, traj.cols());
    for (int k = 0; k < nb; ++k) {
        // low-discrepancy phases so cycle periods do not line up across pairs
        const double u = std::fmod(0.618033988749895 * (k + 1), 1.0);
        bases.row(k) = traj.row(transient + std::min(wlen - 1, static_cast<int>(u * wlen)));
    }
    const Stepper stepper = [&](const VectorXd& z0, int n) {
        MatrixXd out(n, static_cast<int>(idx.size()));
        VectorXd z = z0;
        for (int t = 0; t < n; ++t) {
            z = latent_step(p, z, s, nullptr);
            for (std::size_t j = 0; j < idx.size(); ++j) out(t, static_cast<int>(j)) = z(idx[j]);
        }
        return out;
    };

    LyapunovEstimate est;
    try {
        est = lyapunov_max(stepper, bases, opt.twin_d0, opt.twin_horizon, 1.0, twin_seed);
    } catch (const Error& e) {
        // separation collapsed below float range: strongly contracting, not chaos
        if (e.code() == ErrorCode::not_converged) return AttractorKind::limit_cycle;
        throw;
    }

    const int lo = est.fit_lo;
    const int hi = est.fit_hi;
    const int n = hi - lo + 1;
    if (n < 3) return AttractorKind::limit_cycle;
    double mx = 0.0, my = 0.0;
    for (int l = lo; l <= hi; ++l) {
        mx += l;
        my += est.curve(l);
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (int l = lo; l <= hi; ++l) {
        sxx += (l - mx) * (l - mx);
        sxy += (l - mx) * (est.curve(l) - my);
    }
    const double slope = sxy / sxx;
    if (!(slope > 0.0)) return AttractorKind::limit_cycle;
    double sse = 0.0;
    for (int l = lo; l <= hi; ++l) {
        const double r = est.curve(l) - my - slope * (l - mx);
        sse += r * r;
    }
    const double se = std::sqrt(std::max(sse, 0.0) / (n - 2) / sxx);
    const double tstat = se > 0.0 ? slope / se : std::numeric_limits<double>::infinity();
    return student_t_sf(tstat, n - 2) < opt.chaos_p ? AttractorKind::chaotic
                                                    : AttractorKind::limit_cycle;
}

}  // namespace

double student_t_sf(double t, double dof) {
    require(dof > 0.0, ErrorCode::invalid_argument, "student_t_sf: dof must be positive");
    if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
    if (t == 0.0) return 0.5;
    if (t < 0.0) return 1.0 - student_t_sf(-t, dof);
    if (std::isinf(t)) return 0.0;
    const double x = dof / (dof + t * t);
    return 0.5 * reg_inc_beta(0.5 * dof, 0.5, x);
}

std::vector<FixedPoint> enumerate_fixed_points(const PlrnnParams& params, int max_m) {
    params.validate();
    require(max_m >= 1 && max_m <= 30, ErrorCode::invalid_argument,
            "enumerate_fixed_points: cap must be in [1, 30]");
    const int M = params.M();
    require(M <= max_m, ErrorCode::invalid_argument,
            "enumerate_fixed_points: 2^M regions exceed the cap");

    const bool identity = params.phi == Nonlinearity::identity;
    const std::uint64_t n_regions = identity ? 1 : (std::uint64_t{1} << M);
    const MatrixXd I = MatrixXd::Identity(M, M);

    std::vector<FixedPoint> out;
    out.reserve(n_regions);
    for (std::uint64_t bits = 0; bits < n_regions; ++bits) {
        FixedPoint fp;
        fp.region = ArrayXb::Constant(M, identity);
        if (!identity)
            for (int i = 0; i < M; ++i) fp.region(i) = ((bits >> i) & 1ull) != 0;

        MatrixXd F = params.A + params.W;
        for (int i = 0; i < M; ++i)
            if (!fp.region(i)) F.col(i) -= params.W.col(i);

        fp.eigenvalues = Eigen::EigenSolver<MatrixXd>(F, false).eigenvalues();
        fp.stable = fp.eigenvalues.cwiseAbs().maxCoeff() <= 1.0;

        Eigen::FullPivLU<MatrixXd> lu(I - F);
        if (!lu.isInvertible()) {
            fp.degenerate = true;
            out.push_back(std::move(fp));
            continue;
        }
        fp.z_star = lu.solve(params.h);
        if (identity) {
            fp.consistent = true;  // no region constraint for the linear map
        } else {
            fp.consistent = true;
            for (int i = 0; i < M; ++i) {
                if ((fp.z_star(i) > 0.0) != static_cast<bool>(fp.region(i))) {
                    fp.consistent = false;
                    break;
                }
            }
        }
        out.push_back(std::move(fp));
    }
    return out;
}

AttractorSet detect_attractors(const PlrnnParams& params, int n_init, int T, std::uint64_t seed,
                               const AttractorOptions& opt) {
    params.validate();
    require(n_init >= 1, ErrorCode::invalid_argument, "detect_attractors: n_init must be >= 1");
    require(T >= 10, ErrorCode::invalid_argument, "detect_attractors: need T >= 10");
    require(opt.transient_fraction >= 0.0 && opt.transient_fraction < 1.0,
            ErrorCode::invalid_argument, "detect_attractors: transient fraction in [0, 1)");
    require(opt.fp_tol > 0.0 && opt.merge_tol > 0.0 && opt.twin_d0 > 0.0 && opt.init_sd > 0.0 &&
                opt.twin_horizon >= 10 && opt.twin_base_points >= 1 && opt.segment_cap >= 1,
            ErrorCode::invalid_argument, "detect_attractors: bad options");

    const int M = params.M();
    AttractorSet out;
    for (auto& cand : enumerate_fixed_points(params, opt.enumeration_cap))
        if (cand.consistent) out.fixed_points.push_back(std::move(cand));
    for (const auto& fp : out.fixed_points) ++(fp.stable ? out.n_stable : out.n_unstable);

    const bool identity = params.phi == Nonlinearity::identity;
    const VectorXd s_zero = VectorXd::Zero(params.K());
    const VectorXd* s = params.K() > 0 ? &s_zero : nullptr;

    CounterRng init_rng(seed, /*stream=*/14);
    CounterRng twin_root(seed, /*stream=*/15);

    const int transient = std::min(static_cast<int>(T * opt.transient_fraction), T - 2);
    const int wlen = T - transient;

    std::vector<MatrixXd> object_sets;  // live-dim segments backing the merge test

    MatrixXd traj(T, M);
    for (int run = 0; run < n_init; ++run) {
        VectorXd z(M);
        for (int i = 0; i < M; ++i) z(i) = opt.init_sd * init_rng.gaussian();

        bool unbounded = false;
        for (int t = 0; t < T && !unbounded; ++t) {
            if (t > 0) z = latent_step(params, z, s, nullptr);
            for (int i = 0; i < M; ++i) {
                const double v = z(i);
                // relu lets a coordinate fall without bound while its phi
                // output, and so its effect on the others, stays zero; only
                // positive excursions (or either sign for identity) diverge
                if (std::isnan(v) || v > opt.unbounded_threshold ||
                    (identity && v < -opt.unbounded_threshold)) {
                    unbounded = true;
                    break;
                }
            }
            if (!unbounded) traj.row(t) = z;
        }
        if (unbounded) {
            ++out.n_unbounded;
            continue;
        }

        ArrayXb live(M);
        for (int i = 0; i < M; ++i) live(i) = traj(T - 1, i) > opt.freeze_threshold;
        const std::vector<int> idx = live_indices(live);
        if (idx.empty()) {
            ++out.n_unbounded;
            continue;
        }

        double step_inf = 0.0;
        for (int i : idx) step_inf = std::max(step_inf, std::abs(traj(T - 1, i) - traj(T - 2, i)));

        AttractorKind kind = AttractorKind::fixed_point;
        MatrixXd segment;
        if (step_inf < opt.fp_tol) {
            segment = traj.row(T - 1);
        } else {
            kind = classify_pattern(params, s, traj, transient, idx, opt,
                                    twin_root.fork(static_cast<std::uint64_t>(run)).next_u64());
            // low-discrepancy subsample: a uniform stride can share a factor
            // with a cycle's period, leaving runs that entered the cycle at
            // different phases with disjoint sample sets that never merge
            const int rows = std::min(opt.segment_cap, wlen);
            segment.resize(rows, M);
            for (int r = 0; r < rows; ++r) {
                const double u = std::fmod(0.618033988749895 * (r + 1), 1.0);
                segment.row(r) = traj.row(transient + std::min(wlen - 1, static_cast<int>(u * wlen)));
            }
        }
        MatrixXd seg_live = select_cols(segment, idx);

        int obj = -1;
        for (std::size_t k = 0; k < out.attractors.size(); ++k) {
            if (!(out.attractors[k].live == live).all()) continue;
            if (hausdorff(seg_live, object_sets[k]) < opt.merge_tol) {
                obj = static_cast<int>(k);
                break;
            }
        }
        if (obj < 0) {
            Attractor a;
            a.kind = kind;
            a.segment = std::move(segment);
            a.live = live;
            a.basin_hits = 1;
            out.attractors.push_back(std::move(a));
            object_sets.push_back(std::move(seg_live));
        } else {
            out.attractors[static_cast<std::size_t>(obj)].basin_hits += 1;
        }
    }

    // fold simulation objects into the stable tally; a simulated fixed point
    // that coincides with an enumerated one is already counted
    for (auto& a : out.attractors) {
        if (a.kind == AttractorKind::fixed_point && a.live.count() == M) {
            double best = std::numeric_limits<double>::infinity();
            int arg = -1;
            for (std::size_t i = 0; i < out.fixed_points.size(); ++i) {
                const double d = (out.fixed_points[i].z_star - a.segment.row(0).transpose())
                                     .lpNorm<Eigen::Infinity>();
                if (d < best) {
                    best = d;
                    arg = static_cast<int>(i);
                }
            }
            if (best < opt.merge_tol) a.matched_fixed_point = arg;
        }
        if (a.kind != AttractorKind::fixed_point || a.matched_fixed_point < 0) ++out.n_stable;
    }
    return out;
}

}  // namespace plrnn
