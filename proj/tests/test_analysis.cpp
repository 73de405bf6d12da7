#include "plrnn/analysis.hpp"
#include "plrnn/rng.hpp"
#include "plrnn/simulate.hpp"

#include "doctest.h"
#include "test_support.hpp"

#include <cmath>
#include <vector>

using namespace plrnn;
using namespace plrnn::testsupport;

namespace {

PlrnnParams hand2(double a0, double a1, double w01, double w10, double h0, double h1,
                  Nonlinearity phi = Nonlinearity::relu) {
    PlrnnParams p;
    p.A = MatrixXd::Zero(2, 2);
    p.A(0, 0) = a0;
    p.A(1, 1) = a1;
    p.W = MatrixXd::Zero(2, 2);
    p.W(0, 1) = w01;
    p.W(1, 0) = w10;
    p.h.resize(2);
    p.h << h0, h1;
    p.mu0 = VectorXd::Zero(2);
    p.sigma = VectorXd::Ones(2);
    p.C = MatrixXd::Zero(2, 0);
    p.phi = phi;
    return p;
}

VectorXd det_step(const PlrnnParams& p, const VectorXd& z) {
    return latent_step(p, z, nullptr, nullptr);
}

// renormalized two-trajectory exponent for the deterministic map, an oracle
// independent of the twin-slope classifier inside detect_attractors
double benettin_map(const PlrnnParams& p, VectorXd z, int burn, int steps) {
    for (int t = 0; t < burn; ++t) z = det_step(p, z);
    const double d0 = 1e-8;
    VectorXd za = z;
    VectorXd zb = z + VectorXd::Constant(z.size(), d0 / std::sqrt(double(z.size())));
    double acc = 0.0;
    for (int t = 0; t < steps; ++t) {
        za = det_step(p, za);
        zb = det_step(p, zb);
        const double d = (za - zb).norm();
        REQUIRE(std::isfinite(d));
        REQUIRE(d > 0.0);
        acc += std::log(d / d0);
        zb = za + (zb - za) * (d0 / d);
    }
    return acc / steps;
}

int count_consistent(const std::vector<FixedPoint>& fps) {
    int n = 0;
    for (const auto& fp : fps) n += fp.consistent ? 1 : 0;
    return n;
}

}  // namespace

TEST_CASE("region enumeration: scalar oracle and boundary fixed point") {
    PlrnnParams p;
    p.A = MatrixXd::Constant(1, 1, 0.5);
    p.W = MatrixXd::Zero(1, 1);
    p.h = VectorXd::Constant(1, 1.0);
    p.mu0 = VectorXd::Zero(1);
    p.sigma = VectorXd::Ones(1);
    p.C = MatrixXd::Zero(1, 0);

    const auto fps = enumerate_fixed_points(p);
    REQUIRE(fps.size() == 2);
    // the inactive region produces z* = 2 which violates z <= 0
    CHECK(!fps[0].region(0));
    CHECK(fps[0].z_star(0) == doctest::Approx(2.0));
    CHECK(!fps[0].consistent);
    // the active region owns the fixed point
    CHECK(fps[1].region(0));
    CHECK(fps[1].z_star(0) == doctest::Approx(2.0));
    CHECK(fps[1].consistent);
    CHECK(fps[1].stable);
    CHECK(fps[1].eigenvalues(0).real() == doctest::Approx(0.5));

    // zero bias puts the candidate at the origin in every nonsingular
    // region; only the all-inactive sign pattern accepts it
    PlrnnParams q = hand2(0.5, 0.7, 0.2, -0.3, 0.0, 0.0);
    const auto zs = enumerate_fixed_points(q);
    REQUIRE(zs.size() == 4);
    for (const auto& fp : zs) {
        CHECK(!fp.degenerate);
        CHECK(fp.z_star.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
        CHECK(fp.consistent == !fp.region.any());
    }

    // a unit self-coupling makes I - A - W D singular in every region
    PlrnnParams s = hand2(1.0, 1.0, 0.0, 0.0, 0.3, 0.3);
    for (const auto& fp : enumerate_fixed_points(s)) {
        CHECK(fp.degenerate);
        CHECK(!fp.consistent);
        double closest = 1e9;
        for (int i = 0; i < fp.eigenvalues.size(); ++i)
            closest = std::min(closest, std::abs(fp.eigenvalues(i) - std::complex<double>(1.0)));
        CHECK(closest < 1e-12);
    }

    // blowup guard
    PlrnnParams big;
    const int M = 22;
    big.A = MatrixXd::Identity(M, M) * 0.5;
    big.W = MatrixXd::Zero(M, M);
    big.h = VectorXd::Zero(M);
    big.mu0 = VectorXd::Zero(M);
    big.sigma = VectorXd::Ones(M);
    big.C = MatrixXd::Zero(M, 0);
    CHECK_THROWS_AS(enumerate_fixed_points(big), Error);
    CHECK_NOTHROW(enumerate_fixed_points(big, 22));
    CHECK_THROWS_AS(enumerate_fixed_points(p, 0), Error);
}

TEST_CASE("region enumeration: residuals and grid-hopping oracle agree") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        PlrnnParams p = make_latent(3, 0, 700 + seed);
        if (seed % 3 == 0) p.W *= 1.6;  // richer region structure for a third of them

        const auto fps = enumerate_fixed_points(p);
        REQUIRE(fps.size() == 8);
        std::vector<VectorXd> consistent;
        for (const auto& fp : fps) {
            if (fp.degenerate) continue;
            CHECK(fp.stable == (fp.eigenvalues.cwiseAbs().maxCoeff() <= 1.0));
            if (!fp.consistent) continue;
            const VectorXd step = det_step(p, fp.z_star);
            CHECK((step - fp.z_star).lpNorm<Eigen::Infinity>() < 1e-10);
            consistent.push_back(fp.z_star);
        }

        const auto grid = grid_fixed_points(p, 7, -6.0, 6.0);
        CHECK(grid.size() == consistent.size());
        for (const auto& g : grid) {
            double best = 1e9;
            for (const auto& c : consistent) best = std::min(best, (g - c).lpNorm<Eigen::Infinity>());
            CHECK(best < 1e-8);
        }
    }
}

TEST_CASE("linear variant: single global candidate") {
    PlrnnParams p = hand2(0.6, 0.8, 0.1, -0.2, 0.4, -0.1, Nonlinearity::identity);
    const auto fps = enumerate_fixed_points(p);
    REQUIRE(fps.size() == 1);
    CHECK(fps[0].region.all());
    CHECK(fps[0].consistent);
    CHECK(fps[0].stable);
    const VectorXd step = det_step(p, fps[0].z_star);
    CHECK((step - fps[0].z_star).lpNorm<Eigen::Infinity>() < 1e-12);

    // sign of the state does not matter for the linear map: shift the bias
    // so the fixed point goes negative and it stays the one candidate
    PlrnnParams q = hand2(0.6, 0.8, 0.1, -0.2, -2.0, -3.0, Nonlinearity::identity);
    const auto neg = enumerate_fixed_points(q);
    REQUIRE(neg.size() == 1);
    CHECK(neg[0].consistent);
    CHECK(neg[0].z_star.maxCoeff() < 0.0);
}

TEST_CASE("slope significance helper tracks closed forms") {
    // one degree of freedom is the Cauchy tail
    for (double t : {0.25, 1.0, 3.0, 10.0})
        CHECK(student_t_sf(t, 1.0) == doctest::Approx(0.5 - std::atan(t) / M_PI).epsilon(1e-10));
    // two degrees of freedom has an elementary tail as well
    for (double t : {0.3, 0.7, 1.9, 4.0})
        CHECK(student_t_sf(t, 2.0) ==
              doctest::Approx(0.5 * (1.0 - t / std::sqrt(2.0 + t * t))).epsilon(1e-10));

    CHECK(student_t_sf(0.0, 7.0) == doctest::Approx(0.5));
    CHECK(student_t_sf(-1.3, 5.0) == doctest::Approx(1.0 - student_t_sf(1.3, 5.0)).epsilon(1e-12));
    CHECK(student_t_sf(std::numeric_limits<double>::infinity(), 3.0) == 0.0);
    // wide dof approaches the normal tail
    CHECK(student_t_sf(1.959964, 2e6) == doctest::Approx(0.025).epsilon(1e-3));
    // monotone in t
    double prev = 1.0;
    for (double t = 0.0; t < 6.0; t += 0.5) {
        const double v = student_t_sf(t, 9.0);
        CHECK(v < prev + 1e-15);
        prev = v;
    }
    CHECK_THROWS_AS(student_t_sf(1.0, 0.0), Error);
}

TEST_CASE("contracting map: one fixed point, every start finds it") {
    // row sums of |A| + |W| stay below one, so the map is a contraction in
    // the max norm and the fixed point is unique with a global basin
    const PlrnnParams p = hand2(0.3, 0.4, 0.2, -0.1, 0.5, -0.2);

    const auto fps = enumerate_fixed_points(p);
    REQUIRE(count_consistent(fps) == 1);
    VectorXd z_star;
    for (const auto& fp : fps)
        if (fp.consistent) {
            CHECK(fp.stable);
            z_star = fp.z_star;
        }

    const AttractorSet set = detect_attractors(p, 25, 800, 42);
    REQUIRE(set.attractors.size() == 1);
    const Attractor& a = set.attractors[0];
    CHECK(a.kind == AttractorKind::fixed_point);
    CHECK(a.basin_hits == 25);  // duplicate starts collapse onto one identity
    CHECK(a.live.all());
    CHECK(a.matched_fixed_point == 0);
    CHECK((a.segment.row(0).transpose() - z_star).lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK(set.n_stable == 1);
    CHECK(set.n_unstable == 0);
    CHECK(set.n_unbounded == 0);
    CHECK(set.fixed_points.size() == 1);
}

TEST_CASE("winner take all: bistable inventory and local stability") {
    // mutual inhibition with moderate decay: two single-winner fixed points
    // and a symmetric saddle between them
    const PlrnnParams p = hand2(0.5, 0.5, -0.75, -0.75, 1.0, 1.0);

    const auto fps = enumerate_fixed_points(p);
    REQUIRE(count_consistent(fps) == 3);
    VectorXd winner0, winner1, saddle;
    for (const auto& fp : fps) {
        if (!fp.consistent) continue;
        if (fp.region(0) && !fp.region(1)) {
            CHECK(fp.stable);
            winner0 = fp.z_star;
            CHECK(fp.z_star(0) == doctest::Approx(2.0).epsilon(1e-12));
            CHECK(fp.z_star(1) == doctest::Approx(-1.0).epsilon(1e-12));
        } else if (!fp.region(0) && fp.region(1)) {
            CHECK(fp.stable);
            winner1 = fp.z_star;
        } else {
            REQUIRE(fp.region.all());
            CHECK(!fp.stable);
            CHECK(fp.eigenvalues.cwiseAbs().maxCoeff() == doctest::Approx(1.25));
            saddle = fp.z_star;
            CHECK(fp.z_star(0) == doctest::Approx(0.8).epsilon(1e-12));
        }
    }

    // both basins are fat, so a thousand starts must visit both winners
    const AttractorSet set = detect_attractors(p, 1000, 400, 7);
    REQUIRE(set.attractors.size() == 2);
    int total = 0;
    for (const auto& a : set.attractors) {
        CHECK(a.kind == AttractorKind::fixed_point);
        CHECK(a.matched_fixed_point >= 0);
        CHECK(a.basin_hits > 300);
        total += a.basin_hits;
    }
    CHECK(total == 1000);
    CHECK(set.n_stable == 2);
    CHECK(set.n_unstable == 1);

    // perturbations decay around the stable winner
    VectorXd z = winner0 + VectorXd::Constant(2, 1e-6 / std::sqrt(2.0));
    for (int t = 0; t < 120; ++t) z = det_step(p, z);
    CHECK((z - winner0).norm() < 1e-9);

    // and grow along the saddle's expanding direction (eigenvalue 1.25)
    VectorXd u(2);
    u << 1.0, -1.0;
    z = saddle + 1e-6 * u / u.norm();
    for (int t = 0; t < 120; ++t) z = det_step(p, z);
    CHECK((z - saddle).norm() > 0.5);
}

TEST_CASE("rectified spiral: one limit cycle with exact recurrence") {
    // unstable spiral in the all-active region (|eig| = sqrt(1.08) > 1),
    // rectified and damped in the other quadrants: a stable periodic orbit
    const PlrnnParams p = hand2(0.8, 0.9, -0.6, 0.6, 0.5, -0.2);

    const auto fps = enumerate_fixed_points(p);
    REQUIRE(count_consistent(fps) == 1);
    for (const auto& fp : fps)
        if (fp.consistent) CHECK(!fp.stable);

    const AttractorSet set = detect_attractors(p, 40, 3000, 5);
    REQUIRE(set.attractors.size() == 1);
    const Attractor& a = set.attractors[0];
    CHECK(a.kind == AttractorKind::limit_cycle);
    CHECK(a.basin_hits == 40);
    CHECK(set.n_stable == 1);
    CHECK(set.n_unstable == 1);
    CHECK(set.n_unbounded == 0);

    // return oracle: iterate from a representative state until the orbit
    // recurs exactly; a converged discrete cycle repeats within float noise
    VectorXd z = a.segment.row(0).transpose();
    for (int t = 0; t < 2000; ++t) z = det_step(p, z);
    std::vector<VectorXd> tail;
    VectorXd w = z;
    int period = -1;
    for (int k = 1; k <= 200; ++k) {
        w = det_step(p, w);
        if ((w - z).lpNorm<Eigen::Infinity>() < 1e-9) {
            period = k;
            break;
        }
        tail.push_back(w);
    }
    REQUIRE(period > 1);
    // the orbit really moves between returns
    double max_step = 0.0;
    for (const auto& s : tail) max_step = std::max(max_step, (s - z).norm());
    CHECK(max_step > 0.1);
}

TEST_CASE("folded map: chaotic object with positive twin growth") {
    // near-unit self-coupling plus strong antisymmetric rectified feedback
    // folds trajectories back onto a bounded set
    const PlrnnParams p = hand2(-0.06, 1.0, 2.95, -1.82, -0.6, 0.2);

    // independent exponent estimate confirms sensitive dependence
    VectorXd z0(2);
    z0 << 0.1, -0.2;
    const double lam = benettin_map(p, z0, 500, 4000);
    CHECK(lam > 0.1);
    CHECK(lam < 0.35);

    AttractorOptions opt;
    opt.merge_tol = 0.5;  // chaotic sets are sampling-gap limited
    const AttractorSet set = detect_attractors(p, 60, 3000, 11, opt);
    REQUIRE(set.attractors.size() == 1);
    CHECK(set.attractors[0].kind == AttractorKind::chaotic);
    CHECK(set.attractors[0].basin_hits == 60);
    CHECK(set.n_stable == 1);
    CHECK(set.n_unstable == 1);
    CHECK(set.n_unbounded == 0);
    // bounded folded set, well inside the divergence guard
    CHECK(set.attractors[0].segment.cwiseAbs().maxCoeff() < 10.0);
}

TEST_CASE("runaway coordinate drops out of the distance set") {
    // dim 0 amplifies itself downward and runs to -inf; through the
    // rectifier it stops influencing dim 1, which settles at 2
    const PlrnnParams p = hand2(1.1, 0.5, 0.0, 0.3, -0.5, 1.0);

    const auto fps = enumerate_fixed_points(p);
    REQUIRE(count_consistent(fps) == 1);

    const AttractorSet set = detect_attractors(p, 200, 1500, 3);
    REQUIRE(set.attractors.size() == 1);
    const Attractor& a = set.attractors[0];
    CHECK(a.kind == AttractorKind::fixed_point);
    CHECK(!a.live(0));
    CHECK(a.live(1));
    CHECK(a.segment(0, 1) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(a.matched_fixed_point == -1);  // not a finite enumerated candidate
    CHECK(set.n_stable == 1);            // still a stable object
    CHECK(set.n_unstable == 1);          // the enumerated candidate at (5, 5)
    CHECK(set.n_unbounded + a.basin_hits == 200);
    CHECK(set.n_unbounded < 10);  // only starts past the unstable point escape upward
}

TEST_CASE("unbounded linear map and option validation") {
    const PlrnnParams p = hand2(1.2, 1.2, 0.0, 0.0, 0.5, 0.5, Nonlinearity::identity);
    const AttractorSet set = detect_attractors(p, 30, 300, 9);
    CHECK(set.attractors.empty());
    CHECK(set.n_unbounded == 30);
    CHECK(set.n_stable == 0);
    CHECK(set.n_unstable == 1);  // the repelling fixed point still enumerates

    const PlrnnParams ok = hand2(0.6, 0.7, 0.1, -0.1, 0.4, 0.2, Nonlinearity::identity);
    const AttractorSet conv = detect_attractors(ok, 10, 500, 9);
    REQUIRE(conv.attractors.size() == 1);
    CHECK(conv.attractors[0].matched_fixed_point == 0);
    CHECK(conv.n_stable == 1);

    AttractorOptions bad;
    bad.transient_fraction = 1.0;
    CHECK_THROWS_AS(detect_attractors(ok, 10, 500, 9, bad), Error);
    CHECK_THROWS_AS(detect_attractors(ok, 0, 500, 9), Error);
    CHECK_THROWS_AS(detect_attractors(ok, 10, 5, 9), Error);
    AttractorOptions neg;
    neg.merge_tol = 0.0;
    CHECK_THROWS_AS(detect_attractors(ok, 10, 500, 9, neg), Error);
}
