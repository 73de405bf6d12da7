#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "plrnn/analysis.hpp"
#include "plrnn/hrf.hpp"
#include "plrnn/metrics.hpp"
#include "plrnn/serialize.hpp"
#include "plrnn/simulate.hpp"
#include "plrnn/training.hpp"
#include "test_support.hpp"

using namespace plrnn;

namespace {

std::string tmp_path(const std::string& name) {
    static const std::filesystem::path dir = [] {
        auto d = std::filesystem::temp_directory_path() / "plrnn_serialize_test";
        std::filesystem::create_directories(d);
        return d;
    }();
    return (dir / name).string();
}

template <typename Fn>
ErrorCode thrown_code(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return static_cast<ErrorCode>(0);  // did not throw
}

// exact equality, with NaN matching NaN so nonfinite payloads can round trip
bool exact_eq(const MatrixXd& a, const MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) {
            const double x = a(i, j), y = b(i, j);
            if (!(x == y || (std::isnan(x) && std::isnan(y)))) return false;
        }
    return true;
}

bool exact_eq(const VectorXd& a, const VectorXd& b) {
    return exact_eq(MatrixXd(a), MatrixXd(b));
}

StatePosterior posterior_from_means(const MatrixXd& means, double diag) {
    StatePosterior p;
    p.means = means;
    const int n = static_cast<int>(means.size());
    p.cov = BandedSpd(n, 0);
    for (int i = 0; i < n; ++i) p.cov.at(i, i) = diag;
    return p;
}

}  // namespace

TEST_CASE("model json round trips both observation heads") {
    ModelBundle lin;
    lin.latent = testsupport::make_latent(3, 2, 41);
    lin.observation = testsupport::make_linear_obs(4, 3, 42);
    lin.meta.seed = 0xdeadbeefcafef00dULL;
    lin.meta.provenance = "anneal_fit";
    lin.meta.training_log = {{"anneal[0] sigma=1", -123.456, -130.25, 12},
                             {"anneal[1] sigma=0.1", -98.7, -101.0, 9}};

    const std::string text = model_to_json(lin);
    const ModelBundle back = model_from_json(text);
    CHECK(back.latent.phi == lin.latent.phi);
    CHECK(exact_eq(back.latent.mu0, lin.latent.mu0));
    CHECK(exact_eq(back.latent.A, lin.latent.A));
    CHECK(exact_eq(back.latent.W, lin.latent.W));
    CHECK(exact_eq(back.latent.h, lin.latent.h));
    CHECK(exact_eq(back.latent.C, lin.latent.C));
    CHECK(exact_eq(back.latent.sigma, lin.latent.sigma));
    CHECK(!back.is_bold());
    CHECK(exact_eq(back.B(), lin.B()));
    CHECK(exact_eq(back.gamma(), lin.gamma()));
    CHECK(back.meta.seed == lin.meta.seed);
    CHECK(back.meta.provenance == lin.meta.provenance);
    REQUIRE(back.meta.training_log.size() == 2);
    CHECK(back.meta.training_log[1].step == "anneal[1] sigma=0.1");
    CHECK(back.meta.training_log[1].q == -98.7);
    CHECK(back.meta.training_log[0].q_rescaled == -130.25);
    CHECK(back.meta.training_log[0].em_iterations == 12);

    ModelBundle bold;
    bold.latent = testsupport::make_latent(2, 0, 43, Nonlinearity::identity);
    bold.observation = testsupport::make_bold_obs(3, 2, 2, 44, canonical_hrf(2.0).taps);
    std::get<ObsParamsBold>(bold.observation).hrf.tr = 2.0;
    const ModelBundle bback = model_from_json(model_to_json(bold));
    REQUIRE(bback.is_bold());
    CHECK(bback.latent.phi == Nonlinearity::identity);
    const auto& bo = std::get<ObsParamsBold>(bback.observation);
    const auto& orig = std::get<ObsParamsBold>(bold.observation);
    CHECK(exact_eq(bo.B, orig.B));
    CHECK(exact_eq(bo.J, orig.J));
    CHECK(exact_eq(bo.gamma, orig.gamma));
    CHECK(bo.hrf.tr == 2.0);
    CHECK(exact_eq(bo.hrf.taps, orig.hrf.taps));

    save_model(bold, tmp_path("model_bold.json"));
    const ModelBundle fback = load_model(tmp_path("model_bold.json"));
    CHECK(exact_eq(fback.B(), bold.B()));
    CHECK(fback.P() == 2);
}

TEST_CASE("model json rejects damaged or foreign documents") {
    ModelBundle m;
    m.latent = testsupport::make_latent(2, 0, 51);
    m.observation = testsupport::make_linear_obs(2, 2, 52);
    std::string text = model_to_json(m);

    CHECK(thrown_code([&] { model_from_json(text.substr(0, text.size() / 2)); }) ==
          ErrorCode::parse_error);
    CHECK(thrown_code([&] { model_from_json("{\"schema\":\"plrnn-trajectory\",\"version\":1}"); }) ==
          ErrorCode::parse_error);

    const std::string versioned = [&] {
        std::string t = text;
        const auto pos = t.find("\"version\": 1");
        REQUIRE(pos != std::string::npos);
        t.replace(pos, 12, "\"version\": 7");
        return t;
    }();
    CHECK(thrown_code([&] { model_from_json(versioned); }) == ErrorCode::parse_error);

    // structural constraints still hold after a read: writers refuse to emit
    // a latent block whose coupling matrix has a nonzero diagonal
    ModelBundle bad = m;
    bad.latent.W(0, 0) = 0.2;
    CHECK(thrown_code([&] { model_to_json(bad); }) == ErrorCode::invalid_argument);

    CHECK(thrown_code([&] { load_model(tmp_path("missing_subdir/nope.json")); }) ==
          ErrorCode::io_error);
}

TEST_CASE("fit checkpoint carries the model with its posterior summary") {
    const PlrnnParams truth = testsupport::make_latent(2, 0, 45);
    const Trajectory z = generate_latent(truth, 60, 46, false);
    const ObsParamsLinear obs = testsupport::make_linear_obs(3, 2, 47);
    const Trajectory x = observe_linear(obs, z, truth.phi, 48);

    AnnealConfig cfg;
    cfg.M = 2;
    cfg.seed = 49;
    cfg.em_max_iterations = 15;
    const FitResult fit = anneal_fit(x.values, nullptr, nullptr, cfg);
    REQUIRE(fit.success);

    const FitCheckpoint ck = make_checkpoint(fit.model, fit.posterior);
    CHECK(ck.posterior_means.rows() == 60);
    CHECK(ck.posterior_vars.minCoeff() > 0.0);

    save_checkpoint(ck, tmp_path("fit.ckpt.json"));
    const FitCheckpoint back = load_checkpoint(tmp_path("fit.ckpt.json"));
    CHECK(exact_eq(back.model.latent.A, ck.model.latent.A));
    CHECK(exact_eq(back.model.latent.W, ck.model.latent.W));
    CHECK(exact_eq(back.model.B(), ck.model.B()));
    CHECK(back.model.meta.training_log.size() == ck.model.meta.training_log.size());
    CHECK(exact_eq(back.posterior_means, ck.posterior_means));
    CHECK(exact_eq(back.posterior_vars, ck.posterior_vars));
    CHECK(back.q_map == ck.q_map);
    CHECK(back.entropy == ck.entropy);

    StatePosterior mismatched = fit.posterior;
    mismatched.means = MatrixXd::Zero(10, 2);
    CHECK(thrown_code([&] { make_checkpoint(fit.model, mismatched); }) ==
          ErrorCode::dimension_mismatch);
}

TEST_CASE("trajectory csv round trips values inputs and nuisance") {
    const PlrnnParams p = testsupport::make_latent(2, 2, 61);
    const MatrixXd S = testsupport::random_inputs(40, 2, 62);
    Trajectory traj = generate_latent(p, 40, 63, false, S);
    traj.dt = 0.05;
    traj.nuisance = testsupport::random_inputs(40, 1, 64);

    save_trajectory_csv(traj, tmp_path("latent.csv"), "z");
    const std::string text = read_text_file(tmp_path("latent.csv"));
    CHECK(text.substr(0, text.find('\n')) == "t,z1,z2,s1,s2,r1");

    const Trajectory back = load_trajectory_csv(tmp_path("latent.csv"));
    CHECK(exact_eq(back.values, traj.values));
    REQUIRE(back.inputs.has_value());
    CHECK(exact_eq(*back.inputs, *traj.inputs));
    REQUIRE(back.nuisance.has_value());
    CHECK(exact_eq(*back.nuisance, *traj.nuisance));
    CHECK(back.dt == 0.05);

    // plain observation file, no inputs
    Trajectory xonly;
    xonly.values = testsupport::random_inputs(5, 3, 65);
    save_trajectory_csv(xonly, tmp_path("obs.csv"));
    const Trajectory xback = load_trajectory_csv(tmp_path("obs.csv"));
    CHECK(exact_eq(xback.values, xonly.values));
    CHECK(!xback.inputs);
    CHECK(xback.dt == 1.0);

    // a prefix that collides with the input block names is refused
    CHECK(thrown_code([&] { save_trajectory_csv(xonly, tmp_path("bad.csv"), "s"); }) ==
          ErrorCode::invalid_argument);
}

TEST_CASE("trajectory csv reader reports the offending cell") {
    write_text_file(tmp_path("corrupt.csv"), "t,x1,x2\n0,1.5,2.5\n1,oops,2.5\n");
    try {
        load_trajectory_csv(tmp_path("corrupt.csv"));
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::parse_error);
        CHECK(std::string(e.what()).find("line 3, column 2") != std::string::npos);
        CHECK(std::string(e.what()).find("oops") != std::string::npos);
    }

    write_text_file(tmp_path("ragged.csv"), "t,x1,x2\n0,1.5\n");
    CHECK(thrown_code([&] { load_trajectory_csv(tmp_path("ragged.csv")); }) ==
          ErrorCode::parse_error);

    write_text_file(tmp_path("headerless.csv"), "0,1.5,2.5\n1,0.5,0.25\n");
    CHECK(thrown_code([&] { load_trajectory_csv(tmp_path("headerless.csv")); }) ==
          ErrorCode::parse_error);

    // value column may not follow the input block
    write_text_file(tmp_path("order.csv"), "t,s1,x1\n0,1,2\n");
    CHECK(thrown_code([&] { load_trajectory_csv(tmp_path("order.csv")); }) ==
          ErrorCode::parse_error);
}

TEST_CASE("trajectory json keeps dt and the unstable flag") {
    Trajectory traj;
    traj.values = testsupport::random_inputs(12, 2, 66);
    traj.values(11, 1) = 3.5e7;  // a run cut short by the divergence guard
    traj.inputs = testsupport::random_inputs(12, 1, 67);
    traj.dt = 0.72;
    traj.unstable = true;

    const Trajectory back = trajectory_from_json(trajectory_to_json(traj));
    CHECK(exact_eq(back.values, traj.values));
    REQUIRE(back.inputs.has_value());
    CHECK(exact_eq(*back.inputs, *traj.inputs));
    CHECK(!back.nuisance);
    CHECK(back.dt == 0.72);
    CHECK(back.unstable);

    save_trajectory_json(traj, tmp_path("traj.json"));
    CHECK(load_trajectory_json(tmp_path("traj.json")).unstable);
}

TEST_CASE("matrix csv sniffs headers and validates cells") {
    MatrixXd table(3, 2);
    table << 0, 0.125, 1, 0.0625, 2, std::numeric_limits<double>::quiet_NaN();

    save_matrix_csv(table, {"n", "mse_obs"}, tmp_path("mse.csv"));
    std::vector<std::string> cols;
    const MatrixXd back = load_matrix_csv(tmp_path("mse.csv"), &cols);
    REQUIRE(cols.size() == 2);
    CHECK(cols[0] == "n");
    CHECK(cols[1] == "mse_obs");
    CHECK(exact_eq(back, table));

    save_matrix_csv(table.topRows(2), {}, tmp_path("plain.csv"));
    std::vector<std::string> none;
    const MatrixXd pback = load_matrix_csv(tmp_path("plain.csv"), &none);
    CHECK(none.empty());
    CHECK(exact_eq(pback, MatrixXd(table.topRows(2))));

    // a numeric column name would make the header indistinguishable from data
    CHECK(thrown_code([&] { save_matrix_csv(table, {"n", "42"}, tmp_path("x.csv")); }) ==
          ErrorCode::invalid_argument);
    CHECK(thrown_code([&] { save_matrix_csv(table, {"n"}, tmp_path("x.csv")); }) ==
          ErrorCode::dimension_mismatch);
}

TEST_CASE("annealing trace csv round trips") {
    const std::vector<TrainingStepLog> log = {{"anneal[0] sigma=1", -201.5, -230.75, 18},
                                              {"anneal[1] sigma=0.1", -150.25, -160.5, 11},
                                              {"final", -140.0, -140.0, 3}};
    save_q_trace_csv(log, tmp_path("qtrace.csv"));
    const auto back = load_q_trace_csv(tmp_path("qtrace.csv"));
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < log.size(); ++i) {
        CHECK(back[i].step == log[i].step);
        CHECK(back[i].q == log[i].q);
        CHECK(back[i].q_rescaled == log[i].q_rescaled);
        CHECK(back[i].em_iterations == log[i].em_iterations);
    }

    CHECK(thrown_code([&] {
              save_q_trace_csv({{"bad,step", 0.0, 0.0, 1}}, tmp_path("bad.csv"));
          }) == ErrorCode::invalid_argument);

    write_text_file(tmp_path("noheader.csv"), "final,-1,-1,2\n");
    CHECK(thrown_code([&] { load_q_trace_csv(tmp_path("noheader.csv")); }) ==
          ErrorCode::parse_error);
}

TEST_CASE("response kernel csv round trips") {
    const HrfKernel hrf = canonical_hrf(1.5);
    save_hrf_csv(hrf, tmp_path("hrf.csv"));
    const HrfKernel back = load_hrf_csv(tmp_path("hrf.csv"), 1.5);
    CHECK(back.tr == 1.5);
    CHECK(exact_eq(back.taps, hrf.taps));

    // headerless files load the same way
    write_text_file(tmp_path("hrf_plain.csv"), "0\n0.5\n1\n0.25\n");
    const HrfKernel plain = load_hrf_csv(tmp_path("hrf_plain.csv"), 2.0);
    REQUIRE(plain.n() == 4);
    CHECK(plain.taps(1) == 0.5);
    CHECK(plain.tr == 2.0);

    CHECK(thrown_code([&] { load_hrf_csv(tmp_path("hrf.csv"), 0.0); }) ==
          ErrorCode::invalid_argument);
    write_text_file(tmp_path("hrf_bad.csv"), "tap\n0.5\nwat\n");
    CHECK(thrown_code([&] { load_hrf_csv(tmp_path("hrf_bad.csv"), 1.0); }) ==
          ErrorCode::parse_error);
}

TEST_CASE("metric reports round trip through json") {
    // observation-space divergence on two real point clouds
    const MatrixXd a = testsupport::random_inputs(400, 2, 71);
    const MatrixXd b = testsupport::random_inputs(400, 2, 72) * 1.3;
    const KlReport kl = kl_x(a, b);
    const KlReport kback = kl_report_from_json(report_to_json(kl));
    CHECK(kback.kl == kl.kl);
    CHECK(kback.kl_normalized == kl.kl_normalized);
    CHECK(kback.normalizer == kl.normalizer);
    CHECK(kback.bins_total == kl.bins_total);
    CHECK(kback.occupied_true == kl.occupied_true);
    CHECK(kback.occupied_gen == kl.occupied_gen);
    CHECK(kback.occupied_union == kl.occupied_union);
    CHECK(kback.T_true == kl.T_true);
    CHECK(kback.T_gen == kl.T_gen);
    CHECK(kback.clamped_true == kl.clamped_true);
    CHECK(kback.clamp_warning == kl.clamp_warning);

    // latent-space divergence from an actual posterior
    const MatrixXd means = testsupport::random_inputs(30, 2, 73);
    GaussianMixture gen;
    gen.means = means.array() + 0.4;
    gen.vars = MatrixXd::Ones(30, 2);
    const KlzReport klz = kl_z(posterior_from_means(means, 0.5), gen, 4000, 74);
    const KlzReport zback = klz_report_from_json(report_to_json(klz));
    CHECK(zback.kl_mc == klz.kl_mc);
    CHECK(zback.mc_standard_error == klz.mc_standard_error);
    CHECK(zback.kl_variational == klz.kl_variational);
    CHECK(zback.kl_reference == klz.kl_reference);
    CHECK(zback.kl_normalized == klz.kl_normalized);
    CHECK(zback.degenerate == klz.degenerate);
    CHECK(zback.n_samples == 4000);
    CHECK(zback.variance_floor == klz.variance_floor);

    // nonfinite values survive the trip: NaN and both infinities
    LyapunovEstimate ly;
    ly.lambda_max = 0.19;
    ly.d0 = 1e-8;
    ly.fit_lo = 1;
    ly.fit_hi = 14;
    ly.r2 = 0.997;
    ly.dt = 0.05;
    ly.curve.resize(4);
    ly.curve << -18.4, std::numeric_limits<double>::quiet_NaN(),
        std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity();
    const LyapunovEstimate lback = lyapunov_from_json(report_to_json(ly));
    CHECK(lback.lambda_max == 0.19);
    CHECK(lback.fit_hi == 14);
    CHECK(exact_eq(lback.curve, ly.curve));

    PredictionMse mse;
    mse.obs = VectorXd::LinSpaced(6, 0.0, 0.5);
    mse.state = VectorXd::LinSpaced(6, 0.0, 0.25);
    const PredictionMse mback = prediction_mse_from_json(report_to_json(mse));
    CHECK(exact_eq(mback.obs, mse.obs));
    CHECK(exact_eq(mback.state, mse.state));

    // cross-reading a different report type is refused
    CHECK(thrown_code([&] { kl_report_from_json(report_to_json(klz)); }) ==
          ErrorCode::parse_error);
}

TEST_CASE("dynamics report round trips fixed points and attractors") {
    // two winners competing through mutual inhibition plus the saddle between
    PlrnnParams p;
    p.A = (VectorXd(2) << 0.5, 0.5).finished().asDiagonal();
    p.W = MatrixXd::Zero(2, 2);
    p.W(0, 1) = -0.75;
    p.W(1, 0) = -0.75;
    p.h = VectorXd::Ones(2);
    p.mu0 = VectorXd::Zero(2);
    p.sigma = VectorXd::Constant(2, 0.05);
    p.C = MatrixXd(2, 0);

    const AttractorSet set = detect_attractors(p, 40, 400, 7);
    REQUIRE(set.fixed_points.size() == 3);
    REQUIRE(!set.attractors.empty());

    const std::string text = report_to_json(set);
    const AttractorSet back = attractor_set_from_json(text);
    CHECK(back.n_stable == set.n_stable);
    CHECK(back.n_unstable == set.n_unstable);
    CHECK(back.n_unbounded == set.n_unbounded);
    REQUIRE(back.fixed_points.size() == set.fixed_points.size());
    for (std::size_t i = 0; i < set.fixed_points.size(); ++i) {
        const auto& fp = set.fixed_points[i];
        const auto& fb = back.fixed_points[i];
        CHECK(exact_eq(fb.z_star, fp.z_star));
        CHECK((fb.region == fp.region).all());
        REQUIRE(fb.eigenvalues.size() == fp.eigenvalues.size());
        for (int k = 0; k < fp.eigenvalues.size(); ++k) CHECK(fb.eigenvalues(k) == fp.eigenvalues(k));
        CHECK(fb.consistent == fp.consistent);
        CHECK(fb.stable == fp.stable);
        CHECK(fb.degenerate == fp.degenerate);
    }
    REQUIRE(back.attractors.size() == set.attractors.size());
    for (std::size_t i = 0; i < set.attractors.size(); ++i) {
        const auto& a = set.attractors[i];
        const auto& ab = back.attractors[i];
        CHECK(ab.kind == a.kind);
        CHECK(exact_eq(ab.segment, a.segment));
        CHECK((ab.live == a.live).all());
        CHECK(ab.basin_hits == a.basin_hits);
        CHECK(ab.matched_fixed_point == a.matched_fixed_point);
    }
}
