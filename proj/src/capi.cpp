#include "plrnnssm.h"

#include <cstdlib>
#include <cstring>
#include <optional>
#include <string>
#include <utility>

#include "plrnn/hrf.hpp"
#include "plrnn/pipeline.hpp"
#include "plrnn/simulate.hpp"

struct psm_model {
    plrnn::ModelBundle bundle;
};

struct psm_trajectory {
    plrnn::Trajectory traj;
};

namespace {

using plrnn::Error;
using plrnn::ErrorCode;
using plrnn::MatrixXd;
using plrnn::ModelBundle;
using plrnn::Trajectory;

// the C enum mirrors ErrorCode value for value so codes pass through a cast
static_assert(static_cast<int>(ErrorCode::invalid_argument) == PSM_INVALID_ARGUMENT);
static_assert(static_cast<int>(ErrorCode::dimension_mismatch) == PSM_DIMENSION_MISMATCH);
static_assert(static_cast<int>(ErrorCode::io_error) == PSM_IO_ERROR);
static_assert(static_cast<int>(ErrorCode::parse_error) == PSM_PARSE_ERROR);
static_assert(static_cast<int>(ErrorCode::singular_system) == PSM_SINGULAR_SYSTEM);
static_assert(static_cast<int>(ErrorCode::not_converged) == PSM_NOT_CONVERGED);
static_assert(static_cast<int>(ErrorCode::unstable) == PSM_UNSTABLE);
static_assert(static_cast<int>(ErrorCode::internal) == PSM_INTERNAL);

thread_local std::string t_last_error;

template <typename Fn>
psm_status guarded(Fn&& fn) {
    try {
        fn();
        t_last_error.clear();
        return PSM_OK;
    } catch (const Error& e) {
        t_last_error = e.what();
        return static_cast<psm_status>(static_cast<int>(e.code()));
    } catch (const std::exception& e) {
        t_last_error = e.what();
        return PSM_INTERNAL;
    } catch (...) {
        t_last_error = "unknown failure";
        return PSM_INTERNAL;
    }
}

psm_status fail_null(const char* what) {
    t_last_error = std::string(what) + " must not be null";
    return PSM_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (!p) throw std::bad_alloc();
    std::memcpy(p, s.c_str(), s.size() + 1);
    return p;
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

extern "C" {

const char* psm_version(void) {
#ifdef PLRNNSSM_VERSION
    return PLRNNSSM_VERSION;
#else
    return "0.0.0";
#endif
}

const char* psm_last_error(void) { return t_last_error.c_str(); }

void psm_string_free(char* s) { std::free(s); }

/* ------------------------------------------------------------------ */

psm_status psm_model_load(const char* path, psm_model** out) {
    if (!path) return fail_null("path");
    if (!out) return fail_null("out");
    return guarded([&] { *out = new psm_model{plrnn::load_model(path)}; });
}

psm_status psm_model_from_json(const char* json_text, psm_model** out) {
    if (!json_text) return fail_null("json_text");
    if (!out) return fail_null("out");
    return guarded([&] { *out = new psm_model{plrnn::model_from_json(json_text)}; });
}

psm_status psm_model_save(const psm_model* model, const char* path) {
    if (!model) return fail_null("model");
    if (!path) return fail_null("path");
    return guarded([&] { plrnn::save_model(model->bundle, path); });
}

psm_status psm_model_to_json(const psm_model* model, int indent, char** out_json) {
    if (!model) return fail_null("model");
    if (!out_json) return fail_null("out_json");
    return guarded([&] { *out_json = dup_string(plrnn::model_to_json(model->bundle, indent)); });
}

psm_status psm_model_dims(const psm_model* model, int32_t* M, int32_t* N, int32_t* K,
                          int32_t* P) {
    if (!model) return fail_null("model");
    return guarded([&] {
        if (M) *M = model->bundle.M();
        if (N) *N = model->bundle.N();
        if (K) *K = model->bundle.K();
        if (P) *P = model->bundle.P();
    });
}

void psm_model_free(psm_model* model) { delete model; }

/* ------------------------------------------------------------------ */

psm_status psm_trajectory_create(int64_t T, int32_t dim, const double* values, double dt,
                                 psm_trajectory** out) {
    if (!values) return fail_null("values");
    if (!out) return fail_null("out");
    return guarded([&] {
        plrnn::require(T >= 1 && dim >= 1, ErrorCode::invalid_argument,
                       "trajectory: T and dim must be >= 1");
        Trajectory t;
        t.values = Eigen::Map<const RowMajor>(values, T, dim);
        t.dt = dt;
        t.validate();
        *out = new psm_trajectory{std::move(t)};
    });
}

psm_status psm_trajectory_load_csv(const char* path, psm_trajectory** out) {
    if (!path) return fail_null("path");
    if (!out) return fail_null("out");
    return guarded([&] { *out = new psm_trajectory{plrnn::load_trajectory_csv(path)}; });
}

psm_status psm_trajectory_save_csv(const psm_trajectory* traj, const char* path) {
    if (!traj) return fail_null("traj");
    if (!path) return fail_null("path");
    return guarded([&] { plrnn::save_trajectory_csv(traj->traj, path); });
}

psm_status psm_trajectory_load_json(const char* path, psm_trajectory** out) {
    if (!path) return fail_null("path");
    if (!out) return fail_null("out");
    return guarded([&] { *out = new psm_trajectory{plrnn::load_trajectory_json(path)}; });
}

psm_status psm_trajectory_save_json(const psm_trajectory* traj, const char* path) {
    if (!traj) return fail_null("traj");
    if (!path) return fail_null("path");
    return guarded([&] { plrnn::save_trajectory_json(traj->traj, path); });
}

psm_status psm_trajectory_dims(const psm_trajectory* traj, int64_t* T, int32_t* dim,
                               int32_t* n_inputs, int32_t* n_nuisance) {
    if (!traj) return fail_null("traj");
    return guarded([&] {
        if (T) *T = traj->traj.T();
        if (dim) *dim = traj->traj.dim();
        if (n_inputs)
            *n_inputs = traj->traj.inputs ? static_cast<int32_t>(traj->traj.inputs->cols()) : 0;
        if (n_nuisance)
            *n_nuisance =
                traj->traj.nuisance ? static_cast<int32_t>(traj->traj.nuisance->cols()) : 0;
    });
}

psm_status psm_trajectory_dt(const psm_trajectory* traj, double* out_dt) {
    if (!traj) return fail_null("traj");
    if (!out_dt) return fail_null("out_dt");
    return guarded([&] { *out_dt = traj->traj.dt; });
}

psm_status psm_trajectory_unstable(const psm_trajectory* traj, int32_t* out_flag) {
    if (!traj) return fail_null("traj");
    if (!out_flag) return fail_null("out_flag");
    return guarded([&] { *out_flag = traj->traj.unstable ? 1 : 0; });
}

psm_status psm_trajectory_values(const psm_trajectory* traj, double* out, size_t capacity) {
    if (!traj) return fail_null("traj");
    if (!out) return fail_null("out");
    return guarded([&] {
        const auto need = static_cast<size_t>(traj->traj.values.size());
        plrnn::require(capacity >= need, ErrorCode::dimension_mismatch,
                       "values buffer holds " + std::to_string(capacity) +
                           " elements, the trajectory needs " + std::to_string(need));
        Eigen::Map<RowMajor>(out, traj->traj.values.rows(), traj->traj.values.cols()) =
            traj->traj.values;
    });
}

psm_status psm_trajectory_attach_csv(psm_trajectory* traj, const char* role, const char* path) {
    if (!traj) return fail_null("traj");
    if (!role) return fail_null("role");
    if (!path) return fail_null("path");
    return guarded([&] {
        const std::string which = role;
        plrnn::require(which == "inputs" || which == "nuisance", ErrorCode::invalid_argument,
                       "attach: role must be 'inputs' or 'nuisance', got '" + which + "'");
        MatrixXd X = plrnn::load_channel_csv(path);
        plrnn::require(X.rows() == traj->traj.T(), ErrorCode::dimension_mismatch,
                       "attach: file has " + std::to_string(X.rows()) +
                           " rows, the trajectory has " + std::to_string(traj->traj.T()));
        if (which == "inputs")
            traj->traj.inputs = std::move(X);
        else
            traj->traj.nuisance = std::move(X);
        traj->traj.validate();
    });
}

psm_status psm_trajectory_standardize(psm_trajectory* traj, double* out_mean,
                                      double* out_scale) {
    if (!traj) return fail_null("traj");
    return guarded([&] {
        auto [scaled, tf] = plrnn::standardize(traj->traj);
        if (out_mean)
            Eigen::Map<plrnn::VectorXd>(out_mean, tf.mean.size()) = tf.mean;
        if (out_scale)
            Eigen::Map<plrnn::VectorXd>(out_scale, tf.scale.size()) = tf.scale;
        traj->traj = std::move(scaled);
    });
}

void psm_trajectory_free(psm_trajectory* traj) { delete traj; }

/* ------------------------------------------------------------------ */

psm_status psm_sample_benchmark(const char* system, int64_t T, double dt, int32_t sub_sample,
                                double noise_var, uint64_t seed, int32_t burn_in,
                                psm_trajectory** out) {
    if (!system) return fail_null("system");
    if (!out) return fail_null("out");
    return guarded([&] {
        const plrnn::OdeSystem sys = plrnn::benchmark_system(system);
        plrnn::SamplingSpec spec;
        spec.T = static_cast<int>(T);
        spec.dt = dt;
        spec.sub_sample = sub_sample;
        spec.noise_var = noise_var;
        spec.seed = seed;
        spec.burn_in = burn_in;
        *out = new psm_trajectory{plrnn::rk4_sample(sys, spec)};
    });
}

psm_status psm_model_generate(const psm_model* model, int64_t T, uint64_t seed,
                              int32_t deterministic, const psm_trajectory* inputs,
                              psm_trajectory** out_latent) {
    if (!model) return fail_null("model");
    if (!out_latent) return fail_null("out_latent");
    return guarded([&] {
        std::optional<MatrixXd> S;
        if (inputs) S = inputs->traj.values;
        *out_latent = new psm_trajectory{plrnn::generate_latent(
            model->bundle.latent, static_cast<int>(T), seed, deterministic != 0, S)};
    });
}

psm_status psm_model_observe(const psm_model* model, const psm_trajectory* latent,
                             int32_t with_noise, uint64_t seed, psm_trajectory** out) {
    if (!model) return fail_null("model");
    if (!latent) return fail_null("latent");
    if (!out) return fail_null("out");
    return guarded([&] {
        const ModelBundle& b = model->bundle;
        std::optional<uint64_t> s;
        if (with_noise) s = seed;
        Trajectory obs =
            b.is_bold() ? plrnn::observe_bold(std::get<plrnn::ObsParamsBold>(b.observation),
                                              latent->traj, latent->traj.nuisance, s)
                        : plrnn::observe_linear(std::get<plrnn::ObsParamsLinear>(b.observation),
                                                latent->traj, b.latent.phi, s);
        *out = new psm_trajectory{std::move(obs)};
    });
}

/* ------------------------------------------------------------------ */

psm_status psm_kl_x(const psm_trajectory* data, const psm_trajectory* generated, double* out_kl,
                    double* out_normalized) {
    if (!data) return fail_null("data");
    if (!generated) return fail_null("generated");
    return guarded([&] {
        const plrnn::KlReport rep = plrnn::kl_x(data->traj.values, generated->traj.values);
        if (out_kl) *out_kl = rep.kl;
        if (out_normalized) *out_normalized = rep.kl_normalized;
    });
}

psm_status psm_spectrum_correlation(const psm_trajectory* a, const psm_trajectory* b,
                                    double* out) {
    if (!a) return fail_null("a");
    if (!b) return fail_null("b");
    if (!out) return fail_null("out");
    return guarded(
        [&] { *out = plrnn::power_spectrum_correlation(a->traj.values, b->traj.values); });
}

/* ------------------------------------------------------------------ */

psm_status psm_fit_dataset(const char* config_json, char** out_summary_json) {
    if (!config_json) return fail_null("config_json");
    if (!out_summary_json) return fail_null("out_summary_json");
    return guarded([&] {
        const plrnn::DatasetConfig config = plrnn::dataset_config_from_json(config_json);
        const plrnn::DatasetResult result = plrnn::fit_dataset(config);
        *out_summary_json = dup_string(plrnn::dataset_result_summary(result));
    });
}

psm_status psm_evaluate(const psm_model* model, const psm_trajectory* data,
                        const char* options_json, char** out_report_json) {
    if (!model) return fail_null("model");
    if (!data) return fail_null("data");
    if (!out_report_json) return fail_null("out_report_json");
    return guarded([&] {
        const plrnn::EvalOptions opts =
            options_json ? plrnn::eval_options_from_json(options_json) : plrnn::EvalOptions{};
        const plrnn::EvalReport rep = plrnn::evaluate_model(model->bundle, data->traj, opts);
        *out_report_json = dup_string(plrnn::eval_report_to_json(rep));
    });
}

psm_status psm_analyze(const psm_model* model, const char* options_json,
                       char** out_report_json) {
    if (!model) return fail_null("model");
    if (!out_report_json) return fail_null("out_report_json");
    return guarded([&] {
        const plrnn::AnalyzeOptions opts = options_json
                                               ? plrnn::analyze_options_from_json(options_json)
                                               : plrnn::AnalyzeOptions{};
        const plrnn::DynamicsSummary summary = plrnn::analyze_model(model->bundle, opts);
        *out_report_json = dup_string(plrnn::dynamics_summary_to_json(summary));
    });
}

psm_status psm_run_benchmark_suite(const char* config_json, char** out_report_json) {
    if (!config_json) return fail_null("config_json");
    if (!out_report_json) return fail_null("out_report_json");
    return guarded([&] {
        const plrnn::SuiteConfig config = plrnn::suite_config_from_json(config_json);
        const plrnn::SuiteReport report = plrnn::run_benchmark_suite(config);
        *out_report_json = dup_string(plrnn::suite_report_to_json(report));
    });
}

}  // extern "C"
