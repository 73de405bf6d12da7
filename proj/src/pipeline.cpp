#include "plrnn/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <map>
#include <thread>
#include <utility>

#include "json_detail.hpp"
#include "plrnn/rng.hpp"
#include "plrnn/simulate.hpp"

namespace plrnn {
namespace {

namespace fs = std::filesystem;
using jsondetail::check_schema;
using jsondetail::dnum;
using jsondetail::dump;
using jsondetail::jnum;
using jsondetail::json;
using jsondetail::parse_json;
using jsondetail::translating;

const char* to_string(Protocol p) { return p == Protocol::anneal ? "anneal" : "random_init"; }

Protocol protocol_from_string(const std::string& s) {
    if (s == "anneal") return Protocol::anneal;
    if (s == "random_init") return Protocol::random_init;
    throw Error(ErrorCode::parse_error, "unknown protocol '" + s + "'");
}

std::string timestamp_utc() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

double median_of(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct RunOutput {
    SuiteRun rec;
    std::optional<ModelBundle> model;
};

RunOutput run_one(const SuiteConfig& config, const OdeSystem& sys, int run_index, int M,
                  Protocol proto) {
    RunOutput out;
    SuiteRun& rec = out.rec;
    rec.system = config.system;
    rec.run_index = run_index;
    rec.M = M;
    rec.protocol = proto;
    CounterRng root = CounterRng(config.experiment_seed, /*stream=*/16)
                          .fork(static_cast<std::uint64_t>(run_index));
    rec.seed = root.next_u64();
    CounterRng stages(rec.seed, /*stream=*/16);
    const std::uint64_t sample_seed = stages.next_u64();
    const std::uint64_t fit_seed = stages.next_u64();
    const std::uint64_t gen_seed = stages.next_u64();
    const std::uint64_t obs_seed = stages.next_u64();
    const std::uint64_t lyap_seed = stages.next_u64();

    const auto t0 = std::chrono::steady_clock::now();
    try {
        SamplingSpec spec = config.sampling;
        spec.seed = sample_seed;
        const Trajectory sample = rk4_sample(sys, spec);
        auto [data, tf] = standardize(sample);

        AnnealConfig train = config.training;
        train.M = M;
        train.protocol = proto;
        train.seed = fit_seed;
        train.nonlinearity = config.nonlinearity;
        train.bold_head = false;
        FitResult fit = fit_timeseries(data.values, nullptr, nullptr, train);
        rec.fit_success = fit.success;
        rec.fit_stable = fit.stable;
        if (!fit.success) {
            rec.error = fit.error.empty() ? "fit failed" : fit.error;
        } else {
            const LatentProbe probe = probe_latent_dynamics(fit.model.latent, data.dt, lyap_seed);
            rec.det_unstable = probe.det_unstable;
            rec.terminal_delta = probe.terminal_delta;
            rec.lambda_gen = probe.lambda;

            Trajectory gen_z = generate_latent(fit.model.latent, config.generate_T, gen_seed,
                                               false);
            rec.gen_unstable = gen_z.unstable;
            const auto& lin = std::get<ObsParamsLinear>(fit.model.observation);
            const Trajectory x_gen = observe_linear(lin, gen_z, fit.model.latent.phi, obs_seed);

            const KlReport kl = kl_x(data.values, x_gen.values);
            rec.klx = kl.kl;
            rec.klx_normalized = kl.kl_normalized;
            try {
                rec.spectrum_correlation =
                    power_spectrum_correlation(data.values, x_gen.values);
            } catch (const Error&) {
                // generated run too short for a spectrum (cut off by the guard)
            }
            rec.success = rec.klx_normalized <= config.success_threshold;

            fit.model.meta.provenance = "benchmark-suite " + config.system + " run " +
                                        std::to_string(run_index) + " M=" + std::to_string(M) +
                                        " protocol=" + to_string(proto);
            out.model = std::move(fit.model);
        }
    } catch (const std::exception& e) {
        rec.error = e.what();
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

json run_to_obj(const SuiteRun& r) {
    json j;
    j["system"] = r.system;
    j["run_index"] = r.run_index;
    j["M"] = r.M;
    j["protocol"] = to_string(r.protocol);
    j["seed"] = r.seed;
    j["fit_success"] = r.fit_success;
    j["fit_stable"] = r.fit_stable;
    j["gen_unstable"] = r.gen_unstable;
    j["det_unstable"] = r.det_unstable;
    j["terminal_delta"] = jnum(r.terminal_delta);
    j["klx"] = jnum(r.klx);
    j["klx_normalized"] = jnum(r.klx_normalized);
    j["lambda_gen"] = jnum(r.lambda_gen);
    j["spectrum_correlation"] = jnum(r.spectrum_correlation);
    j["success"] = r.success;
    j["wall_seconds"] = jnum(r.wall_seconds);
    j["error"] = r.error;
    return j;
}

SuiteRun run_from_obj(const json& j) {
    SuiteRun r;
    r.system = j.at("system").get<std::string>();
    r.run_index = j.at("run_index").get<int>();
    r.M = j.at("M").get<int>();
    r.protocol = protocol_from_string(j.at("protocol").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.fit_success = j.at("fit_success").get<bool>();
    r.fit_stable = j.at("fit_stable").get<bool>();
    r.gen_unstable = j.at("gen_unstable").get<bool>();
    r.det_unstable = j.at("det_unstable").get<bool>();
    r.terminal_delta = dnum(j.at("terminal_delta"));
    r.klx = dnum(j.at("klx"));
    r.klx_normalized = dnum(j.at("klx_normalized"));
    r.lambda_gen = dnum(j.at("lambda_gen"));
    r.spectrum_correlation = dnum(j.at("spectrum_correlation"));
    r.success = j.at("success").get<bool>();
    r.wall_seconds = dnum(j.at("wall_seconds"));
    r.error = j.at("error").get<std::string>();
    return r;
}

json aggregate_to_obj(const SuiteAggregate& a) {
    json j;
    j["M"] = a.M;
    j["protocol"] = to_string(a.protocol);
    j["n_runs"] = a.n_runs;
    j["n_fit_success"] = a.n_fit_success;
    j["n_stable"] = a.n_stable;
    j["n_reconstructed"] = a.n_reconstructed;
    j["success_fraction"] = jnum(a.success_fraction);
    j["stable_fraction"] = jnum(a.stable_fraction);
    j["median_klx"] = jnum(a.median_klx);
    return j;
}

SuiteAggregate aggregate_from_obj(const json& j) {
    SuiteAggregate a;
    a.M = j.at("M").get<int>();
    a.protocol = protocol_from_string(j.at("protocol").get<std::string>());
    a.n_runs = j.at("n_runs").get<int>();
    a.n_fit_success = j.at("n_fit_success").get<int>();
    a.n_stable = j.at("n_stable").get<int>();
    a.n_reconstructed = j.at("n_reconstructed").get<int>();
    a.success_fraction = dnum(j.at("success_fraction"));
    a.stable_fraction = dnum(j.at("stable_fraction"));
    a.median_klx = dnum(j.at("median_klx"));
    return a;
}

std::string run_file_stem(int run_index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "run_%04d", run_index);
    return buf;
}

void write_suite_artifacts(const SuiteReport& report, const std::vector<RunOutput>& outputs,
                           const std::string& dir) {
    fs::create_directories(fs::path(dir) / "runs");
    fs::create_directories(fs::path(dir) / "models");
    for (const auto& out : outputs) {
        const std::string stem = run_file_stem(out.rec.run_index);
        write_text_file((fs::path(dir) / "runs" / (stem + ".json")).string(),
                        suite_run_to_json(out.rec) + "\n");
        if (out.model) save_model(*out.model, (fs::path(dir) / "models" / (stem + ".model.json")).string());
    }
    save_suite_report(report, (fs::path(dir) / "suite_report.json").string());
    save_suite_csv(report.runs, (fs::path(dir) / "suite_runs.csv").string());
}

const std::vector<std::string> kSuiteCsvHeader = {
    "run_index", "system", "M", "protocol", "seed", "fit_success", "fit_stable",
    "gen_unstable", "det_unstable", "terminal_delta", "klx", "klx_normalized",
    "lambda_gen", "spectrum_correlation", "success", "wall_seconds"};

double cell_to_double(const std::string& cell, const std::string& path) {
    double v = 0.0;
    const char* last = cell.data() + cell.size();
    const auto res = std::from_chars(cell.data(), last, v);
    require(res.ec == std::errc() && res.ptr == last, ErrorCode::parse_error,
            path + ": expected a number, got '" + cell + "'");
    return v;
}

template <typename Int>
Int cell_to_int(const std::string& cell, const std::string& path) {
    Int v{};
    const char* last = cell.data() + cell.size();
    const auto res = std::from_chars(cell.data(), last, v);
    require(res.ec == std::errc() && res.ptr == last, ErrorCode::parse_error,
            path + ": expected an integer, got '" + cell + "'");
    return v;
}

bool cell_to_bool(const std::string& cell, const std::string& path) {
    if (cell == "1") return true;
    if (cell == "0") return false;
    throw Error(ErrorCode::parse_error, path + ": expected 0 or 1, got '" + cell + "'");
}

}  // namespace

void SuiteConfig::validate() const {
    benchmark_system(system);  // throws on an unknown name
    require(n_seeds >= 0, ErrorCode::invalid_argument, "suite: n_seeds must be >= 0");
    require(!M_list.empty(), ErrorCode::invalid_argument, "suite: M list must be nonempty");
    for (const int m : M_list)
        require(m >= 1, ErrorCode::invalid_argument, "suite: M must be >= 1");
    require(!protocols.empty(), ErrorCode::invalid_argument, "suite: protocol list is empty");
    require(generate_T >= 2, ErrorCode::invalid_argument, "suite: generate_T must be >= 2");
    require(success_threshold > 0.0, ErrorCode::invalid_argument,
            "suite: success threshold must be positive");
    require(n_workers >= 1, ErrorCode::invalid_argument, "suite: n_workers must be >= 1");
    require(sampling.T >= 2, ErrorCode::invalid_argument, "suite: sampling.T must be >= 2");
}

std::vector<SuiteAggregate> aggregate_suite(const std::vector<SuiteRun>& runs) {
    std::map<std::pair<int, int>, SuiteAggregate> groups;
    std::map<std::pair<int, int>, std::vector<double>> klx;
    for (const auto& r : runs) {
        const std::pair<int, int> key{r.M, static_cast<int>(r.protocol)};
        SuiteAggregate& g = groups[key];
        g.M = r.M;
        g.protocol = r.protocol;
        ++g.n_runs;
        if (r.fit_success) ++g.n_fit_success;
        if (r.fit_stable) ++g.n_stable;
        if (r.success) ++g.n_reconstructed;
        if (std::isfinite(r.klx_normalized)) klx[key].push_back(r.klx_normalized);
    }
    std::vector<SuiteAggregate> out;
    out.reserve(groups.size());
    for (auto& [key, g] : groups) {
        g.success_fraction = static_cast<double>(g.n_reconstructed) / g.n_runs;
        g.stable_fraction = static_cast<double>(g.n_stable) / g.n_runs;
        g.median_klx = median_of(klx[key]);
        out.push_back(g);
    }
    return out;
}

SuiteReport run_benchmark_suite(const SuiteConfig& config) {
    config.validate();
    const OdeSystem sys = benchmark_system(config.system);

    struct Task {
        int run_index;
        int M;
        Protocol protocol;
    };
    std::vector<Task> tasks;
    int run_index = 0;
    for (int seed_i = 0; seed_i < config.n_seeds; ++seed_i)
        for (const int M : config.M_list)
            for (const Protocol proto : config.protocols)
                tasks.push_back({run_index++, M, proto});

    std::vector<RunOutput> outputs(tasks.size());
    const int workers =
        std::max(1, std::min<int>(config.n_workers, static_cast<int>(tasks.size())));
    if (workers <= 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i)
            outputs[i] = run_one(config, sys, tasks[i].run_index, tasks[i].M, tasks[i].protocol);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1))
                    outputs[i] =
                        run_one(config, sys, tasks[i].run_index, tasks[i].M, tasks[i].protocol);
            });
        for (auto& t : pool) t.join();
    }

    SuiteReport report;
    report.system = config.system;
    report.experiment_seed = config.experiment_seed;
    report.generate_T = config.generate_T;
    report.success_threshold = config.success_threshold;
    report.created = timestamp_utc();
    report.runs.reserve(outputs.size());
    for (const auto& out : outputs) report.runs.push_back(out.rec);
    report.aggregates = aggregate_suite(report.runs);

    if (!config.output_dir.empty()) write_suite_artifacts(report, outputs, config.output_dir);
    return report;
}

std::string suite_run_to_json(const SuiteRun& run, int indent) {
    json j;
    j["schema"] = "plrnn-suite-run";
    j["version"] = kSchemaVersion;
    j.update(run_to_obj(run));
    return dump(j, indent);
}

SuiteRun suite_run_from_json(const std::string& text) {
    return translating("suite run", [&] {
        const json j = parse_json(text, "suite run");
        check_schema(j, "plrnn-suite-run");
        return run_from_obj(j);
    });
}

std::string suite_report_to_json(const SuiteReport& report, int indent) {
    json j;
    j["schema"] = "plrnn-suite-report";
    j["version"] = kSchemaVersion;
    j["system"] = report.system;
    j["experiment_seed"] = report.experiment_seed;
    j["generate_T"] = report.generate_T;
    j["success_threshold"] = jnum(report.success_threshold);
    j["created"] = report.created;
    json runs = json::array();
    for (const auto& r : report.runs) runs.push_back(run_to_obj(r));
    j["runs"] = std::move(runs);
    json aggs = json::array();
    for (const auto& a : report.aggregates) aggs.push_back(aggregate_to_obj(a));
    j["aggregates"] = std::move(aggs);
    return dump(j, indent);
}

SuiteReport suite_report_from_json(const std::string& text) {
    return translating("suite report", [&] {
        const json j = parse_json(text, "suite report");
        check_schema(j, "plrnn-suite-report");
        SuiteReport report;
        report.system = j.at("system").get<std::string>();
        report.experiment_seed = j.at("experiment_seed").get<std::uint64_t>();
        report.generate_T = j.at("generate_T").get<int>();
        report.success_threshold = dnum(j.at("success_threshold"));
        report.created = j.at("created").get<std::string>();
        for (const json& r : j.at("runs")) report.runs.push_back(run_from_obj(r));
        for (const json& a : j.at("aggregates")) report.aggregates.push_back(aggregate_from_obj(a));
        return report;
    });
}

void save_suite_report(const SuiteReport& report, const std::string& path) {
    write_text_file(path, suite_report_to_json(report) + "\n");
}

SuiteReport load_suite_report(const std::string& path) {
    return suite_report_from_json(read_text_file(path));
}

void save_suite_csv(const std::vector<SuiteRun>& runs, const std::string& path) {
    std::string out;
    for (std::size_t i = 0; i < kSuiteCsvHeader.size(); ++i) {
        if (i) out += ',';
        out += kSuiteCsvHeader[i];
    }
    out += "\n";
    for (const auto& r : runs) {
        out += std::to_string(r.run_index);
        out += ',' + r.system;
        out += ',' + std::to_string(r.M);
        out += ','; out += to_string(r.protocol);
        out += ',' + std::to_string(r.seed);
        out += r.fit_success ? ",1" : ",0";
        out += r.fit_stable ? ",1" : ",0";
        out += r.gen_unstable ? ",1" : ",0";
        out += r.det_unstable ? ",1" : ",0";
        out += ',' + csv_number(r.terminal_delta);
        out += ',' + csv_number(r.klx);
        out += ',' + csv_number(r.klx_normalized);
        out += ',' + csv_number(r.lambda_gen);
        out += ',' + csv_number(r.spectrum_correlation);
        out += r.success ? ",1" : ",0";
        out += ',' + csv_number(r.wall_seconds);
        out += "\n";
    }
    write_text_file(path, out);
}

std::vector<SuiteRun> load_suite_csv(const std::string& path) {
    const CsvCells cells = load_csv_cells(path);
    require(cells.header == kSuiteCsvHeader, ErrorCode::parse_error,
            path + ": unexpected suite table header");
    std::vector<SuiteRun> runs;
    runs.reserve(cells.rows.size());
    for (const auto& row : cells.rows) {
        SuiteRun r;
        r.run_index = cell_to_int<int>(row[0], path);
        r.system = row[1];
        r.M = cell_to_int<int>(row[2], path);
        r.protocol = protocol_from_string(row[3]);
        r.seed = cell_to_int<std::uint64_t>(row[4], path);
        r.fit_success = cell_to_bool(row[5], path);
        r.fit_stable = cell_to_bool(row[6], path);
        r.gen_unstable = cell_to_bool(row[7], path);
        r.det_unstable = cell_to_bool(row[8], path);
        r.terminal_delta = cell_to_double(row[9], path);
        r.klx = cell_to_double(row[10], path);
        r.klx_normalized = cell_to_double(row[11], path);
        r.lambda_gen = cell_to_double(row[12], path);
        r.spectrum_correlation = cell_to_double(row[13], path);
        r.success = cell_to_bool(row[14], path);
        r.wall_seconds = cell_to_double(row[15], path);
        runs.push_back(std::move(r));
    }
    return runs;
}

// ---------------------------------------------------------------------------
// single-dataset pipeline

MatrixXd smooth_columns(const MatrixXd& x, double variance) {
    require(variance > 0.0, ErrorCode::invalid_argument, "smooth_columns: variance must be > 0");
    const double sd = std::sqrt(variance);
    const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sd)));
    VectorXd kernel(2 * radius + 1);
    for (int k = -radius; k <= radius; ++k)
        kernel(k + radius) = std::exp(-0.5 * k * k / variance);

    const int T = static_cast<int>(x.rows());
    MatrixXd out(T, x.cols());
    for (int t = 0; t < T; ++t) {
        const int lo = std::max(0, t - radius);
        const int hi = std::min(T - 1, t + radius);
        double wsum = 0.0;
        VectorXd acc = VectorXd::Zero(x.cols());
        for (int s = lo; s <= hi; ++s) {
            const double w = kernel(s - t + radius);
            wsum += w;
            acc += w * x.row(s).transpose();
        }
        out.row(t) = acc.transpose() / wsum;
    }
    return out;
}

void DatasetConfig::validate() const {
    require(!data_csv.empty(), ErrorCode::invalid_argument, "fit_dataset: data_csv is required");
    require(fs::exists(data_csv), ErrorCode::invalid_argument,
            "fit_dataset: data file not found: " + data_csv);
    if (declared_nuisance > 0)
        require(!nuisance_csv.empty(), ErrorCode::invalid_argument,
                "fit_dataset: " + std::to_string(declared_nuisance) +
                    " nuisance regressors declared but no nuisance_csv given");
    for (const std::string* p : {&inputs_csv, &nuisance_csv, &hrf_csv})
        if (!p->empty())
            require(fs::exists(*p), ErrorCode::invalid_argument,
                    "fit_dataset: file not found: " + *p);
    require(nuisance_csv.empty() || bold_head, ErrorCode::invalid_argument,
            "fit_dataset: nuisance regressors require the convolved observation head");
    require(M >= 1, ErrorCode::invalid_argument, "fit_dataset: M must be >= 1");
    require(klz_samples >= 2, ErrorCode::invalid_argument, "fit_dataset: klz_samples too small");
    require(dynamics_inits >= 1 && dynamics_T >= 10, ErrorCode::invalid_argument,
            "fit_dataset: dynamics probe needs inits >= 1 and T >= 10");
    require(hrf_tr > 0.0, ErrorCode::invalid_argument, "fit_dataset: hrf_tr must be positive");
}

MatrixXd load_channel_csv(const std::string& path) {
    std::vector<std::string> cols;
    MatrixXd X = load_matrix_csv(path, &cols);
    if (!cols.empty() && cols[0] == "t" && X.cols() > 1)
        X = X.rightCols(X.cols() - 1).eval();
    return X;
}

DatasetResult fit_dataset(const DatasetConfig& config) {
    config.validate();

    MatrixXd X = load_channel_csv(config.data_csv);
    require(X.rows() >= 2 && X.cols() >= 1, ErrorCode::invalid_argument,
            "fit_dataset: data must have at least 2 rows and 1 column");
    const int T = static_cast<int>(X.rows());

    std::optional<MatrixXd> S;
    if (!config.inputs_csv.empty() && config.use_inputs) {
        S = load_channel_csv(config.inputs_csv);
        require(S->rows() == T, ErrorCode::dimension_mismatch,
                "fit_dataset: inputs file has " + std::to_string(S->rows()) +
                    " rows, data has " + std::to_string(T));
    }
    std::optional<MatrixXd> R;
    if (!config.nuisance_csv.empty()) {
        R = load_channel_csv(config.nuisance_csv);
        require(R->rows() == T, ErrorCode::dimension_mismatch,
                "fit_dataset: nuisance file has " + std::to_string(R->rows()) +
                    " rows, data has " + std::to_string(T));
        if (config.declared_nuisance > 0)
            require(R->cols() == config.declared_nuisance, ErrorCode::dimension_mismatch,
                    "fit_dataset: nuisance file has " + std::to_string(R->cols()) +
                        " columns, " + std::to_string(config.declared_nuisance) + " declared");
    }

    if (config.smooth) X = smooth_columns(X, 1.0);

    Trajectory raw;
    raw.values = std::move(X);
    auto [data, tf] = standardize(raw);
    data.inputs = S;
    data.nuisance = R;

    AnnealConfig train = config.training;
    train.M = config.M;
    train.protocol = config.protocol;
    train.seed = config.seed;
    train.nonlinearity = config.nonlinearity;
    train.bold_head = config.bold_head;
    if (config.bold_head)
        train.hrf = config.hrf_csv.empty() ? canonical_hrf(config.hrf_tr)
                                           : load_hrf_csv(config.hrf_csv, config.hrf_tr);

    DatasetResult result;
    result.transform = tf;
    result.fit = fit_timeseries(data.values, S ? &*S : nullptr, R ? &*R : nullptr, train);
    result.standardized = data;
    if (!result.fit.success) {
        result.metric_error = result.fit.error.empty() ? "fit failed" : result.fit.error;
        return result;
    }

    result.fit.model.meta.provenance =
        "fit_dataset data=" + config.data_csv +
        " inputs=" + (S ? std::string("on") : std::string("off")) +
        " head=" + (config.bold_head ? std::string("bold") : std::string("linear")) +
        " smooth=" + (config.smooth ? std::string("on") : std::string("off")) +
        " M=" + std::to_string(config.M) + " protocol=" + to_string(config.protocol);

    CounterRng stages(config.seed, /*stream=*/18);
    const std::uint64_t mix_seed = stages.next_u64();
    const std::uint64_t klz_seed = stages.next_u64();
    const std::uint64_t dyn_seed = stages.next_u64();
    try {
        const GaussianMixture gen =
            generated_mixture(result.fit.model, T, mix_seed, S ? &*S : nullptr);
        result.klz = kl_z(result.fit.posterior, gen, config.klz_samples, klz_seed);
    } catch (const Error& e) {
        result.metric_error = std::string("latent divergence unavailable: ") + e.what();
    }
    try {
        result.dynamics = detect_attractors(result.fit.model.latent, config.dynamics_inits,
                                            config.dynamics_T, dyn_seed);
    } catch (const Error& e) {
        if (!result.metric_error.empty()) result.metric_error += "; ";
        result.metric_error += std::string("dynamics analysis unavailable: ") + e.what();
    }
    result.mse = n_step_ahead_mse(result.fit.model, result.fit.posterior, data.values,
                                  S ? &*S : nullptr, R ? &*R : nullptr);

    if (!config.output_dir.empty()) {
        fs::create_directories(config.output_dir);
        const fs::path dir(config.output_dir);
        save_model(result.fit.model, (dir / "model.json").string());
        save_checkpoint(make_checkpoint(result.fit.model, result.fit.posterior),
                        (dir / "checkpoint.json").string());
        save_q_trace_csv(result.fit.model.meta.training_log, (dir / "qtrace.csv").string());
        save_trajectory_csv(data, (dir / "standardized.csv").string(), "x");
        MatrixXd tft(tf.mean.size(), 2);
        tft.col(0) = tf.mean;
        tft.col(1) = tf.scale;
        save_matrix_csv(tft, {"mean", "scale"}, (dir / "transform.csv").string());
        if (result.klz.n_samples > 0)
            write_text_file((dir / "klz.json").string(), report_to_json(result.klz) + "\n");
        if (!result.dynamics.fixed_points.empty() || !result.dynamics.attractors.empty())
            write_text_file((dir / "dynamics.json").string(),
                            report_to_json(result.dynamics) + "\n");
        MatrixXd mse_table(result.mse.obs.size(), 3);
        for (int n = 0; n < mse_table.rows(); ++n) {
            mse_table(n, 0) = n;
            mse_table(n, 1) = result.mse.obs(n);
            mse_table(n, 2) = result.mse.state(n);
        }
        save_matrix_csv(mse_table, {"n", "mse_obs", "mse_state"}, (dir / "mse.csv").string());
    }
    return result;
}

std::string dataset_result_summary(const DatasetResult& result, int indent) {
    json j;
    j["schema"] = "plrnn-fit-summary";
    j["version"] = kSchemaVersion;
    j["success"] = result.fit.success;
    j["stable"] = result.fit.stable;
    j["error"] = result.fit.error;
    j["warning"] = result.fit.warning;
    j["metric_error"] = result.metric_error;
    j["wall_seconds"] = jnum(result.fit.wall_seconds);
    const auto& log = result.fit.model.meta.training_log;
    j["training_steps"] = log.size();
    j["final_q"] = log.empty() ? json(nullptr) : jnum(log.back().q_rescaled);
    j["klz_samples"] = result.klz.n_samples;
    j["klz_normalized"] =
        result.klz.n_samples > 0 ? jnum(result.klz.kl_normalized) : json(nullptr);
    j["mse_1"] = result.mse.obs.size() > 1 ? jnum(result.mse.obs(1)) : json(nullptr);
    j["fixed_points"] = result.dynamics.fixed_points.size();
    j["attractors"] = result.dynamics.attractors.size();
    j["n_stable"] = result.dynamics.n_stable;
    j["n_unstable"] = result.dynamics.n_unstable;
    j["n_unbounded"] = result.dynamics.n_unbounded;
    j["provenance"] = result.fit.model.meta.provenance;
    return dump(j, indent);
}

// ---------------------------------------------------------------------------
// model scoring and dynamics summaries

LatentProbe probe_latent_dynamics(const PlrnnParams& params, double dt_data, std::uint64_t seed,
                                  int T_det) {
    require(T_det >= 10, ErrorCode::invalid_argument, "probe: T_det must be >= 10");
    require(dt_data > 0.0, ErrorCode::invalid_argument, "probe: dt must be positive");
    // the probe describes the autonomous dynamics; input loadings are dropped
    PlrnnParams p = params;
    p.C = MatrixXd(p.M(), 0);
    LatentProbe probe;
    const Trajectory det = generate_latent(p, T_det, 0, true);
    if (det.unstable) {
        probe.det_unstable = true;
        return probe;
    }
    const MatrixXd& Z = det.values;
    const int rows = static_cast<int>(Z.rows());
    probe.terminal_delta = (Z.row(rows - 1) - Z.row(rows - 2)).cwiseAbs().maxCoeff();

    // base points spread over the visited set by a golden-ratio sweep; a
    // collapsed twin separation (not_converged) leaves lambda unset
    const int transient = rows / 5;
    const int wlen = rows - transient;
    const int n_base = 10;
    MatrixXd bases(n_base, Z.cols());
    for (int i = 0; i < n_base; ++i) {
        const double u = std::fmod(0.618033988749895 * (i + 1), 1.0);
        bases.row(i) = Z.row(transient + std::min(wlen - 1, static_cast<int>(u * wlen)));
    }
    const Stepper stepper = [&p](const VectorXd& z0, int n) {
        MatrixXd out(n, z0.size());
        VectorXd z = z0;
        for (int t = 0; t < n; ++t) {
            z = latent_step(p, z, nullptr, nullptr);
            out.row(t) = z;
        }
        return out;
    };
    try {
        const LyapunovEstimate est = lyapunov_max(stepper, bases, 1e-8, 300, 1.0, seed);
        probe.lambda = est.lambda_max / dt_data;
    } catch (const Error&) {
    }
    return probe;
}

void EvalOptions::validate() const {
    require(generate_T >= 0 && klz_samples >= 0 && mse_horizon >= 0, ErrorCode::invalid_argument,
            "evaluate: generate_T, klz_samples, and mse_horizon must be >= 0");
    require(generate_T == 0 || generate_T >= 2, ErrorCode::invalid_argument,
            "evaluate: generate_T must be 0 or >= 2");
    require(klz_samples == 0 || klz_samples >= 2, ErrorCode::invalid_argument,
            "evaluate: klz_samples must be 0 or >= 2");
}

EvalReport evaluate_model(const ModelBundle& model, const Trajectory& data,
                          const EvalOptions& opts) {
    opts.validate();
    model.validate();
    data.validate();
    const int T = data.T();
    require(data.dim() == model.N(), ErrorCode::dimension_mismatch,
            "evaluate: data has " + std::to_string(data.dim()) + " channels, the model observes " +
                std::to_string(model.N()));
    const MatrixXd* S = nullptr;
    if (model.K() > 0) {
        require(data.inputs && data.inputs->cols() == model.K(), ErrorCode::dimension_mismatch,
                "evaluate: the model expects " + std::to_string(model.K()) +
                    " input columns attached to the data");
        S = &*data.inputs;
    }
    const MatrixXd* R = nullptr;
    if (model.P() > 0) {
        require(data.nuisance && data.nuisance->cols() == model.P(), ErrorCode::dimension_mismatch,
                "evaluate: the model expects " + std::to_string(model.P()) +
                    " nuisance columns attached to the data");
        R = &*data.nuisance;
    }

    CounterRng stages(opts.seed, /*stream=*/19);
    const std::uint64_t gen_seed = stages.next_u64();
    const std::uint64_t obs_seed = stages.next_u64();
    const std::uint64_t mix_seed = stages.next_u64();
    const std::uint64_t klz_seed = stages.next_u64();
    const std::uint64_t probe_seed = stages.next_u64();
    const std::uint64_t post_seed = stages.next_u64();

    EvalReport rep;
    const auto note = [&rep](const std::string& msg) {
        if (!rep.error.empty()) rep.error += "; ";
        rep.error += msg;
    };

    rep.probe = probe_latent_dynamics(model.latent, data.dt, probe_seed);

    if (opts.generate_T > 0) {
        if (model.P() > 0) {
            note("observation comparison skipped: nuisance loadings have no generated counterpart");
        } else {
            const int L = model.K() > 0 ? T : opts.generate_T;
            try {
                const Trajectory gen_z =
                    generate_latent(model.latent, L, gen_seed, false,
                                    S ? std::optional<MatrixXd>(*S) : std::nullopt);
                rep.gen_unstable = gen_z.unstable;
                const Trajectory x_gen =
                    model.is_bold()
                        ? observe_bold(std::get<ObsParamsBold>(model.observation), gen_z,
                                       std::nullopt, obs_seed)
                        : observe_linear(std::get<ObsParamsLinear>(model.observation), gen_z,
                                         model.latent.phi, obs_seed);
                rep.klx = kl_x(data.values, x_gen.values);
                rep.klx_computed = true;
                try {
                    rep.spectrum_correlation =
                        power_spectrum_correlation(data.values, x_gen.values);
                } catch (const Error&) {
                    // generated run too short for a spectrum
                }
            } catch (const Error& e) {
                note(std::string("observation comparison unavailable: ") + e.what());
            }
        }
    }

    if (opts.klz_samples > 0 || opts.mse_horizon > 0) {
        try {
            EstepConfig ecfg;
            ecfg.seed = post_seed;
            const StatePosterior post =
                reestimate_posterior_unit_sigma(model, data.values, S, R, ecfg);
            if (opts.klz_samples > 0) {
                try {
                    const GaussianMixture gen = generated_mixture(model, T, mix_seed, S);
                    rep.klz = kl_z(post, gen, opts.klz_samples, klz_seed);
                } catch (const Error& e) {
                    note(std::string("latent divergence unavailable: ") + e.what());
                }
            }
            if (opts.mse_horizon > 0)
                rep.mse = n_step_ahead_mse(model, post, data.values, S, R, opts.mse_horizon);
        } catch (const Error& e) {
            note(std::string("posterior unavailable: ") + e.what());
        }
    }
    return rep;
}

namespace {

json probe_to_obj(const LatentProbe& p) {
    json j;
    j["det_unstable"] = p.det_unstable;
    j["terminal_delta"] = jnum(p.terminal_delta);
    j["lambda"] = jnum(p.lambda);
    return j;
}

LatentProbe probe_from_obj(const json& j) {
    LatentProbe p;
    p.det_unstable = j.at("det_unstable").get<bool>();
    p.terminal_delta = dnum(j.at("terminal_delta"));
    p.lambda = dnum(j.at("lambda"));
    return p;
}

// nested reports keep their own schema tags so the field-level codecs in
// serialize.cpp stay the single source of truth for their layout
json embed(const std::string& doc) { return parse_json(doc, "internal report"); }

}  // namespace

std::string eval_report_to_json(const EvalReport& rep, int indent) {
    json j;
    j["schema"] = "plrnn-eval";
    j["version"] = kSchemaVersion;
    j["klx_computed"] = rep.klx_computed;
    j["klx"] = rep.klx_computed ? embed(report_to_json(rep.klx, -1)) : json(nullptr);
    j["gen_unstable"] = rep.gen_unstable;
    j["spectrum_correlation"] = jnum(rep.spectrum_correlation);
    j["klz"] = rep.klz.n_samples > 0 ? embed(report_to_json(rep.klz, -1)) : json(nullptr);
    j["mse"] = rep.mse.obs.size() > 0 ? embed(report_to_json(rep.mse, -1)) : json(nullptr);
    j["probe"] = probe_to_obj(rep.probe);
    j["error"] = rep.error;
    return dump(j, indent);
}

EvalReport eval_report_from_json(const std::string& text) {
    return translating("eval report", [&] {
        const json j = parse_json(text, "eval report");
        check_schema(j, "plrnn-eval");
        EvalReport rep;
        rep.klx_computed = j.at("klx_computed").get<bool>();
        if (rep.klx_computed) rep.klx = kl_report_from_json(dump(j.at("klx"), -1));
        rep.gen_unstable = j.at("gen_unstable").get<bool>();
        rep.spectrum_correlation = dnum(j.at("spectrum_correlation"));
        if (!j.at("klz").is_null()) rep.klz = klz_report_from_json(dump(j.at("klz"), -1));
        if (!j.at("mse").is_null()) rep.mse = prediction_mse_from_json(dump(j.at("mse"), -1));
        rep.probe = probe_from_obj(j.at("probe"));
        rep.error = j.at("error").get<std::string>();
        return rep;
    });
}

void AnalyzeOptions::validate() const {
    require(inits >= 1 && T >= 10, ErrorCode::invalid_argument,
            "analyze: needs inits >= 1 and T >= 10");
    require(probe_T >= 10, ErrorCode::invalid_argument, "analyze: probe_T must be >= 10");
    require(dt > 0.0, ErrorCode::invalid_argument, "analyze: dt must be positive");
}

DynamicsSummary analyze_model(const ModelBundle& model, const AnalyzeOptions& opts) {
    opts.validate();
    model.validate();
    CounterRng stages(opts.seed, /*stream=*/19);
    const std::uint64_t attr_seed = stages.next_u64();
    const std::uint64_t probe_seed = stages.next_u64();
    DynamicsSummary summary;
    summary.attractors = detect_attractors(model.latent, opts.inits, opts.T, attr_seed);
    summary.probe = probe_latent_dynamics(model.latent, opts.dt, probe_seed, opts.probe_T);
    return summary;
}

std::string dynamics_summary_to_json(const DynamicsSummary& summary, int indent) {
    json j;
    j["schema"] = "plrnn-analysis";
    j["version"] = kSchemaVersion;
    j["attractors"] = embed(report_to_json(summary.attractors, -1));
    j["probe"] = probe_to_obj(summary.probe);
    return dump(j, indent);
}

DynamicsSummary dynamics_summary_from_json(const std::string& text) {
    return translating("analysis summary", [&] {
        const json j = parse_json(text, "analysis summary");
        check_schema(j, "plrnn-analysis");
        DynamicsSummary summary;
        summary.attractors = attractor_set_from_json(dump(j.at("attractors"), -1));
        summary.probe = probe_from_obj(j.at("probe"));
        return summary;
    });
}

// ---------------------------------------------------------------------------
// config codecs

namespace {

Nonlinearity phi_from_name(const std::string& s) {
    if (s == "relu") return Nonlinearity::relu;
    if (s == "identity") return Nonlinearity::identity;
    throw Error(ErrorCode::parse_error, "unknown nonlinearity '" + s + "'");
}

void check_keys(const json& j, std::initializer_list<const char*> known, const char* where) {
    if (!j.is_object())
        throw Error(ErrorCode::parse_error, std::string(where) + ": expected a JSON object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : known)
            if (item.key() == k) {
                ok = true;
                break;
            }
        if (!ok)
            throw Error(ErrorCode::parse_error,
                        std::string(where) + ": unknown key '" + item.key() + "'");
    }
}

json sampling_to_obj(const SamplingSpec& s) {
    json j;
    j["T"] = s.T;
    j["dt"] = s.dt;
    j["sub_sample"] = s.sub_sample;
    j["noise_var"] = s.noise_var;
    j["burn_in"] = s.burn_in;
    return j;
}

SamplingSpec sampling_from_obj(const json& j, SamplingSpec s) {
    check_keys(j, {"T", "dt", "sub_sample", "noise_var", "burn_in"}, "sampling");
    s.T = j.value("T", s.T);
    s.dt = j.value("dt", s.dt);
    s.sub_sample = j.value("sub_sample", s.sub_sample);
    s.noise_var = j.value("noise_var", s.noise_var);
    s.burn_in = j.value("burn_in", s.burn_in);
    return s;
}

json training_to_obj(const AnnealConfig& c) {
    json j;
    j["sigma_schedule"] = c.sigma_schedule;
    j["ridge"] = c.ridge;
    j["em_max_iterations"] = c.em_max_iterations;
    j["em_tol"] = c.em_tol;
    j["random_init_sigma"] = c.random_init_sigma;
    j["stability_probe_T"] = c.stability_probe_T;
    json e;
    e["max_region_iterations"] = c.estep.max_region_iterations;
    e["jitter0"] = c.estep.jitter0;
    e["jitter_max"] = c.estep.jitter_max;
    j["estep"] = std::move(e);
    return j;
}

AnnealConfig training_from_obj(const json& j, AnnealConfig c) {
    check_keys(j,
               {"sigma_schedule", "ridge", "em_max_iterations", "em_tol", "random_init_sigma",
                "stability_probe_T", "estep"},
               "training");
    c.sigma_schedule = j.value("sigma_schedule", c.sigma_schedule);
    c.ridge = j.value("ridge", c.ridge);
    c.em_max_iterations = j.value("em_max_iterations", c.em_max_iterations);
    c.em_tol = j.value("em_tol", c.em_tol);
    c.random_init_sigma = j.value("random_init_sigma", c.random_init_sigma);
    c.stability_probe_T = j.value("stability_probe_T", c.stability_probe_T);
    if (j.contains("estep")) {
        const json& e = j.at("estep");
        check_keys(e, {"max_region_iterations", "jitter0", "jitter_max"}, "training.estep");
        c.estep.max_region_iterations =
            e.value("max_region_iterations", c.estep.max_region_iterations);
        c.estep.jitter0 = e.value("jitter0", c.estep.jitter0);
        c.estep.jitter_max = e.value("jitter_max", c.estep.jitter_max);
    }
    return c;
}

}  // namespace

std::string suite_config_to_json(const SuiteConfig& config, int indent) {
    json j;
    j["system"] = config.system;
    j["sampling"] = sampling_to_obj(config.sampling);
    j["n_seeds"] = config.n_seeds;
    j["M_list"] = config.M_list;
    json protos = json::array();
    for (const Protocol p : config.protocols) protos.push_back(to_string(p));
    j["protocols"] = std::move(protos);
    j["nonlinearity"] = to_string(config.nonlinearity);
    j["training"] = training_to_obj(config.training);
    j["experiment_seed"] = config.experiment_seed;
    j["generate_T"] = config.generate_T;
    j["success_threshold"] = config.success_threshold;
    j["n_workers"] = config.n_workers;
    j["output_dir"] = config.output_dir;
    return dump(j, indent);
}

SuiteConfig suite_config_from_json(const std::string& text) {
    return translating("suite config", [&] {
        const json j = parse_json(text, "suite config");
        check_keys(j,
                   {"system", "sampling", "n_seeds", "M_list", "protocols", "nonlinearity",
                    "training", "experiment_seed", "generate_T", "success_threshold", "n_workers",
                    "output_dir"},
                   "suite config");
        SuiteConfig c;
        c.system = j.value("system", c.system);
        if (j.contains("sampling")) c.sampling = sampling_from_obj(j.at("sampling"), c.sampling);
        c.n_seeds = j.value("n_seeds", c.n_seeds);
        c.M_list = j.value("M_list", c.M_list);
        if (j.contains("protocols")) {
            c.protocols.clear();
            for (const json& p : j.at("protocols"))
                c.protocols.push_back(protocol_from_string(p.get<std::string>()));
        }
        if (j.contains("nonlinearity"))
            c.nonlinearity = phi_from_name(j.at("nonlinearity").get<std::string>());
        if (j.contains("training")) c.training = training_from_obj(j.at("training"), c.training);
        c.experiment_seed = j.value("experiment_seed", c.experiment_seed);
        c.generate_T = j.value("generate_T", c.generate_T);
        c.success_threshold = j.value("success_threshold", c.success_threshold);
        c.n_workers = j.value("n_workers", c.n_workers);
        c.output_dir = j.value("output_dir", c.output_dir);
        return c;
    });
}

std::string dataset_config_to_json(const DatasetConfig& config, int indent) {
    json j;
    j["data_csv"] = config.data_csv;
    j["inputs_csv"] = config.inputs_csv;
    j["nuisance_csv"] = config.nuisance_csv;
    j["declared_nuisance"] = config.declared_nuisance;
    j["use_inputs"] = config.use_inputs;
    j["bold_head"] = config.bold_head;
    j["hrf_csv"] = config.hrf_csv;
    j["hrf_tr"] = config.hrf_tr;
    j["smooth"] = config.smooth;
    j["M"] = config.M;
    j["protocol"] = to_string(config.protocol);
    j["nonlinearity"] = to_string(config.nonlinearity);
    j["seed"] = config.seed;
    j["training"] = training_to_obj(config.training);
    j["klz_samples"] = config.klz_samples;
    j["dynamics_inits"] = config.dynamics_inits;
    j["dynamics_T"] = config.dynamics_T;
    j["output_dir"] = config.output_dir;
    return dump(j, indent);
}

DatasetConfig dataset_config_from_json(const std::string& text) {
    return translating("dataset config", [&] {
        const json j = parse_json(text, "dataset config");
        check_keys(j,
                   {"data_csv", "inputs_csv", "nuisance_csv", "declared_nuisance", "use_inputs",
                    "bold_head", "hrf_csv", "hrf_tr", "smooth", "M", "protocol", "nonlinearity",
                    "seed", "training", "klz_samples", "dynamics_inits", "dynamics_T",
                    "output_dir"},
                   "dataset config");
        DatasetConfig c;
        c.data_csv = j.value("data_csv", c.data_csv);
        c.inputs_csv = j.value("inputs_csv", c.inputs_csv);
        c.nuisance_csv = j.value("nuisance_csv", c.nuisance_csv);
        c.declared_nuisance = j.value("declared_nuisance", c.declared_nuisance);
        c.use_inputs = j.value("use_inputs", c.use_inputs);
        c.bold_head = j.value("bold_head", c.bold_head);
        c.hrf_csv = j.value("hrf_csv", c.hrf_csv);
        c.hrf_tr = j.value("hrf_tr", c.hrf_tr);
        c.smooth = j.value("smooth", c.smooth);
        c.M = j.value("M", c.M);
        if (j.contains("protocol"))
            c.protocol = protocol_from_string(j.at("protocol").get<std::string>());
        if (j.contains("nonlinearity"))
            c.nonlinearity = phi_from_name(j.at("nonlinearity").get<std::string>());
        c.seed = j.value("seed", c.seed);
        if (j.contains("training")) c.training = training_from_obj(j.at("training"), c.training);
        c.klz_samples = j.value("klz_samples", c.klz_samples);
        c.dynamics_inits = j.value("dynamics_inits", c.dynamics_inits);
        c.dynamics_T = j.value("dynamics_T", c.dynamics_T);
        c.output_dir = j.value("output_dir", c.output_dir);
        return c;
    });
}

std::string eval_options_to_json(const EvalOptions& opts, int indent) {
    json j;
    j["generate_T"] = opts.generate_T;
    j["klz_samples"] = opts.klz_samples;
    j["mse_horizon"] = opts.mse_horizon;
    j["seed"] = opts.seed;
    return dump(j, indent);
}

EvalOptions eval_options_from_json(const std::string& text) {
    return translating("eval options", [&] {
        const json j = parse_json(text, "eval options");
        check_keys(j, {"generate_T", "klz_samples", "mse_horizon", "seed"}, "eval options");
        EvalOptions o;
        o.generate_T = j.value("generate_T", o.generate_T);
        o.klz_samples = j.value("klz_samples", o.klz_samples);
        o.mse_horizon = j.value("mse_horizon", o.mse_horizon);
        o.seed = j.value("seed", o.seed);
        return o;
    });
}

std::string analyze_options_to_json(const AnalyzeOptions& opts, int indent) {
    json j;
    j["inits"] = opts.inits;
    j["T"] = opts.T;
    j["probe_T"] = opts.probe_T;
    j["dt"] = opts.dt;
    j["seed"] = opts.seed;
    return dump(j, indent);
}

AnalyzeOptions analyze_options_from_json(const std::string& text) {
    return translating("analyze options", [&] {
        const json j = parse_json(text, "analyze options");
        check_keys(j, {"inits", "T", "probe_T", "dt", "seed"}, "analyze options");
        AnalyzeOptions o;
        o.inits = j.value("inits", o.inits);
        o.T = j.value("T", o.T);
        o.probe_T = j.value("probe_T", o.probe_T);
        o.dt = j.value("dt", o.dt);
        o.seed = j.value("seed", o.seed);
        return o;
    });
}

}  // namespace plrnn
