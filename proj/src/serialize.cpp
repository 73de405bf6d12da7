#include "plrnn/serialize.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <utility>

#include "json_detail.hpp"

namespace plrnn {
namespace {

using jsondetail::json;
using jsondetail::jnum;
using jsondetail::dnum;
using jsondetail::jvec;
using jsondetail::dvec;
using jsondetail::jmat;
using jsondetail::dmat;
using jsondetail::parse_json;
using jsondetail::check_schema;
using jsondetail::dump;
using jsondetail::translating;

json jbools(const ArrayXb& b) {
    json a = json::array();
    for (int i = 0; i < b.size(); ++i) a.push_back(static_cast<bool>(b(i)));
    return a;
}

ArrayXb dbools(const json& j, const char* what) {
    if (!j.is_array()) throw Error(ErrorCode::parse_error, std::string(what) + ": expected an array");
    ArrayXb b(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) b(static_cast<int>(i)) = j[i].get<bool>();
    return b;
}

json jcvec(const Eigen::VectorXcd& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(json::array({jnum(v(i).real()), jnum(v(i).imag())}));
    return a;
}

Eigen::VectorXcd dcvec(const json& j, const char* what) {
    if (!j.is_array()) throw Error(ErrorCode::parse_error, std::string(what) + ": expected an array");
    Eigen::VectorXcd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        const json& p = j[i];
        if (!p.is_array() || p.size() != 2)
            throw Error(ErrorCode::parse_error, std::string(what) + ": expected [re, im] pairs");
        v(static_cast<int>(i)) = {dnum(p[0]), dnum(p[1])};
    }
    return v;
}

Nonlinearity phi_from_string(const std::string& s) {
    if (s == "relu") return Nonlinearity::relu;
    if (s == "identity") return Nonlinearity::identity;
    throw Error(ErrorCode::parse_error, "unknown nonlinearity '" + s + "'");
}

AttractorKind kind_from_string(const std::string& s) {
    if (s == "fixed_point") return AttractorKind::fixed_point;
    if (s == "limit_cycle") return AttractorKind::limit_cycle;
    if (s == "chaotic") return AttractorKind::chaotic;
    throw Error(ErrorCode::parse_error, "unknown attractor kind '" + s + "'");
}

json model_to_obj(const ModelBundle& model) {
    json root;
    root["schema"] = "plrnn-model";
    root["version"] = kSchemaVersion;

    json lat;
    lat["phi"] = to_string(model.latent.phi);
    lat["mu0"] = jvec(model.latent.mu0);
    lat["A"] = jmat(model.latent.A);
    lat["W"] = jmat(model.latent.W);
    lat["h"] = jvec(model.latent.h);
    lat["C"] = jmat(model.latent.C);
    lat["sigma"] = jvec(model.latent.sigma);
    root["latent"] = std::move(lat);

    json obs;
    if (model.is_bold()) {
        const auto& o = std::get<ObsParamsBold>(model.observation);
        obs["head"] = "bold";
        obs["B"] = jmat(o.B);
        obs["J"] = jmat(o.J);
        obs["gamma"] = jvec(o.gamma);
        obs["hrf"] = json{{"tr", o.hrf.tr}, {"taps", jvec(o.hrf.taps)}};
    } else {
        const auto& o = std::get<ObsParamsLinear>(model.observation);
        obs["head"] = "linear";
        obs["B"] = jmat(o.B);
        obs["gamma"] = jvec(o.gamma);
    }
    root["observation"] = std::move(obs);

    json meta;
    meta["seed"] = model.meta.seed;
    meta["provenance"] = model.meta.provenance;
    json steps = json::array();
    for (const auto& s : model.meta.training_log) {
        json e;
        e["step"] = s.step;
        e["q"] = jnum(s.q);
        e["q_rescaled"] = jnum(s.q_rescaled);
        e["em_iterations"] = s.em_iterations;
        steps.push_back(std::move(e));
    }
    meta["training_log"] = std::move(steps);
    root["meta"] = std::move(meta);
    return root;
}

ModelBundle model_from_obj(const json& root) {
    check_schema(root, "plrnn-model");
    ModelBundle model;

    const json& lat = root.at("latent");
    model.latent.phi = phi_from_string(lat.at("phi").get<std::string>());
    model.latent.mu0 = dvec(lat.at("mu0"), "mu0");
    model.latent.A = dmat(lat.at("A"), "A");
    model.latent.W = dmat(lat.at("W"), "W");
    model.latent.h = dvec(lat.at("h"), "h");
    model.latent.C = dmat(lat.at("C"), "C");
    model.latent.sigma = dvec(lat.at("sigma"), "sigma");

    const json& obs = root.at("observation");
    const std::string head = obs.at("head").get<std::string>();
    if (head == "bold") {
        ObsParamsBold o;
        o.B = dmat(obs.at("B"), "B");
        o.J = dmat(obs.at("J"), "J");
        o.gamma = dvec(obs.at("gamma"), "gamma");
        const json& hrf = obs.at("hrf");
        o.hrf.tr = dnum(hrf.at("tr"));
        o.hrf.taps = dvec(hrf.at("taps"), "hrf taps");
        model.observation = std::move(o);
    } else if (head == "linear") {
        ObsParamsLinear o;
        o.B = dmat(obs.at("B"), "B");
        o.gamma = dvec(obs.at("gamma"), "gamma");
        model.observation = std::move(o);
    } else {
        throw Error(ErrorCode::parse_error, "unknown observation head '" + head + "'");
    }

    const json& meta = root.at("meta");
    model.meta.seed = meta.at("seed").get<std::uint64_t>();
    model.meta.provenance = meta.at("provenance").get<std::string>();
    for (const json& e : meta.at("training_log")) {
        TrainingStepLog s;
        s.step = e.at("step").get<std::string>();
        s.q = dnum(e.at("q"));
        s.q_rescaled = dnum(e.at("q_rescaled"));
        s.em_iterations = e.at("em_iterations").get<int>();
        model.meta.training_log.push_back(std::move(s));
    }

    model.validate();
    return model;
}

json trajectory_to_obj(const Trajectory& traj) {
    json root;
    root["schema"] = "plrnn-trajectory";
    root["version"] = kSchemaVersion;
    root["dt"] = traj.dt;
    root["unstable"] = traj.unstable;
    root["values"] = jmat(traj.values);
    root["inputs"] = traj.inputs ? jmat(*traj.inputs) : json(nullptr);
    root["nuisance"] = traj.nuisance ? jmat(*traj.nuisance) : json(nullptr);
    return root;
}

Trajectory trajectory_from_obj(const json& root) {
    check_schema(root, "plrnn-trajectory");
    Trajectory traj;
    traj.dt = dnum(root.at("dt"));
    traj.unstable = root.at("unstable").get<bool>();
    traj.values = dmat(root.at("values"), "values");
    if (!root.at("inputs").is_null()) traj.inputs = dmat(root.at("inputs"), "inputs");
    if (!root.at("nuisance").is_null()) traj.nuisance = dmat(root.at("nuisance"), "nuisance");
    traj.validate();
    return traj;
}

// -- CSV machinery ------------------------------------------------------

void append_num(std::string& out, double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

// One CSV field as a double. from_chars handles inf/nan spellings; a '+'
// sign and surrounding blanks are tolerated because external data has them.
bool field_to_double(std::string_view field, double& out) {
    std::size_t b = field.find_first_not_of(" \t");
    if (b == std::string_view::npos) return false;
    std::size_t e = field.find_last_not_of(" \t");
    field = field.substr(b, e - b + 1);
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    if (field.empty()) return false;
    const char* last = field.data() + field.size();
    const auto res = std::from_chars(field.data(), last, out);
    return res.ec == std::errc() && res.ptr == last;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

// Nonempty lines of the file, with line endings stripped and the 1-based
// line number kept for diagnostics.
std::vector<std::pair<int, std::string_view>> csv_lines(const std::string& text) {
    std::vector<std::pair<int, std::string_view>> lines;
    std::string_view rest = text;
    int lineno = 0;
    while (!rest.empty()) {
        ++lineno;
        const std::size_t nl = rest.find('\n');
        std::string_view line = nl == std::string_view::npos ? rest : rest.substr(0, nl);
        rest = nl == std::string_view::npos ? std::string_view() : rest.substr(nl + 1);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) lines.emplace_back(lineno, line);
    }
    return lines;
}

[[noreturn]] void csv_fail(const std::string& path, int line, int column, const std::string& msg) {
    throw Error(ErrorCode::parse_error, path + " line " + std::to_string(line) + ", column " +
                                            std::to_string(column) + ": " + msg);
}

struct CsvTable {
    std::vector<std::string> header;  // empty if the file had none
    MatrixXd data;
};

CsvTable read_csv(const std::string& path) {
    const std::string text = read_text_file(path);
    const auto lines = csv_lines(text);
    CsvTable table;
    if (lines.empty()) {
        table.data.resize(0, 0);
        return table;
    }

    const auto first = split_fields(lines[0].second);
    const std::size_t ncols = first.size();
    double probe;
    bool first_is_header = false;
    for (const auto& f : first)
        if (!field_to_double(f, probe)) first_is_header = true;
    if (first_is_header)
        for (const auto& f : first) table.header.emplace_back(f);

    const std::size_t start = first_is_header ? 1 : 0;
    table.data.resize(static_cast<int>(lines.size() - start), static_cast<int>(ncols));
    for (std::size_t r = start; r < lines.size(); ++r) {
        const auto fields = split_fields(lines[r].second);
        if (fields.size() != ncols)
            csv_fail(path, lines[r].first, static_cast<int>(fields.size()),
                     "expected " + std::to_string(ncols) + " fields, got " +
                         std::to_string(fields.size()));
        for (std::size_t c = 0; c < ncols; ++c) {
            double v;
            if (!field_to_double(fields[c], v))
                csv_fail(path, lines[r].first, static_cast<int>(c + 1),
                         "expected a number, got '" + std::string(fields[c]) + "'");
            table.data(static_cast<int>(r - start), static_cast<int>(c)) = v;
        }
    }
    return table;
}

void check_column_name(const std::string& name) {
    require(name.find_first_of(",\"\r\n") == std::string::npos, ErrorCode::invalid_argument,
            "column name '" + name + "' contains CSV delimiters");
}

bool indexed_name(const std::string& s, char prefix) {
    if (s.size() < 2 || s[0] != prefix) return false;
    for (std::size_t i = 1; i < s.size(); ++i)
        if (s[i] < '0' || s[i] > '9') return false;
    return true;
}

}  // namespace

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io_error, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    require(!in.bad(), ErrorCode::io_error, "read failed for " + path);
    return std::move(ss).str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::io_error, "cannot open " + path + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    require(out.good(), ErrorCode::io_error, "write failed for " + path);
}

std::string model_to_json(const ModelBundle& model, int indent) {
    model.validate();
    return dump(model_to_obj(model), indent);
}

ModelBundle model_from_json(const std::string& text) {
    return translating("model", [&] { return model_from_obj(parse_json(text, "model")); });
}

void save_model(const ModelBundle& model, const std::string& path) {
    write_text_file(path, model_to_json(model) + "\n");
}

ModelBundle load_model(const std::string& path) { return model_from_json(read_text_file(path)); }

FitCheckpoint make_checkpoint(const ModelBundle& model, const StatePosterior& post) {
    const int T = static_cast<int>(post.means.rows());
    const int M = static_cast<int>(post.means.cols());
    require(post.cov.n() == T * M, ErrorCode::dimension_mismatch,
            "make_checkpoint: posterior covariance does not match means");
    FitCheckpoint ck;
    ck.model = model;
    ck.posterior_means = post.means;
    ck.posterior_vars.resize(T, M);
    for (int t = 0; t < T; ++t)
        for (int m = 0; m < M; ++m) ck.posterior_vars(t, m) = post.cov.get(t * M + m, t * M + m);
    ck.q_map = post.q_map;
    ck.entropy = post.entropy;
    return ck;
}

std::string checkpoint_to_json(const FitCheckpoint& ck, int indent) {
    require(ck.posterior_means.rows() == ck.posterior_vars.rows() &&
                ck.posterior_means.cols() == ck.posterior_vars.cols(),
            ErrorCode::dimension_mismatch, "checkpoint: means and vars shapes differ");
    json root;
    root["schema"] = "plrnn-checkpoint";
    root["version"] = kSchemaVersion;
    root["model"] = model_to_obj(ck.model);
    json post;
    post["means"] = jmat(ck.posterior_means);
    post["vars"] = jmat(ck.posterior_vars);
    post["q_map"] = jnum(ck.q_map);
    post["entropy"] = jnum(ck.entropy);
    root["posterior"] = std::move(post);
    return dump(root, indent);
}

FitCheckpoint checkpoint_from_json(const std::string& text) {
    return translating("checkpoint", [&] {
        const json root = parse_json(text, "checkpoint");
        check_schema(root, "plrnn-checkpoint");
        FitCheckpoint ck;
        ck.model = model_from_obj(root.at("model"));
        const json& post = root.at("posterior");
        ck.posterior_means = dmat(post.at("means"), "posterior means");
        ck.posterior_vars = dmat(post.at("vars"), "posterior vars");
        if (ck.posterior_means.rows() != ck.posterior_vars.rows() ||
            ck.posterior_means.cols() != ck.posterior_vars.cols())
            throw Error(ErrorCode::parse_error, "checkpoint: means and vars shapes differ");
        ck.q_map = dnum(post.at("q_map"));
        ck.entropy = dnum(post.at("entropy"));
        return ck;
    });
}

void save_checkpoint(const FitCheckpoint& ck, const std::string& path) {
    write_text_file(path, checkpoint_to_json(ck) + "\n");
}

FitCheckpoint load_checkpoint(const std::string& path) {
    return checkpoint_from_json(read_text_file(path));
}

void save_trajectory_csv(const Trajectory& traj, const std::string& path,
                         const std::string& prefix) {
    traj.validate();
    check_column_name(prefix);
    require(!prefix.empty() && !indexed_name(prefix + "1", 's') && !indexed_name(prefix + "1", 'r'),
            ErrorCode::invalid_argument,
            "trajectory column prefix collides with input/nuisance names");
    const int T = traj.T(), D = traj.dim();
    const int K = traj.inputs ? static_cast<int>(traj.inputs->cols()) : 0;
    const int P = traj.nuisance ? static_cast<int>(traj.nuisance->cols()) : 0;

    std::string out;
    out.reserve(static_cast<std::size_t>(T + 1) * (D + K + P + 1) * 20);
    out += "t";
    for (int c = 0; c < D; ++c) out += "," + prefix + std::to_string(c + 1);
    for (int c = 0; c < K; ++c) out += ",s" + std::to_string(c + 1);
    for (int c = 0; c < P; ++c) out += ",r" + std::to_string(c + 1);
    out += "\n";
    for (int t = 0; t < T; ++t) {
        append_num(out, t * traj.dt);
        for (int c = 0; c < D; ++c) { out += ','; append_num(out, traj.values(t, c)); }
        for (int c = 0; c < K; ++c) { out += ','; append_num(out, (*traj.inputs)(t, c)); }
        for (int c = 0; c < P; ++c) { out += ','; append_num(out, (*traj.nuisance)(t, c)); }
        out += "\n";
    }
    write_text_file(path, out);
}

Trajectory load_trajectory_csv(const std::string& path) {
    const CsvTable table = read_csv(path);
    require(!table.header.empty(), ErrorCode::parse_error,
            path + ": expected a header line (t,<name>1,...)");
    require(table.header[0] == "t", ErrorCode::parse_error,
            path + ": first column must be named 't'");
    const int ncols = static_cast<int>(table.header.size());
    require(ncols >= 2, ErrorCode::parse_error, path + ": no value columns");

    // Column blocks run values, then inputs, then nuisance; membership is
    // read off the s<i>/r<i> names.
    int D = 0, K = 0, P = 0;
    int stage = 0;
    for (int c = 1; c < ncols; ++c) {
        const std::string& name = table.header[static_cast<std::size_t>(c)];
        const bool is_s = indexed_name(name, 's');
        const bool is_r = indexed_name(name, 'r');
        if (stage == 0 && is_s) stage = 1;
        else if (stage <= 1 && is_r) stage = 2;
        if (stage == 0) ++D;
        else if (stage == 1) {
            if (!is_s)
                throw Error(ErrorCode::parse_error,
                            path + ": column '" + name + "' follows the input block");
            ++K;
        } else {
            if (!is_r)
                throw Error(ErrorCode::parse_error,
                            path + ": column '" + name + "' follows the nuisance block");
            ++P;
        }
    }
    require(D >= 1, ErrorCode::parse_error, path + ": no value columns before the input block");

    const int T = static_cast<int>(table.data.rows());
    require(T >= 1, ErrorCode::parse_error, path + ": no data rows");
    Trajectory traj;
    traj.values = table.data.block(0, 1, T, D);
    if (K > 0) traj.inputs = table.data.block(0, 1 + D, T, K);
    if (P > 0) traj.nuisance = table.data.block(0, 1 + D + K, T, P);
    if (T >= 2) {
        traj.dt = table.data(1, 0) - table.data(0, 0);
        require(traj.dt > 0.0, ErrorCode::parse_error, path + ": time column is not increasing");
    }
    traj.validate();
    return traj;
}

std::string trajectory_to_json(const Trajectory& traj, int indent) {
    traj.validate();
    return dump(trajectory_to_obj(traj), indent);
}

Trajectory trajectory_from_json(const std::string& text) {
    return translating("trajectory",
                       [&] { return trajectory_from_obj(parse_json(text, "trajectory")); });
}

void save_trajectory_json(const Trajectory& traj, const std::string& path) {
    write_text_file(path, trajectory_to_json(traj) + "\n");
}

Trajectory load_trajectory_json(const std::string& path) {
    return trajectory_from_json(read_text_file(path));
}

void save_matrix_csv(const MatrixXd& table, const std::vector<std::string>& columns,
                     const std::string& path) {
    std::string out;
    out.reserve(static_cast<std::size_t>((table.rows() + 1) * (table.cols() + 1)) * 20);
    if (!columns.empty()) {
        require(static_cast<int>(columns.size()) == table.cols(), ErrorCode::dimension_mismatch,
                "save_matrix_csv: column name count != cols");
        for (std::size_t c = 0; c < columns.size(); ++c) {
            check_column_name(columns[c]);
            double probe;
            require(!field_to_double(columns[c], probe), ErrorCode::invalid_argument,
                    "column name '" + columns[c] + "' would parse as a number");
            if (c) out += ',';
            out += columns[c];
        }
        out += "\n";
    }
    for (int r = 0; r < table.rows(); ++r) {
        for (int c = 0; c < table.cols(); ++c) {
            if (c) out += ',';
            append_num(out, table(r, c));
        }
        out += "\n";
    }
    write_text_file(path, out);
}

MatrixXd load_matrix_csv(const std::string& path, std::vector<std::string>* columns) {
    CsvTable table = read_csv(path);
    if (columns) *columns = std::move(table.header);
    return std::move(table.data);
}

CsvCells load_csv_cells(const std::string& path) {
    const std::string text = read_text_file(path);
    const auto lines = csv_lines(text);
    CsvCells cells;
    if (lines.empty()) return cells;
    for (const auto f : split_fields(lines[0].second)) cells.header.emplace_back(f);
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto fields = split_fields(lines[r].second);
        if (fields.size() != cells.header.size())
            csv_fail(path, lines[r].first, static_cast<int>(fields.size()),
                     "expected " + std::to_string(cells.header.size()) + " fields, got " +
                         std::to_string(fields.size()));
        std::vector<std::string> row;
        row.reserve(fields.size());
        for (const auto f : fields) row.emplace_back(f);
        cells.rows.push_back(std::move(row));
    }
    return cells;
}

std::string csv_number(double v) {
    std::string s;
    append_num(s, v);
    return s;
}

void save_q_trace_csv(const std::vector<TrainingStepLog>& log, const std::string& path) {
    std::string out = "step,q,q_rescaled,em_iterations\n";
    for (const auto& s : log) {
        check_column_name(s.step);
        out += s.step;
        out += ','; append_num(out, s.q);
        out += ','; append_num(out, s.q_rescaled);
        out += ',' + std::to_string(s.em_iterations) + "\n";
    }
    write_text_file(path, out);
}

std::vector<TrainingStepLog> load_q_trace_csv(const std::string& path) {
    const std::string text = read_text_file(path);
    const auto lines = csv_lines(text);
    require(!lines.empty() && lines[0].second == std::string_view("step,q,q_rescaled,em_iterations"),
            ErrorCode::parse_error, path + ": expected a step,q,q_rescaled,em_iterations header");
    std::vector<TrainingStepLog> log;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto fields = split_fields(lines[r].second);
        if (fields.size() != 4)
            csv_fail(path, lines[r].first, static_cast<int>(fields.size()),
                     "expected 4 fields, got " + std::to_string(fields.size()));
        TrainingStepLog s;
        s.step = std::string(fields[0]);
        if (!field_to_double(fields[1], s.q))
            csv_fail(path, lines[r].first, 2, "expected a number, got '" + std::string(fields[1]) + "'");
        if (!field_to_double(fields[2], s.q_rescaled))
            csv_fail(path, lines[r].first, 3, "expected a number, got '" + std::string(fields[2]) + "'");
        const char* last = fields[3].data() + fields[3].size();
        const auto res = std::from_chars(fields[3].data(), last, s.em_iterations);
        if (res.ec != std::errc() || res.ptr != last)
            csv_fail(path, lines[r].first, 4,
                     "expected an integer, got '" + std::string(fields[3]) + "'");
        log.push_back(std::move(s));
    }
    return log;
}

void save_hrf_csv(const HrfKernel& hrf, const std::string& path) {
    hrf.validate();
    std::string out = "tap\n";
    for (int i = 0; i < hrf.n(); ++i) {
        append_num(out, hrf.taps(i));
        out += "\n";
    }
    write_text_file(path, out);
}

HrfKernel load_hrf_csv(const std::string& path, double tr) {
    const std::string text = read_text_file(path);
    const auto lines = csv_lines(text);
    std::vector<double> taps;
    for (std::size_t r = 0; r < lines.size(); ++r) {
        const auto fields = split_fields(lines[r].second);
        if (fields.size() != 1)
            csv_fail(path, lines[r].first, static_cast<int>(fields.size()),
                     "expected one column");
        double v;
        if (!field_to_double(fields[0], v)) {
            if (r == 0) continue;  // header line
            csv_fail(path, lines[r].first, 1,
                     "expected a number, got '" + std::string(fields[0]) + "'");
        } else {
            taps.push_back(v);
        }
    }
    HrfKernel hrf;
    hrf.tr = tr;
    hrf.taps = Eigen::Map<const VectorXd>(taps.data(), static_cast<int>(taps.size()));
    hrf.validate();
    return hrf;
}

std::string report_to_json(const KlReport& rep, int indent) {
    json j;
    j["schema"] = "plrnn-kl-report";
    j["version"] = kSchemaVersion;
    j["kl"] = jnum(rep.kl);
    j["kl_normalized"] = jnum(rep.kl_normalized);
    j["normalizer"] = jnum(rep.normalizer);
    j["bins_total"] = jnum(rep.bins_total);
    j["occupied_true"] = rep.occupied_true;
    j["occupied_gen"] = rep.occupied_gen;
    j["occupied_union"] = rep.occupied_union;
    j["T_true"] = rep.T_true;
    j["T_gen"] = rep.T_gen;
    j["clamped_true"] = jnum(rep.clamped_true);
    j["clamped_gen"] = jnum(rep.clamped_gen);
    j["clamp_warning"] = rep.clamp_warning;
    return dump(j, indent);
}

KlReport kl_report_from_json(const std::string& text) {
    return translating("kl report", [&] {
        const json j = parse_json(text, "kl report");
        check_schema(j, "plrnn-kl-report");
        KlReport rep;
        rep.kl = dnum(j.at("kl"));
        rep.kl_normalized = dnum(j.at("kl_normalized"));
        rep.normalizer = dnum(j.at("normalizer"));
        rep.bins_total = dnum(j.at("bins_total"));
        rep.occupied_true = j.at("occupied_true").get<long>();
        rep.occupied_gen = j.at("occupied_gen").get<long>();
        rep.occupied_union = j.at("occupied_union").get<long>();
        rep.T_true = j.at("T_true").get<int>();
        rep.T_gen = j.at("T_gen").get<int>();
        rep.clamped_true = dnum(j.at("clamped_true"));
        rep.clamped_gen = dnum(j.at("clamped_gen"));
        rep.clamp_warning = j.at("clamp_warning").get<bool>();
        return rep;
    });
}

std::string report_to_json(const KlzReport& rep, int indent) {
    json j;
    j["schema"] = "plrnn-klz-report";
    j["version"] = kSchemaVersion;
    j["kl_mc"] = jnum(rep.kl_mc);
    j["mc_standard_error"] = jnum(rep.mc_standard_error);
    j["kl_variational"] = jnum(rep.kl_variational);
    j["kl_reference"] = jnum(rep.kl_reference);
    j["kl_normalized"] = jnum(rep.kl_normalized);
    j["degenerate"] = rep.degenerate;
    j["n_samples"] = rep.n_samples;
    j["variance_floor"] = jnum(rep.variance_floor);
    return dump(j, indent);
}

KlzReport klz_report_from_json(const std::string& text) {
    return translating("klz report", [&] {
        const json j = parse_json(text, "klz report");
        check_schema(j, "plrnn-klz-report");
        KlzReport rep;
        rep.kl_mc = dnum(j.at("kl_mc"));
        rep.mc_standard_error = dnum(j.at("mc_standard_error"));
        rep.kl_variational = dnum(j.at("kl_variational"));
        rep.kl_reference = dnum(j.at("kl_reference"));
        rep.kl_normalized = dnum(j.at("kl_normalized"));
        rep.degenerate = j.at("degenerate").get<bool>();
        rep.n_samples = j.at("n_samples").get<int>();
        rep.variance_floor = dnum(j.at("variance_floor"));
        return rep;
    });
}

std::string report_to_json(const LyapunovEstimate& rep, int indent) {
    json j;
    j["schema"] = "plrnn-lyapunov";
    j["version"] = kSchemaVersion;
    j["lambda_max"] = jnum(rep.lambda_max);
    j["d0"] = jnum(rep.d0);
    j["fit_lo"] = rep.fit_lo;
    j["fit_hi"] = rep.fit_hi;
    j["r2"] = jnum(rep.r2);
    j["dt"] = jnum(rep.dt);
    j["curve"] = jvec(rep.curve);
    return dump(j, indent);
}

LyapunovEstimate lyapunov_from_json(const std::string& text) {
    return translating("lyapunov report", [&] {
        const json j = parse_json(text, "lyapunov report");
        check_schema(j, "plrnn-lyapunov");
        LyapunovEstimate rep;
        rep.lambda_max = dnum(j.at("lambda_max"));
        rep.d0 = dnum(j.at("d0"));
        rep.fit_lo = j.at("fit_lo").get<int>();
        rep.fit_hi = j.at("fit_hi").get<int>();
        rep.r2 = dnum(j.at("r2"));
        rep.dt = dnum(j.at("dt"));
        rep.curve = dvec(j.at("curve"), "curve");
        return rep;
    });
}

std::string report_to_json(const PredictionMse& rep, int indent) {
    json j;
    j["schema"] = "plrnn-prediction-mse";
    j["version"] = kSchemaVersion;
    j["obs"] = jvec(rep.obs);
    j["state"] = jvec(rep.state);
    return dump(j, indent);
}

PredictionMse prediction_mse_from_json(const std::string& text) {
    return translating("prediction mse", [&] {
        const json j = parse_json(text, "prediction mse");
        check_schema(j, "plrnn-prediction-mse");
        PredictionMse rep;
        rep.obs = dvec(j.at("obs"), "obs");
        rep.state = dvec(j.at("state"), "state");
        return rep;
    });
}

std::string report_to_json(const AttractorSet& rep, int indent) {
    json j;
    j["schema"] = "plrnn-dynamics";
    j["version"] = kSchemaVersion;
    json fps = json::array();
    for (const auto& fp : rep.fixed_points) {
        json e;
        e["z_star"] = jvec(fp.z_star);
        e["region"] = jbools(fp.region);
        e["eigenvalues"] = jcvec(fp.eigenvalues);
        e["consistent"] = fp.consistent;
        e["stable"] = fp.stable;
        e["degenerate"] = fp.degenerate;
        fps.push_back(std::move(e));
    }
    j["fixed_points"] = std::move(fps);
    json objs = json::array();
    for (const auto& a : rep.attractors) {
        json e;
        e["kind"] = to_string(a.kind);
        e["segment"] = jmat(a.segment);
        e["live"] = jbools(a.live);
        e["basin_hits"] = a.basin_hits;
        e["matched_fixed_point"] = a.matched_fixed_point;
        objs.push_back(std::move(e));
    }
    j["attractors"] = std::move(objs);
    j["n_stable"] = rep.n_stable;
    j["n_unstable"] = rep.n_unstable;
    j["n_unbounded"] = rep.n_unbounded;
    return dump(j, indent);
}

AttractorSet attractor_set_from_json(const std::string& text) {
    return translating("dynamics report", [&] {
        const json j = parse_json(text, "dynamics report");
        check_schema(j, "plrnn-dynamics");
        AttractorSet rep;
        for (const json& e : j.at("fixed_points")) {
            FixedPoint fp;
            fp.z_star = dvec(e.at("z_star"), "z_star");
            fp.region = dbools(e.at("region"), "region");
            fp.eigenvalues = dcvec(e.at("eigenvalues"), "eigenvalues");
            fp.consistent = e.at("consistent").get<bool>();
            fp.stable = e.at("stable").get<bool>();
            fp.degenerate = e.at("degenerate").get<bool>();
            rep.fixed_points.push_back(std::move(fp));
        }
        for (const json& e : j.at("attractors")) {
            Attractor a;
            a.kind = kind_from_string(e.at("kind").get<std::string>());
            a.segment = dmat(e.at("segment"), "segment");
            a.live = dbools(e.at("live"), "live");
            a.basin_hits = e.at("basin_hits").get<int>();
            a.matched_fixed_point = e.at("matched_fixed_point").get<int>();
            rep.attractors.push_back(std::move(a));
        }
        rep.n_stable = j.at("n_stable").get<int>();
        rep.n_unstable = j.at("n_unstable").get<int>();
        rep.n_unbounded = j.at("n_unbounded").get<int>();
        return rep;
    });
}

}  // namespace plrnn
