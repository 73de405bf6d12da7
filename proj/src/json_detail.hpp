#pragma once

// Shared JSON plumbing for the writers in serialize.cpp and pipeline.cpp.
// Internal to the library; the public headers stay free of the json type.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>

#include "json.hpp"
#include "plrnn/serialize.hpp"
#include "plrnn/types.hpp"

namespace plrnn::jsondetail {

using json = nlohmann::ordered_json;

// Nonfinite values have no JSON literal; nlohmann would silently emit null.
// NaN maps to null and infinities to tagged strings so a read-back matches.
inline json jnum(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return nullptr;
    return v > 0 ? json("inf") : json("-inf");
}

inline double dnum(const json& j) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    if (j.is_string()) {
        const std::string& s = j.get_ref<const std::string&>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw Error(ErrorCode::parse_error, "unrecognized numeric string '" + s + "'");
    }
    return j.get<double>();
}

inline json jvec(const VectorXd& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(jnum(v(i)));
    return a;
}

inline VectorXd dvec(const json& j, const char* what) {
    if (!j.is_array()) throw Error(ErrorCode::parse_error, std::string(what) + ": expected an array");
    VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = dnum(j[i]);
    return v;
}

inline json jmat(const MatrixXd& m) {
    json data = json::array();
    for (int i = 0; i < m.rows(); ++i)
        for (int c = 0; c < m.cols(); ++c) data.push_back(jnum(m(i, c)));
    json out;
    out["rows"] = m.rows();
    out["cols"] = m.cols();
    out["data"] = std::move(data);
    return out;
}

inline MatrixXd dmat(const json& j, const char* what) {
    if (!j.is_object())
        throw Error(ErrorCode::parse_error, std::string(what) + ": expected a matrix object");
    const auto rows = j.at("rows").get<std::int64_t>();
    const auto cols = j.at("cols").get<std::int64_t>();
    const json& data = j.at("data");
    if (rows < 0 || cols < 0 || !data.is_array() ||
        data.size() != static_cast<std::size_t>(rows * cols))
        throw Error(ErrorCode::parse_error,
                    std::string(what) + ": data length does not match rows*cols");
    MatrixXd m(rows, cols);
    std::size_t k = 0;
    for (int i = 0; i < m.rows(); ++i)
        for (int c = 0; c < m.cols(); ++c) m(i, c) = dnum(data[k++]);
    return m;
}

inline json parse_json(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const std::exception& e) {
        // the library message carries line and column of the offending token
        throw Error(ErrorCode::parse_error, std::string(what) + ": " + e.what());
    }
}

inline void check_schema(const json& j, const char* name) {
    if (!j.is_object() || j.value("schema", std::string()) != name)
        throw Error(ErrorCode::parse_error, std::string("expected a '") + name + "' document");
    const int v = j.value("version", -1);
    if (v != kSchemaVersion)
        throw Error(ErrorCode::parse_error,
                    std::string(name) + ": unsupported version " + std::to_string(v));
}

inline std::string dump(const json& j, int indent) { return indent >= 0 ? j.dump(indent) : j.dump(); }

// Readers access fields through nlohmann, whose exceptions are not ours;
// translate anything it throws into a parse error naming the document.
template <typename Fn>
auto translating(const char* what, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(ErrorCode::parse_error, std::string(what) + ": " + e.what());
    }
}

}  // namespace plrnn::jsondetail
