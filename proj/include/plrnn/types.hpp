#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace plrnn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class ErrorCode {
    invalid_argument = 1,
    dimension_mismatch,
    io_error,
    parse_error,
    singular_system,
    not_converged,
    unstable,
    internal,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, ErrorCode code, const std::string& msg) {
    if (!cond) fail(code, msg);
}

enum class Nonlinearity { relu, identity };

inline const char* to_string(Nonlinearity nl) {
    return nl == Nonlinearity::relu ? "relu" : "identity";
}

// Latent dynamics z_t = A z_{t-1} + W phi(z_{t-1}) + h + C s_t + eps_t.
// A carries the self-couplings on its diagonal only; W carries the
// cross-couplings with an exactly zero diagonal.
struct PlrnnParams {
    VectorXd mu0;   // M, mean offset of z_1
    MatrixXd A;     // M x M, diagonal
    MatrixXd W;     // M x M, zero diagonal
    VectorXd h;     // M, bias
    MatrixXd C;     // M x K, input loading (K may be 0)
    VectorXd sigma; // M, diagonal of the process noise covariance
    Nonlinearity phi = Nonlinearity::relu;

    int M() const { return static_cast<int>(h.size()); }
    int K() const { return static_cast<int>(C.cols()); }
    void validate() const;
};

// Sampled haemodynamic response kernel. taps[i] is the response at lag
// i*tr seconds after an impulse; the windowed convolution used by the
// BOLD head applies taps.tail(1) to the current sample (see hrf.hpp).
struct HrfKernel {
    double tr = 1.0;  // sampling interval in seconds
    VectorXd taps;    // n >= 1

    int n() const { return static_cast<int>(taps.size()); }
    void validate() const;
};

struct ObsParamsLinear {
    MatrixXd B;     // N x M
    VectorXd gamma; // N, diagonal of the observation noise covariance

    int N() const { return static_cast<int>(B.rows()); }
    void validate(int M) const;
};

struct ObsParamsBold {
    MatrixXd B;     // N x M
    MatrixXd J;     // N x P, nuisance loading (P may be 0)
    VectorXd gamma; // N
    HrfKernel hrf;

    int N() const { return static_cast<int>(B.rows()); }
    int P() const { return static_cast<int>(J.cols()); }
    void validate(int M) const;
};

struct TrainingStepLog {
    std::string step;
    double q = 0.0;          // expected joint log-likelihood at the step's noise level
    double q_rescaled = 0.0; // same residuals evaluated with unit process noise
    int em_iterations = 0;
};

struct ModelMeta {
    std::uint64_t seed = 0;
    std::string provenance;
    std::vector<TrainingStepLog> training_log;
};

struct ModelBundle {
    PlrnnParams latent;
    std::variant<ObsParamsLinear, ObsParamsBold> observation = ObsParamsLinear{};
    ModelMeta meta;

    bool is_bold() const { return std::holds_alternative<ObsParamsBold>(observation); }
    const MatrixXd& B() const;
    const VectorXd& gamma() const;
    int M() const { return latent.M(); }
    int K() const { return latent.K(); }
    int N() const;
    int P() const { return is_bold() ? std::get<ObsParamsBold>(observation).P() : 0; }
    void validate() const;
};

// A multivariate time series, latent or observed. values is T x D with one
// row per time step; inputs/nuisance, when present, have matching T.
struct Trajectory {
    MatrixXd values;
    std::optional<MatrixXd> inputs;
    std::optional<MatrixXd> nuisance;
    double dt = 1.0;
    bool unstable = false;

    int T() const { return static_cast<int>(values.rows()); }
    int dim() const { return static_cast<int>(values.cols()); }
    void validate() const;
};

// Default blow-up guard for free-running simulation.
inline constexpr double kDivergenceThreshold = 1e8;

}  // namespace plrnn
