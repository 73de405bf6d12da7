#include "plrnn/types.hpp"

namespace plrnn {

namespace {

void require_finite(const MatrixXd& m, const std::string& name) {
    require(m.allFinite(), ErrorCode::invalid_argument, name + " contains non-finite entries");
}

void require_finite(const VectorXd& v, const std::string& name) {
    require(v.allFinite(), ErrorCode::invalid_argument, name + " contains non-finite entries");
}

}  // namespace

void PlrnnParams::validate() const {
    const int m = M();
    require(m >= 1, ErrorCode::invalid_argument, "latent dimension M must be >= 1");
    require(mu0.size() == m, ErrorCode::dimension_mismatch, "mu0 length != M");
    require(A.rows() == m && A.cols() == m, ErrorCode::dimension_mismatch, "A must be M x M");
    require(W.rows() == m && W.cols() == m, ErrorCode::dimension_mismatch, "W must be M x M");
    require(C.rows() == m || C.size() == 0, ErrorCode::dimension_mismatch, "C must have M rows");
    require(sigma.size() == m, ErrorCode::dimension_mismatch, "sigma length != M");
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            if (i != j)
                require(A(i, j) == 0.0, ErrorCode::invalid_argument,
                        "A has a nonzero off-diagonal entry");
            else
                require(W(i, i) == 0.0, ErrorCode::invalid_argument,
                        "W has a nonzero diagonal entry");
        }
    require((sigma.array() >= 0.0).all(), ErrorCode::invalid_argument,
            "sigma has a negative entry");
    require_finite(mu0, "mu0");
    require_finite(A, "A");
    require_finite(W, "W");
    require_finite(h, "h");
    if (C.size() > 0) require_finite(C, "C");
    require_finite(sigma, "sigma");
}

void HrfKernel::validate() const {
    require(tr > 0.0, ErrorCode::invalid_argument, "hrf tr must be positive");
    require(taps.size() >= 1, ErrorCode::invalid_argument, "hrf kernel needs at least one tap");
    require_finite(taps, "hrf taps");
}

void ObsParamsLinear::validate(int M) const {
    require(B.rows() >= 1, ErrorCode::invalid_argument, "observation dimension N must be >= 1");
    require(B.cols() == M, ErrorCode::dimension_mismatch, "B must have M columns");
    require(gamma.size() == B.rows(), ErrorCode::dimension_mismatch, "gamma length != N");
    require((gamma.array() >= 0.0).all(), ErrorCode::invalid_argument,
            "gamma has a negative entry");
    require_finite(B, "B");
    require_finite(gamma, "gamma");
}

void ObsParamsBold::validate(int M) const {
    require(B.rows() >= 1, ErrorCode::invalid_argument, "observation dimension N must be >= 1");
    require(B.cols() == M, ErrorCode::dimension_mismatch, "B must have M columns");
    require(J.rows() == B.rows() || J.size() == 0, ErrorCode::dimension_mismatch,
            "J must have N rows");
    require(gamma.size() == B.rows(), ErrorCode::dimension_mismatch, "gamma length != N");
    require((gamma.array() >= 0.0).all(), ErrorCode::invalid_argument,
            "gamma has a negative entry");
    require_finite(B, "B");
    if (J.size() > 0) require_finite(J, "J");
    require_finite(gamma, "gamma");
    hrf.validate();
}

const MatrixXd& ModelBundle::B() const {
    return is_bold() ? std::get<ObsParamsBold>(observation).B
                     : std::get<ObsParamsLinear>(observation).B;
}

const VectorXd& ModelBundle::gamma() const {
    return is_bold() ? std::get<ObsParamsBold>(observation).gamma
                     : std::get<ObsParamsLinear>(observation).gamma;
}

int ModelBundle::N() const {
    return is_bold() ? std::get<ObsParamsBold>(observation).N()
                     : std::get<ObsParamsLinear>(observation).N();
}

void ModelBundle::validate() const {
    latent.validate();
    if (is_bold())
        std::get<ObsParamsBold>(observation).validate(latent.M());
    else
        std::get<ObsParamsLinear>(observation).validate(latent.M());
}

void Trajectory::validate() const {
    require(values.rows() >= 1, ErrorCode::invalid_argument, "trajectory must have T >= 1");
    require(dt > 0.0, ErrorCode::invalid_argument, "trajectory dt must be positive");
    if (inputs)
        require(inputs->rows() == values.rows(), ErrorCode::dimension_mismatch,
                "inputs row count != T");
    if (nuisance)
        require(nuisance->rows() == values.rows(), ErrorCode::dimension_mismatch,
                "nuisance row count != T");
}

}  // namespace plrnn
