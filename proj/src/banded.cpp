#include "plrnn/banded.hpp"

namespace plrnn {

BandedLdlt::BandedLdlt(const BandedSpd& A) : n_(A.n()), kd_(A.kd()) {
    lband_ = A.raw();
    d_.resize(n_);
    // In-place banded LDL^T: column j of L only reaches rows j+1..j+kd, so
    // the update of column j needs columns max(0, j-kd)..j-1.
    for (int j = 0; j < n_; ++j) {
        double dj = lband_(0, j);
        const int kmin = std::max(0, j - kd_);
        for (int k = kmin; k < j; ++k) {
            const double ljk = lband_(j - k, k);
            dj -= ljk * ljk * d_(k);
        }
        require(dj > 0.0 && std::isfinite(dj), ErrorCode::singular_system,
                "banded LDL^T: non-positive pivot");
        d_(j) = dj;
        const int imax = std::min(n_ - 1, j + kd_);
        for (int i = j + 1; i <= imax; ++i) {
            double lij = lband_(i - j, j);
            const int kmin2 = std::max(0, i - kd_);
            for (int k = std::max(kmin, kmin2); k < j; ++k)
                lij -= lband_(i - k, k) * lband_(j - k, k) * d_(k);
            lband_(i - j, j) = lij / dj;
        }
        lband_(0, j) = 1.0;
    }
}

VectorXd BandedLdlt::solve(const VectorXd& b) const {
    require(b.size() == n_, ErrorCode::dimension_mismatch, "BandedLdlt::solve size");
    VectorXd y = b;
    for (int j = 0; j < n_; ++j) {
        const double yj = y(j);
        const int imax = std::min(n_ - 1, j + kd_);
        for (int i = j + 1; i <= imax; ++i) y(i) -= lband_(i - j, j) * yj;
    }
    y.array() /= d_.array();
    for (int j = n_ - 1; j >= 0; --j) {
        double yj = y(j);
        const int imax = std::min(n_ - 1, j + kd_);
        for (int i = j + 1; i <= imax; ++i) yj -= lband_(i - j, j) * y(i);
        y(j) = yj;
    }
    return y;
}

double BandedLdlt::log_det() const { return d_.array().log().sum(); }

BandedSpd BandedLdlt::selected_inverse() const {
    // Takahashi recursion restricted to the band. For i <= j,
    //   S(i,j) = delta_ij / d_i - sum_{k>i} L(k,i) S(k,j),
    // and every S(k,j) the sum touches lies inside the band, so the band of
    // the inverse closes under the recursion and comes out exact.
    BandedSpd S(n_, kd_);
    for (int j = n_ - 1; j >= 0; --j) {
        for (int i = j; i >= std::max(0, j - kd_); --i) {
            double s = (i == j) ? 1.0 / d_(i) : 0.0;
            const int kmax = std::min(n_ - 1, i + kd_);
            for (int k = i + 1; k <= kmax; ++k) {
                const double lki = lband_(k - i, i);
                if (lki == 0.0) continue;
                s -= lki * S.get(k, j);
            }
            S.at(j, i) = s;  // stored as (row j+?, col) pair; get() is symmetric
        }
    }
    return S;
}

}  // namespace plrnn
