#pragma once

#include "plrnn/types.hpp"

namespace plrnn {

// Symmetric banded matrix, lower-band storage: band(d, j) = A(j+d, j) for
// d = 0..kd. Entries outside the band are structurally zero.
class BandedSpd {
  public:
    BandedSpd() = default;
    BandedSpd(int n, int kd) : n_(n), kd_(kd), band_(MatrixXd::Zero(kd + 1, n)) {
        require(n >= 1 && kd >= 0 && kd < n, ErrorCode::invalid_argument,
                "BandedSpd: bad dimensions");
    }

    int n() const { return n_; }
    int kd() const { return kd_; }

    double& at(int i, int j) { return band_(i - j, j); }  // requires 0 <= i-j <= kd

    double get(int i, int j) const {
        if (i < j) std::swap(i, j);
        const int d = i - j;
        return d <= kd_ ? band_(d, j) : 0.0;
    }

    void add(int i, int j, double v) {
        if (i < j) std::swap(i, j);
        band_(i - j, j) += v;
    }

    void set_zero() { band_.setZero(); }

    void add_diagonal(double v) { band_.row(0).array() += v; }

    MatrixXd dense() const {
        MatrixXd A = MatrixXd::Zero(n_, n_);
        for (int j = 0; j < n_; ++j)
            for (int d = 0; d <= kd_ && j + d < n_; ++d) {
                A(j + d, j) = band_(d, j);
                A(j, j + d) = band_(d, j);
            }
        return A;
    }

    VectorXd matvec(const VectorXd& x) const {
        require(x.size() == n_, ErrorCode::dimension_mismatch, "BandedSpd::matvec size");
        VectorXd y = VectorXd::Zero(n_);
        for (int j = 0; j < n_; ++j) {
            y(j) += band_(0, j) * x(j);
            const int dmax = std::min(kd_, n_ - 1 - j);
            for (int d = 1; d <= dmax; ++d) {
                y(j + d) += band_(d, j) * x(j);
                y(j) += band_(d, j) * x(j + d);
            }
        }
        return y;
    }

    const MatrixXd& raw() const { return band_; }
    MatrixXd& raw() { return band_; }

  private:
    int n_ = 0;
    int kd_ = 0;
    MatrixXd band_;
};

// LDL^T factorization of a banded SPD matrix; the factor keeps the band.
// Throws singular_system on a non-positive pivot (caller may retry with
// diagonal jitter).
class BandedLdlt {
  public:
    explicit BandedLdlt(const BandedSpd& A);

    VectorXd solve(const VectorXd& b) const;
    double log_det() const;

    // Entries of A^{-1} on the band of the factor (exact within the band).
    BandedSpd selected_inverse() const;

    int n() const { return n_; }
    int kd() const { return kd_; }

  private:
    int n_ = 0;
    int kd_ = 0;
    MatrixXd lband_;  // unit lower triangular factor, band storage
    VectorXd d_;
};

}  // namespace plrnn
