#pragma once

#include <cmath>

namespace plrnn {

inline double norm_pdf(double x) {
    return 0.3989422804014326779399461 * std::exp(-0.5 * x * x);
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244008444); }

inline double norm_sf(double x) { return 0.5 * std::erfc(x * 0.7071067811865475244008444); }

// Upper-orthant probability P(X > h, Y > k) for standard bivariate normal
// with correlation r. Gauss-Legendre quadrature on the tetrachoric integral,
// with the series form near |r| = 1; absolute accuracy ~5e-16.
double bvn_upper(double h, double k, double r);

// Rectified-Gaussian moments for z ~ N(mu, var), phi(z) = max(z, 0).
double rect_mean(double mu, double var);    // E[phi(z)]
double rect_sqmean(double mu, double var);  // E[phi(z)^2] = E[z phi(z)]

// Cross moments of a bivariate Gaussian (z1, z2) with covariance cov.
double rect_cross_zphi(double mu1, double var1, double mu2, double var2,
                       double cov);  // E[z1 phi(z2)]
double rect_cross_phiphi(double mu1, double var1, double mu2, double var2,
                         double cov);  // E[phi(z1) phi(z2)]

}  // namespace plrnn
