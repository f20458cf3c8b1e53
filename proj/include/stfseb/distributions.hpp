#pragma once

#include "stfseb/numerics.hpp"

#include <vector>

namespace stfseb {

/// Univariate Student's t in scale form: ST(nu, mu, sigma²).
struct TDistParams {
    double nu = 3.0;
    double mu = 0.0;
    double sigma = 1.0;

    void validate() const;
};

/// Multivariate Student's t in covariance form: Cov[x] = K for nu > 2.
struct MvtParams {
    double nu = 3.0;
    Vector mu;
    SymMatrix cov;

    void validate() const;
};

/// Scale latent of the Gaussian scale mixture: x | gamma ~ N(mu, gamma·K).
struct GsmLatent {
    double gamma = 1.0;
};

double st_log_pdf(double x, const TDistParams& p);

/// `f` must factor p.cov.
double mvt_log_pdf(const Vector& x, const MvtParams& p, const CholFactor& f);

/// Multivariate normal log-density with covariance L Lᵀ.
double gaussian_log_pdf(const Vector& x, const Vector& mu, const CholFactor& f);

/// Draws gamma with 1/gamma ~ Gamma(shape nu/2, rate (nu−2)/2); E[gamma] = 1.
GsmLatent sample_gsm_latent(double nu, Rng& rng);

/// Draws n vectors from MVT(nu, mu, K) through the scale-mixture construction.
std::vector<Vector> sample_gsm_path(const MvtParams& p, Rng& rng, std::size_t n);

}  // namespace stfseb
