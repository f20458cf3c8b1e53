#include "stfseb/distributions.hpp"

#include "stfseb/kernel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace stfseb {

void TDistParams::validate() const {
    if (!(nu > 0.0)) throw std::invalid_argument("TDistParams: nu must be positive");
    if (!(sigma > 0.0)) throw std::invalid_argument("TDistParams: sigma must be positive");
    if (!std::isfinite(mu)) throw std::invalid_argument("TDistParams: mu must be finite");
}

void MvtParams::validate() const {
    if (!(nu > 2.0)) throw std::invalid_argument("MvtParams: nu must exceed 2 for the covariance form");
    if (mu.size() != cov.dim()) throw std::invalid_argument("MvtParams: mean and covariance dimensions differ");
}

double st_log_pdf(double x, const TDistParams& p) {
    p.validate();
    const double nu = p.nu;
    const double var = p.sigma * p.sigma;
    const double z = (x - p.mu) * (x - p.mu) / (nu * var);
    return log_gamma(0.5 * (nu + 1.0)) - log_gamma(0.5 * nu) - 0.5 * std::log(std::numbers::pi * nu * var) -
           0.5 * (nu + 1.0) * std::log1p(z);
}

double mvt_log_pdf(const Vector& x, const MvtParams& p, const CholFactor& f) {
    p.validate();
    if (x.size() != p.mu.size() || f.dim() != p.mu.size())
        throw std::invalid_argument("mvt_log_pdf: dimension mismatch");
    const double d = static_cast<double>(x.size());
    const double nu = p.nu;
    const double q = mahalanobis_sq(x - p.mu, f);
    return log_gamma(0.5 * (nu + d)) - log_gamma(0.5 * nu) - 0.5 * d * std::log((nu - 2.0) * std::numbers::pi) -
           0.5 * log_det(f) - 0.5 * (nu + d) * std::log1p(q / (nu - 2.0));
}

double gaussian_log_pdf(const Vector& x, const Vector& mu, const CholFactor& f) {
    if (x.size() != mu.size() || f.dim() != mu.size())
        throw std::invalid_argument("gaussian_log_pdf: dimension mismatch");
    const double d = static_cast<double>(x.size());
    const double q = mahalanobis_sq(x - mu, f);
    return -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * log_det(f) - 0.5 * q;
}

GsmLatent sample_gsm_latent(double nu, Rng& rng) {
    if (!(nu > 2.0)) throw std::invalid_argument("sample_gsm_latent: nu must exceed 2");
    const double precision = rng.gamma(0.5 * nu, 0.5 * (nu - 2.0));
    return GsmLatent{1.0 / precision};
}

std::vector<Vector> sample_gsm_path(const MvtParams& p, Rng& rng, std::size_t n) {
    p.validate();
    const CholFactor f = cholesky(p.cov);
    const Eigen::Index d = p.mu.size();
    std::vector<Vector> out;
    out.reserve(n);
    Vector z(d);
    for (std::size_t i = 0; i < n; ++i) {
        const double gamma = sample_gsm_latent(p.nu, rng).gamma;
        for (Eigen::Index k = 0; k < d; ++k) z(k) = rng.normal();
        out.emplace_back(p.mu + std::sqrt(gamma) * (f.lower * z));
    }
    return out;
}

}  // namespace stfseb
