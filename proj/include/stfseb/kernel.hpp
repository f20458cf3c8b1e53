#pragma once

#include "stfseb/numerics.hpp"

namespace stfseb {

/// Variances of the latent linear model behind the empirical prior:
/// tau1 for the feature weights, tau2 for the additive noise.
struct KernelConfig {
    double tau1 = 1.0;
    double tau2 = 1.0;

    void validate() const;
};

/// K = tau1 · H Hᵀ + tau2 · I for a feature matrix H with one row per
/// context point.
SymMatrix build_kernel(const Matrix& features, const KernelConfig& cfg);

/// vᵀ (L Lᵀ)⁻¹ v = ‖L⁻¹ v‖².
double mahalanobis_sq(const Vector& v, const CholFactor& f);

}  // namespace stfseb
