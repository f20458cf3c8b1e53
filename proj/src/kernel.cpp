#include "stfseb/kernel.hpp"

#include <stdexcept>

namespace stfseb {

void KernelConfig::validate() const {
    if (!(tau1 > 0.0)) throw std::invalid_argument("KernelConfig: tau1 must be positive");
    if (!(tau2 > 0.0)) throw std::invalid_argument("KernelConfig: tau2 must be positive");
}

SymMatrix build_kernel(const Matrix& features, const KernelConfig& cfg) {
    cfg.validate();
    if (features.rows() < 1 || features.cols() < 1)
        throw std::invalid_argument("build_kernel: feature matrix must be non-empty");
    const Eigen::Index n = features.rows();
    Matrix k(n, n);
    // lower triangle, then mirror: exact symmetry
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double v = cfg.tau1 * features.row(i).dot(features.row(j));
            k(i, j) = v;
            k(j, i) = v;
        }
        k(i, i) += cfg.tau2;
    }
    return SymMatrix(std::move(k));
}

double mahalanobis_sq(const Vector& v, const CholFactor& f) {
    if (v.size() != f.dim()) throw std::invalid_argument("mahalanobis_sq: dimension mismatch");
    return forward_solve(f, v).squaredNorm();
}

}  // namespace stfseb
