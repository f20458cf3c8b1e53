#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace stfseb {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Raised when a numerical precondition fails (non-SPD kernel, bad domain,
/// non-finite values).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Scalar primitives
// ---------------------------------------------------------------------------

/// ln Γ(x). Lanczos approximation (g = 607/128, 15 terms) with reflection for
/// x < 0.5. Throws NumericError at the poles (x a non-positive integer) and
/// for x <= 0 in general, since only positive arguments are meaningful here.
double log_gamma(double x);

// ---------------------------------------------------------------------------
// Dense symmetric matrices and their Cholesky factors
// ---------------------------------------------------------------------------

class SymMatrix {
public:
    SymMatrix() = default;
    /// Checks symmetry to 1e-12 relative to the largest entry.
    explicit SymMatrix(Matrix entries);

    static SymMatrix identity(Eigen::Index dim);

    Eigen::Index dim() const { return entries_.rows(); }
    const Matrix& entries() const { return entries_; }
    double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }
    double mean_diagonal() const { return entries_.diagonal().mean(); }

private:
    Matrix entries_;
};

struct CholFactor {
    Matrix lower;
    double jitter_used = 0.0;

    Eigen::Index dim() const { return lower.rows(); }
};

/// Jitter schedule: first attempt uses `base_jitter`; on failure the jitter
/// restarts at 1e-10 * mean diagonal (or escalates ×10 from base_jitter when
/// that is larger) and grows ×10 until it would exceed 1e-2 * mean diagonal.
CholFactor cholesky(const SymMatrix& m, double base_jitter = 0.0);

/// Solves (L Lᵀ) x = v.
Vector chol_solve(const CholFactor& f, const Vector& v);

/// Solves L y = v (forward substitution only).
Vector forward_solve(const CholFactor& f, const Vector& v);

/// Applies (L Lᵀ)⁻¹ to every column of `rhs`.
Matrix chol_solve(const CholFactor& f, const Matrix& rhs);

/// 2·Σ ln L_ii.
double log_det(const CholFactor& f);

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

/// Seeded generator with labelled substreams. A substream is a fresh generator
/// whose seed is a hash of (parent seed, label, index); it never consumes
/// draws from the parent, so the order in which substreams are created does
/// not affect any stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t seed() const { return seed_; }
    Rng substream(std::string_view label, std::uint64_t index = 0) const;

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    double normal();
    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n);
    /// Gamma(shape, rate) via Marsaglia–Tsang squeeze; shape < 1 is boosted
    /// with the U^(1/shape) trick.
    double gamma(double shape, double rate);
    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// splitmix64 finaliser; exposed for seed derivation in tools.
std::uint64_t mix64(std::uint64_t x);

}  // namespace stfseb
