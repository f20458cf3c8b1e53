#include "stfseb/numerics.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

namespace stfseb {

namespace {

constexpr double kLanczosG = 607.0 / 128.0;
constexpr std::array<double, 15> kLanczosCoef = {
    0.99999999999999709182,     57.156235665862923517,     -59.597960355475491248,
    14.136097974741747174,      -0.49191381609762019978,   .33994649984811888699e-4,
    .46523628927048575665e-4,   -.98374475304879564677e-4, .15808870322491248884e-3,
    -.21026444172410488319e-3,  .21743961811521264320e-3,  -.16431810653676389022e-3,
    .84418223983852743293e-4,   -.26190838401581408670e-4, .36899182659531622704e-5,
};

double lanczos_log_gamma(double x) {
    // valid for x >= 0.5
    const double z = x - 1.0;
    double series = kLanczosCoef[0];
    for (std::size_t i = 1; i < kLanczosCoef.size(); ++i) series += kLanczosCoef[i] / (z + static_cast<double>(i));
    const double t = z + kLanczosG + 0.5;
    return 0.5 * std::log(2.0 * std::numbers::pi) + (z + 0.5) * std::log(t) - t + std::log(series);
}

bool try_cholesky(const Matrix& a, double jitter, Matrix& lower) {
    const Eigen::Index n = a.rows();
    lower.setZero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double d = a(j, j) + jitter;
        for (Eigen::Index k = 0; k < j; ++k) d -= lower(j, k) * lower(j, k);
        if (!(d > 0.0) || !std::isfinite(d)) return false;
        const double ljj = std::sqrt(d);
        lower(j, j) = ljj;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (Eigen::Index k = 0; k < j; ++k) s -= lower(i, k) * lower(j, k);
            lower(i, j) = s / ljj;
        }
    }
    return true;
}

}  // namespace

double log_gamma(double x) {
    if (!std::isfinite(x)) throw NumericError("log_gamma: non-finite argument");
    if (x <= 0.0) {
        std::ostringstream os;
        os << "log_gamma: argument must be positive, got " << x;
        throw NumericError(os.str());
    }
    if (x < 0.5) {
        // reflection: Γ(x)Γ(1−x) = π / sin(πx)
        return std::log(std::numbers::pi / std::abs(std::sin(std::numbers::pi * x))) - lanczos_log_gamma(1.0 - x);
    }
    return lanczos_log_gamma(x);
}

SymMatrix::SymMatrix(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() < 1 || entries_.rows() != entries_.cols())
        throw std::invalid_argument("SymMatrix: matrix must be square with dim >= 1");
    const double scale = std::max(entries_.cwiseAbs().maxCoeff(), 1e-300);
    for (Eigen::Index i = 0; i < entries_.rows(); ++i)
        for (Eigen::Index j = i + 1; j < entries_.cols(); ++j)
            if (std::abs(entries_(i, j) - entries_(j, i)) > 1e-12 * scale)
                throw std::invalid_argument("SymMatrix: matrix is not symmetric");
}

SymMatrix SymMatrix::identity(Eigen::Index dim) { return SymMatrix(Matrix::Identity(dim, dim)); }

CholFactor cholesky(const SymMatrix& m, double base_jitter) {
    if (base_jitter < 0.0) throw std::invalid_argument("cholesky: jitter must be nonnegative");
    CholFactor out;
    if (try_cholesky(m.entries(), base_jitter, out.lower)) {
        out.jitter_used = base_jitter;
        return out;
    }
    const double mean_diag = m.mean_diagonal();
    if (!(mean_diag > 0.0)) throw NumericError("cholesky: matrix has nonpositive mean diagonal");
    const double cap = 1e-2 * mean_diag;
    double jitter = std::max(base_jitter * 10.0, 1e-10 * mean_diag);
    for (; jitter <= cap * (1.0 + 1e-12); jitter *= 10.0) {
        if (try_cholesky(m.entries(), jitter, out.lower)) {
            out.jitter_used = jitter;
            return out;
        }
    }
    std::ostringstream os;
    os << "cholesky: matrix is not positive definite even with jitter " << cap
       << " (check tau1/tau2 or degenerate features)";
    throw NumericError(os.str());
}

Vector forward_solve(const CholFactor& f, const Vector& v) {
    if (v.size() != f.dim()) throw std::invalid_argument("forward_solve: dimension mismatch");
    return f.lower.triangularView<Eigen::Lower>().solve(v);
}

Vector chol_solve(const CholFactor& f, const Vector& v) {
    if (v.size() != f.dim()) throw std::invalid_argument("chol_solve: dimension mismatch");
    const auto lower = f.lower.triangularView<Eigen::Lower>();
    Vector y = lower.solve(v);
    return lower.transpose().solve(y);
}

Matrix chol_solve(const CholFactor& f, const Matrix& rhs) {
    if (rhs.rows() != f.dim()) throw std::invalid_argument("chol_solve: dimension mismatch");
    const auto lower = f.lower.triangularView<Eigen::Lower>();
    Matrix y = lower.solve(rhs);
    return lower.transpose().solve(y);
}

double log_det(const CholFactor& f) { return 2.0 * f.lower.diagonal().array().log().sum(); }

// ---------------------------------------------------------------------------

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

Rng Rng::substream(std::string_view label, std::uint64_t index) const {
    // FNV-1a over the label
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return Rng(mix64(mix64(seed_ ^ h) + index));
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() { return normal_(engine_); }

std::size_t Rng::below(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: empty range");
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(engine_);
}

double Rng::gamma(double shape, double rate) {
    if (!(shape > 0.0) || !(rate > 0.0)) throw std::invalid_argument("Rng::gamma: shape and rate must be positive");
    if (shape < 1.0) {
        const double u = uniform();
        return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
}

}  // namespace stfseb
