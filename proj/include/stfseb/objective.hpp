#pragma once

#include "stfseb/kernel.hpp"
#include "stfseb/network.hpp"

#include <span>
#include <string>
#include <vector>

namespace stfseb {

/// Which regulariser the minibatch objective uses.
///   student_t  – heavy-tailed weight prior and functional likelihood
///   gaussian   – their Gaussian (nu -> infinity) counterparts
///   map        – Gaussian weight prior only, multiplier 1, no context term
///   mc_dropout – Gaussian weight prior scaled by rho, no context term
enum class ObjectiveKind { student_t, gaussian, map, mc_dropout };

std::string to_string(ObjectiveKind kind);
ObjectiveKind objective_kind_from_string(const std::string& s);

struct PriorConfig {
    ObjectiveKind kind = ObjectiveKind::student_t;
    double nu_theta = 3.0;
    double sigma_theta = 1.0;
    double rho = 0.1;
    KernelConfig tau;
    int mc_samples = 10;       // S
    int predict_samples = 10;  // Ξ
    int context_points = 32;   // N_c per minibatch
    int minibatches = 1;       // M, set by the trainer from data and batch size
    bool prior_on_biases = true;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

/// Value of the objective to maximise, split into its three terms.
struct LossBreakdown {
    double data_ll = 0.0;
    double func_penalty = 0.0;
    double weight_penalty = 0.0;
    double total = 0.0;
};

struct Batch {
    Matrix x;
    std::vector<int> y;
};

/// Σ_b log softmax(logits_b)[y_b].
double data_log_likelihood(const Matrix& logits, std::span<const int> labels);
/// d/dlogits of data_log_likelihood: onehot(y) − softmax(logits).
Matrix data_log_likelihood_adjoint(const Matrix& logits, std::span<const int> labels);

/// −((ν+N_c)/2) Σ_l ln(1 + c(f_l, K)/(ν−2)), with f_l the columns of
/// `context_logits` (N_c × L) and K = L Lᵀ from `kf`.
double functional_penalty(const Matrix& context_logits, const CholFactor& kf, double nu);
Matrix functional_penalty_adjoint(const Matrix& context_logits, const CholFactor& kf, double nu);

/// Gaussian counterpart: −½ Σ_l c(f_l, K).
double gaussian_functional_penalty(const Matrix& context_logits, const CholFactor& kf);
Matrix gaussian_functional_penalty_adjoint(const Matrix& context_logits, const CholFactor& kf);

/// −(ρ(ν+1)/(2M)) Σ_i ln(1 + θ_i²/(ν σ²)). `include` (optional) selects the
/// entries the prior applies to.
double weight_penalty(const Vector& theta, double nu, double sigma, double rho, int minibatches,
                      std::span<const std::uint8_t> include = {});
Vector weight_penalty_grad(const Vector& theta, double nu, double sigma, double rho, int minibatches,
                           std::span<const std::uint8_t> include = {});

/// −(multiplier/(2M)) Σ_i θ_i²/σ².
double gaussian_weight_penalty(const Vector& theta, double sigma, double multiplier, int minibatches,
                               std::span<const std::uint8_t> include = {});
Vector gaussian_weight_penalty_grad(const Vector& theta, double sigma, double multiplier, int minibatches,
                                    std::span<const std::uint8_t> include = {});

/// Cholesky factor of K(x_c, x_c) built from the frozen extractor's features.
CholFactor context_kernel(const NetSpec& spec, const Matrix& context, const ParamVector& extractor,
                          const KernelConfig& tau);

/// Everything the minibatch objective needs once masks and K are fixed.
struct MinibatchProblem {
    const NetSpec& spec;
    const ParamVector& params;
    const Batch& batch;
    const Matrix& context;
    const CholFactor* kernel;  // null for objectives without a context term
    const PriorConfig& cfg;
    std::span<const DropoutMask> masks;
};

/// Evaluates the objective; when `tape` is given, also seeds the adjoints of
/// `total` so that tape->backward() yields d total / dθ.
LossBreakdown evaluate_minibatch(const MinibatchProblem& problem, Tape* tape = nullptr);

struct LossWithGrad {
    LossBreakdown loss;
    Vector grad;  // d total / dθ
};

LossWithGrad evaluate_minibatch_with_grad(const MinibatchProblem& problem);

/// Samples cfg.mc_samples masks from `rng`, builds K once from the maskless
/// extractor, and evaluates the objective for cfg.kind.
LossBreakdown minibatch_loss(const NetSpec& spec, const Batch& batch, const Matrix& context, const ParamVector& p,
                             const PriorConfig& cfg, const ParamVector& extractor, const Rng& rng);

/// Same as minibatch_loss with the Gaussian penalties regardless of cfg.kind.
LossBreakdown gaussian_limit_loss(const NetSpec& spec, const Batch& batch, const Matrix& context, const ParamVector& p,
                                  const PriorConfig& cfg, const ParamVector& extractor, const Rng& rng);

}  // namespace stfseb
