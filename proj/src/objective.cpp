#include "stfseb/objective.hpp"

#include <cmath>
#include <stdexcept>

namespace stfseb {

std::string to_string(ObjectiveKind kind) {
    switch (kind) {
        case ObjectiveKind::student_t: return "student_t";
        case ObjectiveKind::gaussian: return "gaussian";
        case ObjectiveKind::map: return "map";
        case ObjectiveKind::mc_dropout: return "mc_dropout";
    }
    return "?";
}

ObjectiveKind objective_kind_from_string(const std::string& s) {
    if (s == "student_t") return ObjectiveKind::student_t;
    if (s == "gaussian") return ObjectiveKind::gaussian;
    if (s == "map") return ObjectiveKind::map;
    if (s == "mc_dropout") return ObjectiveKind::mc_dropout;
    throw std::invalid_argument("unknown objective kind '" + s + "' (student_t, gaussian, map, mc_dropout)");
}

void PriorConfig::validate() const {
    if (kind == ObjectiveKind::student_t && !(nu_theta > 2.0))
        throw std::invalid_argument("prior.nu_theta: nu_theta must exceed 2");
    if (!(sigma_theta > 0.0)) throw std::invalid_argument("prior.sigma_theta: must be positive");
    if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("model.dropout: rho must lie in [0, 1)");
    if (kind == ObjectiveKind::student_t || kind == ObjectiveKind::gaussian) {
        if (!(tau.tau1 > 0.0)) throw std::invalid_argument("prior.tau1: must be positive");
        if (!(tau.tau2 > 0.0)) throw std::invalid_argument("prior.tau2: must be positive");
    }
    if (mc_samples < 1) throw std::invalid_argument("prior.mc_samples: must be at least 1");
    if (predict_samples < 1) throw std::invalid_argument("prior.predict_samples: must be at least 1");
    if (context_points < 1) throw std::invalid_argument("prior.context_points: must be at least 1");
    if (minibatches < 1) throw std::invalid_argument("prior.minibatches: must be at least 1");
}

// ---------------------------------------------------------------------------
// Data term

namespace {

void check_labels(const Matrix& logits, std::span<const int> labels) {
    if (static_cast<std::size_t>(logits.rows()) != labels.size())
        throw std::invalid_argument("data_log_likelihood: logits and labels differ in length");
    for (int y : labels)
        if (y < 0 || y >= logits.cols())
            throw std::invalid_argument("data_log_likelihood: label " + std::to_string(y) + " out of range");
}

double row_logsumexp(const Matrix& logits, Eigen::Index b) {
    const double m = logits.row(b).maxCoeff();
    return m + std::log((logits.row(b).array() - m).exp().sum());
}

bool included(std::span<const std::uint8_t> include, Eigen::Index i) {
    return include.empty() || include[static_cast<std::size_t>(i)] != 0;
}

void check_include(const Vector& theta, std::span<const std::uint8_t> include) {
    if (!include.empty() && include.size() != static_cast<std::size_t>(theta.size()))
        throw std::invalid_argument("weight_penalty: include mask has wrong length");
}

void check_context(const Matrix& f, const CholFactor& kf) {
    if (f.rows() != kf.dim()) throw std::invalid_argument("functional_penalty: context size does not match kernel");
}

}  // namespace

double data_log_likelihood(const Matrix& logits, std::span<const int> labels) {
    check_labels(logits, labels);
    double total = 0.0;
    for (Eigen::Index b = 0; b < logits.rows(); ++b)
        total += logits(b, labels[static_cast<std::size_t>(b)]) - row_logsumexp(logits, b);
    return total;
}

Matrix data_log_likelihood_adjoint(const Matrix& logits, std::span<const int> labels) {
    check_labels(logits, labels);
    Matrix adj(logits.rows(), logits.cols());
    for (Eigen::Index b = 0; b < logits.rows(); ++b) {
        const double lse = row_logsumexp(logits, b);
        adj.row(b) = -(logits.row(b).array() - lse).exp();
        adj(b, labels[static_cast<std::size_t>(b)]) += 1.0;
    }
    return adj;
}

// ---------------------------------------------------------------------------
// Context term

double functional_penalty(const Matrix& context_logits, const CholFactor& kf, double nu) {
    if (!(nu > 2.0)) throw std::invalid_argument("functional_penalty: nu must exceed 2");
    check_context(context_logits, kf);
    const double nc = static_cast<double>(kf.dim());
    double sum = 0.0;
    for (Eigen::Index l = 0; l < context_logits.cols(); ++l)
        sum += std::log1p(mahalanobis_sq(context_logits.col(l), kf) / (nu - 2.0));
    return -0.5 * (nu + nc) * sum;
}

Matrix functional_penalty_adjoint(const Matrix& context_logits, const CholFactor& kf, double nu) {
    if (!(nu > 2.0)) throw std::invalid_argument("functional_penalty: nu must exceed 2");
    check_context(context_logits, kf);
    const double nc = static_cast<double>(kf.dim());
    Matrix solved = chol_solve(kf, Matrix(context_logits));  // K⁻¹ f_l per column
    for (Eigen::Index l = 0; l < context_logits.cols(); ++l) {
        const double q = context_logits.col(l).dot(solved.col(l));
        solved.col(l) *= -(nu + nc) / (nu - 2.0 + q);
    }
    return solved;
}

double gaussian_functional_penalty(const Matrix& context_logits, const CholFactor& kf) {
    check_context(context_logits, kf);
    double sum = 0.0;
    for (Eigen::Index l = 0; l < context_logits.cols(); ++l) sum += mahalanobis_sq(context_logits.col(l), kf);
    return -0.5 * sum;
}

Matrix gaussian_functional_penalty_adjoint(const Matrix& context_logits, const CholFactor& kf) {
    check_context(context_logits, kf);
    return -chol_solve(kf, Matrix(context_logits));
}

// ---------------------------------------------------------------------------
// Weight prior

double weight_penalty(const Vector& theta, double nu, double sigma, double rho, int minibatches,
                      std::span<const std::uint8_t> include) {
    check_include(theta, include);
    const double scale = nu * sigma * sigma;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < theta.size(); ++i)
        if (included(include, i)) sum += std::log1p(theta(i) * theta(i) / scale);
    return -rho * (nu + 1.0) / (2.0 * minibatches) * sum;
}

Vector weight_penalty_grad(const Vector& theta, double nu, double sigma, double rho, int minibatches,
                           std::span<const std::uint8_t> include) {
    check_include(theta, include);
    const double scale = nu * sigma * sigma;
    const double coef = -rho * (nu + 1.0) / static_cast<double>(minibatches);
    Vector g = Vector::Zero(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i)
        if (included(include, i)) g(i) = coef * theta(i) / (scale + theta(i) * theta(i));
    return g;
}

double gaussian_weight_penalty(const Vector& theta, double sigma, double multiplier, int minibatches,
                               std::span<const std::uint8_t> include) {
    check_include(theta, include);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < theta.size(); ++i)
        if (included(include, i)) sum += theta(i) * theta(i);
    return -multiplier / (2.0 * minibatches) * sum / (sigma * sigma);
}

Vector gaussian_weight_penalty_grad(const Vector& theta, double sigma, double multiplier, int minibatches,
                                    std::span<const std::uint8_t> include) {
    check_include(theta, include);
    const double coef = -multiplier / (static_cast<double>(minibatches) * sigma * sigma);
    Vector g = Vector::Zero(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i)
        if (included(include, i)) g(i) = coef * theta(i);
    return g;
}

// ---------------------------------------------------------------------------

CholFactor context_kernel(const NetSpec& spec, const Matrix& context, const ParamVector& extractor,
                          const KernelConfig& tau) {
    return cholesky(build_kernel(features(spec, context, extractor), tau));
}

LossBreakdown evaluate_minibatch(const MinibatchProblem& pb, Tape* tape) {
    const PriorConfig& cfg = pb.cfg;
    cfg.validate();
    if (pb.spec.dropout_rate != cfg.rho)
        throw std::invalid_argument("evaluate_minibatch: network dropout rate and prior rho differ");
    if (pb.masks.empty()) throw std::invalid_argument("evaluate_minibatch: need at least one dropout mask");
    const bool functional = cfg.kind == ObjectiveKind::student_t || cfg.kind == ObjectiveKind::gaussian;
    if (functional && (pb.kernel == nullptr || pb.context.rows() == 0))
        throw std::invalid_argument("evaluate_minibatch: context points and kernel are required");

    std::vector<std::uint8_t> include;
    if (!cfg.prior_on_biases) {
        include = pb.params.bias_indicator();
        for (auto& v : include) v = v ? 0 : 1;
    }

    LossBreakdown out;
    const double inv_s = 1.0 / static_cast<double>(pb.masks.size());
    for (const DropoutMask& mask : pb.masks) {
        if (tape) {
            const auto id = tape->forward(pb.batch.x, &mask);
            const Matrix& logits = tape->output(id);
            out.data_ll += inv_s * data_log_likelihood(logits, pb.batch.y);
            tape->add_output_adjoint(id, inv_s * data_log_likelihood_adjoint(logits, pb.batch.y));
        } else {
            out.data_ll += inv_s * data_log_likelihood(forward(pb.spec, pb.batch.x, pb.params, &mask), pb.batch.y);
        }
        if (!functional) continue;
        const CholFactor& kf = *pb.kernel;
        const bool st = cfg.kind == ObjectiveKind::student_t;
        if (tape) {
            const auto id = tape->forward(pb.context, &mask);
            const Matrix& fc = tape->output(id);
            out.func_penalty += inv_s * (st ? functional_penalty(fc, kf, cfg.nu_theta) : gaussian_functional_penalty(fc, kf));
            tape->add_output_adjoint(id, inv_s * (st ? functional_penalty_adjoint(fc, kf, cfg.nu_theta)
                                                     : gaussian_functional_penalty_adjoint(fc, kf)));
        } else {
            const Matrix fc = forward(pb.spec, pb.context, pb.params, &mask);
            out.func_penalty += inv_s * (st ? functional_penalty(fc, kf, cfg.nu_theta) : gaussian_functional_penalty(fc, kf));
        }
    }

    const Vector& theta = pb.params.theta();
    const int m = cfg.minibatches;
    switch (cfg.kind) {
        case ObjectiveKind::student_t:
            out.weight_penalty = weight_penalty(theta, cfg.nu_theta, cfg.sigma_theta, cfg.rho, m, include);
            if (tape) tape->add_param_adjoint(weight_penalty_grad(theta, cfg.nu_theta, cfg.sigma_theta, cfg.rho, m, include));
            break;
        case ObjectiveKind::gaussian:
        case ObjectiveKind::mc_dropout:
            out.weight_penalty = gaussian_weight_penalty(theta, cfg.sigma_theta, cfg.rho, m, include);
            if (tape) tape->add_param_adjoint(gaussian_weight_penalty_grad(theta, cfg.sigma_theta, cfg.rho, m, include));
            break;
        case ObjectiveKind::map:
            out.weight_penalty = gaussian_weight_penalty(theta, cfg.sigma_theta, 1.0, m, include);
            if (tape) tape->add_param_adjoint(gaussian_weight_penalty_grad(theta, cfg.sigma_theta, 1.0, m, include));
            break;
    }
    out.total = out.data_ll + out.func_penalty + out.weight_penalty;
    if (!std::isfinite(out.total)) throw NumericError("minibatch objective is not finite (divergence)");
    return out;
}

LossWithGrad evaluate_minibatch_with_grad(const MinibatchProblem& problem) {
    LossBreakdown loss;
    auto vg = value_and_grad(problem.spec, problem.params, [&](Tape& tape) {
        loss = evaluate_minibatch(problem, &tape);
        return loss.total;
    });
    return {loss, std::move(vg.grad)};
}

namespace {

LossBreakdown sampled_loss(const NetSpec& spec, const Batch& batch, const Matrix& context, const ParamVector& p,
                           const PriorConfig& cfg, const ParamVector& extractor, const Rng& rng) {
    cfg.validate();
    const auto masks = sample_masks(spec, static_cast<std::size_t>(cfg.mc_samples), rng);
    const bool functional = cfg.kind == ObjectiveKind::student_t || cfg.kind == ObjectiveKind::gaussian;
    CholFactor kf;
    if (functional) kf = context_kernel(spec, context, extractor, cfg.tau);
    const MinibatchProblem pb{spec, p, batch, context, functional ? &kf : nullptr, cfg, masks};
    return evaluate_minibatch(pb);
}

}  // namespace

LossBreakdown minibatch_loss(const NetSpec& spec, const Batch& batch, const Matrix& context, const ParamVector& p,
                             const PriorConfig& cfg, const ParamVector& extractor, const Rng& rng) {
    return sampled_loss(spec, batch, context, p, cfg, extractor, rng);
}

LossBreakdown gaussian_limit_loss(const NetSpec& spec, const Batch& batch, const Matrix& context, const ParamVector& p,
                                  const PriorConfig& cfg, const ParamVector& extractor, const Rng& rng) {
    PriorConfig g = cfg;
    g.kind = ObjectiveKind::gaussian;
    return sampled_loss(spec, batch, context, p, g, extractor, rng);
}

}  // namespace stfseb
