#include "stfseb/trainer.hpp"

#include "stfseb/metrics.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace stfseb {

void TrainConfig::validate() const {
    if (!(lr >= 0.0)) throw std::invalid_argument("train.lr: must be nonnegative");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw std::invalid_argument("train.beta1: must lie in (0, 1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw std::invalid_argument("train.beta2: must lie in (0, 1)");
    if (!(eps > 0.0)) throw std::invalid_argument("train.eps: must be positive");
    if (batch_size < 1) throw std::invalid_argument("train.batch_size: must be at least 1");
    if (max_epochs < 0) throw std::invalid_argument("train.max_epochs: must be nonnegative");
    if (patience < 1 || (max_epochs > 0 && patience > max_epochs))
        throw std::invalid_argument("train.patience: must lie in [1, max_epochs]");
}

AdamState AdamState::zeros(std::size_t n) {
    const auto k = static_cast<Eigen::Index>(n);
    return {Vector::Zero(k), Vector::Zero(k), 0};
}

void adam_step(ParamVector& p, const Vector& g, AdamState& st, const TrainConfig& cfg) {
    if (g.size() != p.theta().size() || st.m.size() != g.size() || st.v.size() != g.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    if (!g.allFinite()) throw NumericError("adam_step: non-finite gradient");
    ++st.t;
    st.m = cfg.beta1 * st.m + (1.0 - cfg.beta1) * g;
    st.v = cfg.beta2 * st.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    Vector& theta = p.theta();
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const double m_hat = st.m(i) / c1;
        const double v_hat = st.v(i) / c2;
        theta(i) -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

Matrix sample_context(const ContextSet& ctx, int n_c, Rng& rng) {
    if (ctx.size() == 0) throw std::invalid_argument("sample_context: empty context set");
    if (n_c < 1) throw std::invalid_argument("sample_context: need at least one context point");
    const std::size_t n = ctx.size();
    const auto want = static_cast<std::size_t>(n_c);
    std::vector<std::size_t> pick;
    if (want <= n) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t i = 0; i < want; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
        pick.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(want));
    } else {
        for (std::size_t i = 0; i < want; ++i) pick.push_back(rng.below(n));
    }
    Matrix out(static_cast<Eigen::Index>(want), ctx.inputs.cols());
    for (std::size_t i = 0; i < want; ++i)
        out.row(static_cast<Eigen::Index>(i)) = ctx.inputs.row(static_cast<Eigen::Index>(pick[i]));
    return out;
}

int minibatch_count(std::size_t n, int batch_size) {
    return static_cast<int>((n + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size));
}

std::vector<std::vector<std::size_t>> make_minibatches(std::size_t n, int batch_size, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

namespace {

bool uses_context(ObjectiveKind kind) { return kind == ObjectiveKind::student_t || kind == ObjectiveKind::gaussian; }

}  // namespace

LossBreakdown train_epoch(TrainState& state, const Dataset& data, const ContextSet& ctx, const TrainingProblem& pb) {
    if (data.size() == 0) throw std::invalid_argument("train_epoch: empty training set");
    pb.train.validate();
    const bool functional = uses_context(pb.prior.kind);
    if (functional && ctx.size() == 0) throw std::invalid_argument("train_epoch: empty context set");

    PriorConfig prior = pb.prior;
    prior.minibatches = minibatch_count(data.size(), pb.train.batch_size);
    prior.validate();

    const int epoch = state.epoch + 1;
    const Rng stream = Rng(pb.train.seed).substream("epoch", static_cast<std::uint64_t>(epoch));
    Rng shuffle_rng = stream.substream("shuffle");
    const auto batches = make_minibatches(data.size(), pb.train.batch_size, shuffle_rng);

    LossBreakdown mean;
    for (std::size_t m = 0; m < batches.size(); ++m) {
        const Dataset part = data.subset(batches[m]);
        const Batch batch{part.inputs, part.labels};
        Matrix context(0, data.dim());
        CholFactor kf;
        if (functional) {
            Rng ctx_rng = stream.substream("context", m);
            context = sample_context(ctx, prior.context_points, ctx_rng);
            kf = context_kernel(pb.spec, context, pb.extractor, prior.tau);
        }
        const auto masks = sample_masks(pb.spec, static_cast<std::size_t>(prior.mc_samples), stream.substream("dropout", m));
        const MinibatchProblem problem{pb.spec, state.params, batch, context, functional ? &kf : nullptr, prior, masks};
        LossWithGrad lg;
        try {
            lg = evaluate_minibatch_with_grad(problem);
        } catch (const NumericError& e) {
            throw NumericError("epoch " + std::to_string(epoch) + ", minibatch " + std::to_string(m + 1) + ": " + e.what());
        }
        // maximise total == descend on −total
        adam_step(state.params, -lg.grad, state.adam, pb.train);
        mean.data_ll += lg.loss.data_ll;
        mean.func_penalty += lg.loss.func_penalty;
        mean.weight_penalty += lg.loss.weight_penalty;
        mean.total += lg.loss.total;
    }
    const double inv = 1.0 / static_cast<double>(batches.size());
    mean.data_ll *= inv;
    mean.func_penalty *= inv;
    mean.weight_penalty *= inv;
    mean.total *= inv;
    state.epoch = epoch;
    return mean;
}

RunRecord fit(const Dataset& data, const Dataset& val, const ContextSet& ctx, const TrainingProblem& pb,
              const ParamVector& init, const EpochCallback& on_epoch) {
    if (val.size() == 0) throw std::invalid_argument("fit: empty validation set");
    pb.train.validate();

    RunRecord rec;
    rec.best = init;
    rec.best_val_nll = std::numeric_limits<double>::infinity();
    rec.stop_reason = "max_epochs";

    TrainState state{init, AdamState::zeros(init.size()), 0};
    const Rng val_rng = Rng(pb.train.seed).substream("validate");
    int since_best = 0;
    for (int e = 1; e <= pb.train.max_epochs; ++e) {
        EpochRecord er;
        er.epoch = e;
        er.train = train_epoch(state, data, ctx, pb);
        const auto pred = predict(pb.spec, val.inputs, state.params, pb.prior.predict_samples, val_rng);
        er.val_nll = nll(pred, val.labels);
        er.val_acc = accuracy(pred, val.labels);
        rec.epochs.push_back(er);
        if (on_epoch) on_epoch(er, state);
        if (er.val_nll < rec.best_val_nll) {
            rec.best_val_nll = er.val_nll;
            rec.best_epoch = e;
            rec.best = state.params;
            since_best = 0;
        } else if (++since_best >= pb.train.patience) {
            rec.stop_reason = "early_stopping";
            break;
        }
    }
    rec.last = state.params;
    return rec;
}

}  // namespace stfseb
