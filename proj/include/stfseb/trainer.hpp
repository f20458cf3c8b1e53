#pragma once

#include "stfseb/data.hpp"
#include "stfseb/objective.hpp"

#include <functional>
#include <string>
#include <vector>

namespace stfseb {

struct TrainConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 128;
    int max_epochs = 100;
    int patience = 10;
    std::uint64_t seed = 0;

    void validate() const;
};

struct AdamState {
    Vector m;
    Vector v;
    long t = 0;

    static AdamState zeros(std::size_t n);
};

/// One bias-corrected Adam step that *descends* along `g`.
void adam_step(ParamVector& p, const Vector& g, AdamState& st, const TrainConfig& cfg);

/// n_c rows drawn uniformly without replacement, or with replacement when
/// n_c exceeds the set size.
Matrix sample_context(const ContextSet& ctx, int n_c, Rng& rng);

/// ⌈N / batch_size⌉.
int minibatch_count(std::size_t n, int batch_size);

/// Shuffled partition of [0, n) into consecutive batches of `batch_size`
/// (the last one may be smaller).
std::vector<std::vector<std::size_t>> make_minibatches(std::size_t n, int batch_size, Rng& rng);

struct TrainState {
    ParamVector params;
    AdamState adam;
    int epoch = 0;  // completed epochs
};

/// Fixed ingredients of a training run.
struct TrainingProblem {
    NetSpec spec;
    ParamVector extractor;
    PriorConfig prior;
    TrainConfig train;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    LossBreakdown train;  // mean over the epoch's minibatches
    double val_nll = 0.0;
    double val_acc = 0.0;
};

struct RunRecord {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;  // 0 = initial parameters
    double best_val_nll = 0.0;
    ParamVector best;
    ParamVector last;
    std::string stop_reason;  // "max_epochs" or "early_stopping"
};

/// One pass over `data`. Per minibatch: sample context points, evaluate the
/// objective and its gradient, then take an Adam step on −total. Returns the
/// mean LossBreakdown over minibatches. Throws NumericError on divergence.
LossBreakdown train_epoch(TrainState& state, const Dataset& data, const ContextSet& ctx, const TrainingProblem& pb);

using EpochCallback = std::function<void(const EpochRecord&, const TrainState&)>;

/// Runs up to max_epochs epochs with early stopping on validation NLL
/// (patience epochs without strict improvement). Validation uses
/// predict_samples passes with a fixed rng stream so epochs are comparable.
RunRecord fit(const Dataset& data, const Dataset& val, const ContextSet& ctx, const TrainingProblem& pb,
              const ParamVector& init, const EpochCallback& on_epoch = {});

}  // namespace stfseb
