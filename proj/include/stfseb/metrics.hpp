#pragma once

#include "stfseb/network.hpp"

#include <optional>
#include <span>
#include <vector>

namespace stfseb {

/// MC-averaged class probabilities, one simplex row per example.
struct PredictiveDist {
    Matrix probs;

    /// Row-wise maximum probability (the MSP score).
    std::vector<double> max_prob() const;
    /// Throws NumericError unless every row is a simplex to 1e-9.
    void check() const;
};

struct MetricsReport {
    double acc = 0.0;
    double nll = 0.0;
    double ece = 0.0;
    std::optional<double> auroc;
};

Matrix softmax_rows(const Matrix& logits);

/// Mean of `passes` masked softmax passes; mask i drawn from
/// rng.substream("predict", i). With rho = 0 every pass is deterministic.
PredictiveDist predict(const NetSpec& spec, const Matrix& x, const ParamVector& p, int passes, const Rng& rng);

/// Argmax ties go to the lowest class index.
double accuracy(const PredictiveDist& pred, std::span<const int> labels);
/// −mean ln p(y_b), probabilities floored at 1e-12.
double nll(const PredictiveDist& pred, std::span<const int> labels);
/// Equal-width confidence bins over [0, 1]; confidence 1.0 falls in the top bin.
double ece(const PredictiveDist& pred, std::span<const int> labels, int bins = 10);
/// P(score_in > score_out) + ½ P(tie), computed from mid-ranks.
double auroc(std::span<const double> scores_in, std::span<const double> scores_out);

MetricsReport evaluate(const PredictiveDist& pred, std::span<const int> labels, int ece_bins = 10);

/// Rotates a row-major rows×cols image about its centre by `degrees`
/// (counter-clockwise as displayed), bilinear interpolation, zero fill,
/// clipped to [0, 1].
std::vector<double> rotate(std::span<const double> image, int rows, int cols, double degrees);

/// Rotates every row of `images` (each a rows×cols image).
Matrix rotate_batch(const Matrix& images, int rows, int cols, double degrees);

struct ShiftPoint {
    double angle;
    MetricsReport report;
};

/// ACC/NLL/ECE on rotated copies of `x` for each angle. The same predictive
/// rng is used at every angle.
std::vector<ShiftPoint> shift_eval(const NetSpec& spec, const ParamVector& p, const Matrix& x,
                                   std::span<const int> labels, int rows, int cols, std::span<const double> angles,
                                   int passes, const Rng& rng, int ece_bins = 10);

}  // namespace stfseb
