#include "stfseb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace stfseb {

std::vector<double> PredictiveDist::max_prob() const {
    std::vector<double> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index b = 0; b < probs.rows(); ++b) out[static_cast<std::size_t>(b)] = probs.row(b).maxCoeff();
    return out;
}

void PredictiveDist::check() const {
    for (Eigen::Index b = 0; b < probs.rows(); ++b) {
        if (std::abs(probs.row(b).sum() - 1.0) > 1e-9 || probs.row(b).minCoeff() < 0.0 || probs.row(b).maxCoeff() > 1.0)
            throw NumericError("predictive row " + std::to_string(b) + " is not a probability simplex");
    }
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index b = 0; b < logits.rows(); ++b) {
        const double m = logits.row(b).maxCoeff();
        out.row(b) = (logits.row(b).array() - m).exp();
        out.row(b) /= out.row(b).sum();
    }
    return out;
}

PredictiveDist predict(const NetSpec& spec, const Matrix& x, const ParamVector& p, int passes, const Rng& rng) {
    if (passes < 1) throw std::invalid_argument("predict: need at least one pass");
    PredictiveDist out;
    if (spec.dropout_rate == 0.0) {
        out.probs = softmax_rows(forward(spec, x, p));
    } else {
        out.probs = Matrix::Zero(x.rows(), spec.output_width());
        const auto masks = sample_masks(spec, static_cast<std::size_t>(passes), rng.substream("predict"));
        for (const auto& mask : masks) out.probs += softmax_rows(forward(spec, x, p, &mask));
        out.probs /= static_cast<double>(passes);
    }
    out.check();
    return out;
}

namespace {

void check_sizes(const PredictiveDist& pred, std::span<const int> labels) {
    if (static_cast<std::size_t>(pred.probs.rows()) != labels.size())
        throw std::invalid_argument("metrics: predictions and labels differ in length");
    if (labels.empty()) throw std::invalid_argument("metrics: empty evaluation set");
}

Eigen::Index argmax_row(const Matrix& m, Eigen::Index b) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < m.cols(); ++k)
        if (m(b, k) > m(b, best)) best = k;
    return best;
}

}  // namespace

double accuracy(const PredictiveDist& pred, std::span<const int> labels) {
    check_sizes(pred, labels);
    std::size_t hits = 0;
    for (Eigen::Index b = 0; b < pred.probs.rows(); ++b)
        if (argmax_row(pred.probs, b) == labels[static_cast<std::size_t>(b)]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double nll(const PredictiveDist& pred, std::span<const int> labels) {
    check_sizes(pred, labels);
    double sum = 0.0;
    for (Eigen::Index b = 0; b < pred.probs.rows(); ++b)
        sum -= std::log(std::max(pred.probs(b, labels[static_cast<std::size_t>(b)]), 1e-12));
    return sum / static_cast<double>(labels.size());
}

double ece(const PredictiveDist& pred, std::span<const int> labels, int bins) {
    check_sizes(pred, labels);
    if (bins < 1) throw std::invalid_argument("ece: need at least one bin");
    std::vector<double> conf_sum(static_cast<std::size_t>(bins), 0.0);
    std::vector<double> hit_sum(static_cast<std::size_t>(bins), 0.0);
    std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);
    for (Eigen::Index b = 0; b < pred.probs.rows(); ++b) {
        const Eigen::Index k = argmax_row(pred.probs, b);
        const double conf = pred.probs(b, k);
        auto bin = static_cast<std::size_t>(std::min(static_cast<int>(conf * bins), bins - 1));
        conf_sum[bin] += conf;
        hit_sum[bin] += (k == labels[static_cast<std::size_t>(b)]) ? 1.0 : 0.0;
        ++count[bin];
    }
    const double n = static_cast<double>(labels.size());
    double total = 0.0;
    for (std::size_t i = 0; i < count.size(); ++i)
        if (count[i] > 0) total += std::abs(hit_sum[i] - conf_sum[i]) / n;
    return total;
}

double auroc(std::span<const double> scores_in, std::span<const double> scores_out) {
    if (scores_in.empty() || scores_out.empty()) throw std::invalid_argument("auroc: score lists must be non-empty");
    struct Item {
        double score;
        bool positive;
    };
    std::vector<Item> items;
    items.reserve(scores_in.size() + scores_out.size());
    for (double s : scores_in) items.push_back({s, true});
    for (double s : scores_out) items.push_back({s, false});
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

    // Mann–Whitney U from mid-ranks (1-based)
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < items.size();) {
        std::size_t j = i;
        while (j < items.size() && items[j].score == items[i].score) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (items[k].positive) rank_sum += mid;
        i = j;
    }
    const double n_in = static_cast<double>(scores_in.size());
    const double n_out = static_cast<double>(scores_out.size());
    return (rank_sum - n_in * (n_in + 1.0) / 2.0) / (n_in * n_out);
}

MetricsReport evaluate(const PredictiveDist& pred, std::span<const int> labels, int ece_bins) {
    return MetricsReport{accuracy(pred, labels), nll(pred, labels), ece(pred, labels, ece_bins), std::nullopt};
}

// ---------------------------------------------------------------------------

std::vector<double> rotate(std::span<const double> image, int rows, int cols, double degrees) {
    if (rows < 1 || cols < 1 || image.size() != static_cast<std::size_t>(rows) * cols)
        throw std::invalid_argument("rotate: image size does not match rows × cols");
    const double rad = degrees * std::numbers::pi / 180.0;
    const double c = std::cos(rad);
    const double s = std::sin(rad);
    const double cy = 0.5 * (rows - 1);
    const double cx = 0.5 * (cols - 1);
    auto at = [&](int r, int q) -> double {
        if (r < 0 || r >= rows || q < 0 || q >= cols) return 0.0;
        return image[static_cast<std::size_t>(r) * cols + q];
    };
    std::vector<double> out(image.size());
    for (int r = 0; r < rows; ++r) {
        for (int q = 0; q < cols; ++q) {
            // Display coordinates: x right, y up (= −row). The source of an
            // output pixel is found by rotating it by −degrees.
            const double x = q - cx;
            const double y = cy - r;
            const double sx = c * x + s * y;
            const double sy = -s * x + c * y;
            const double src_r = cy - sy;
            const double src_q = sx + cx;
            const double r0 = std::floor(src_r);
            const double q0 = std::floor(src_q);
            const double fr = src_r - r0;
            const double fq = src_q - q0;
            const int ir = static_cast<int>(r0);
            const int iq = static_cast<int>(q0);
            const double v = (1 - fr) * ((1 - fq) * at(ir, iq) + fq * at(ir, iq + 1)) +
                             fr * ((1 - fq) * at(ir + 1, iq) + fq * at(ir + 1, iq + 1));
            out[static_cast<std::size_t>(r) * cols + q] = std::clamp(v, 0.0, 1.0);
        }
    }
    return out;
}

Matrix rotate_batch(const Matrix& images, int rows, int cols, double degrees) {
    Matrix out(images.rows(), images.cols());
    for (Eigen::Index b = 0; b < images.rows(); ++b) {
        const auto rotated = rotate({images.row(b).data(), static_cast<std::size_t>(images.cols())}, rows, cols, degrees);
        out.row(b) = Eigen::Map<const Eigen::RowVectorXd>(rotated.data(), images.cols());
    }
    return out;
}

std::vector<ShiftPoint> shift_eval(const NetSpec& spec, const ParamVector& p, const Matrix& x,
                                   std::span<const int> labels, int rows, int cols, std::span<const double> angles,
                                   int passes, const Rng& rng, int ece_bins) {
    std::vector<ShiftPoint> out;
    for (double angle : angles) {
        if (std::abs(angle) > 180.0) throw std::invalid_argument("shift_eval: angles must lie within ±180 degrees");
        const Matrix xr = angle == 0.0 ? x : rotate_batch(x, rows, cols, angle);
        out.push_back({angle, evaluate(predict(spec, xr, p, passes, rng), labels, ece_bins)});
    }
    return out;
}

}  // namespace stfseb
