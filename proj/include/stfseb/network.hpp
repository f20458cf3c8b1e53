#pragma once

#include "stfseb/numerics.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace stfseb {

enum class Activation { relu };

/// Dense ReLU network. layer_widths = {input, hidden..., outputs}; affine
/// layer l maps width[l] -> width[l+1]. Hidden layer h (1-based) is the
/// output of affine layer h−1 after the activation.
struct NetSpec {
    std::vector<int> layer_widths;
    double dropout_rate = 0.0;
    std::vector<int> dropout_layers;  // 1-based hidden indices
    Activation activation = Activation::relu;

    /// Dropout after every hidden layer.
    static NetSpec dense(std::vector<int> widths, double dropout_rate);

    void validate() const;
    std::size_t num_affine() const { return layer_widths.size() - 1; }
    std::size_t num_hidden() const { return layer_widths.size() - 2; }
    int input_width() const { return layer_widths.front(); }
    int output_width() const { return layer_widths.back(); }
    std::size_t param_count() const;
    bool has_dropout(std::size_t hidden_index) const;

    bool operator==(const NetSpec&) const = default;
};

struct LayerSlot {
    std::size_t weight_offset;  // out × in, row-major
    std::size_t bias_offset;
    int in;
    int out;
};

/// Flat parameter vector θ with its per-layer layout.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(const NetSpec& spec);  // zeros
    ParamVector(const NetSpec& spec, Vector theta);

    const Vector& theta() const { return theta_; }
    Vector& theta() { return theta_; }
    std::size_t size() const { return static_cast<std::size_t>(theta_.size()); }
    const std::vector<LayerSlot>& layout() const { return layout_; }

    Eigen::Map<const Matrix> weight(std::size_t layer) const;
    Eigen::Map<const Vector> bias(std::size_t layer) const;
    Eigen::Map<Matrix> weight(std::size_t layer);
    Eigen::Map<Vector> bias(std::size_t layer);

    /// 1 for bias entries, 0 for weights.
    std::vector<std::uint8_t> bias_indicator() const;

private:
    Vector theta_;
    std::vector<LayerSlot> layout_;
};

/// Fan-in scaled uniform: every weight and bias of a layer with fan-in n is
/// drawn from U(−1/√n, 1/√n).
ParamVector init_params(const NetSpec& spec, Rng& rng);

/// One keep-bit per hidden unit of each dropout layer. Layers without dropout
/// hold an empty bit vector. Kept units are scaled by `scale` = 1/(1−ρ).
struct DropoutMask {
    std::vector<std::vector<std::uint8_t>> bits;
    double scale = 1.0;

    /// Per-unit multiplier for hidden layer h (0-based); empty if no dropout.
    Vector multiplier(std::size_t hidden) const;
};

DropoutMask sample_mask(const NetSpec& spec, Rng& rng);

/// `count` masks, mask s drawn from rng.substream("mask", s).
std::vector<DropoutMask> sample_masks(const NetSpec& spec, std::size_t count, const Rng& rng);

/// Logits for a batch (rows = examples). mask == nullptr is the deterministic
/// pass. Throws NumericError on non-finite outputs.
Matrix forward(const NetSpec& spec, const Matrix& x, const ParamVector& p, const DropoutMask* mask = nullptr);

/// Post-activation output of the last hidden layer, dropout off.
Matrix features(const NetSpec& spec, const Matrix& x, const ParamVector& p0);

/// Reverse-mode accumulator over network passes. A loss records forward
/// passes, seeds adjoints on their outputs (and directly on θ for parameter
/// terms), then backward() returns dLoss/dθ.
class Tape {
public:
    using PassId = std::size_t;

    Tape(const NetSpec& spec, const ParamVector& p);

    const NetSpec& spec() const { return spec_; }
    const ParamVector& params() const { return params_; }

    PassId forward(const Matrix& x, const DropoutMask* mask);
    const Matrix& output(PassId id) const { return passes_.at(id).acts.back(); }

    void add_output_adjoint(PassId id, const Matrix& adjoint);
    void add_param_adjoint(const Vector& adjoint);

    Vector backward() const;

private:
    struct Pass {
        std::vector<Matrix> acts;  // acts[0] = input, acts[l+1] = output of affine l (post activation/mask)
        std::vector<Vector> mult;  // per hidden layer, empty if unmasked
        Matrix adjoint;
    };

    const NetSpec& spec_;
    const ParamVector& params_;
    std::vector<Pass> passes_;
    Vector param_adjoint_;
};

using TapeLoss = std::function<double(Tape&)>;

struct ValueAndGrad {
    double value;
    Vector grad;
};

ValueAndGrad value_and_grad(const NetSpec& spec, const ParamVector& p, const TapeLoss& loss);

/// dLoss/dθ; throws NumericError if any entry is non-finite.
Vector grad(const NetSpec& spec, const ParamVector& p, const TapeLoss& loss);

}  // namespace stfseb
