#include "stfseb/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace stfseb {

NetSpec NetSpec::dense(std::vector<int> widths, double dropout_rate) {
    NetSpec spec;
    spec.layer_widths = std::move(widths);
    spec.dropout_rate = dropout_rate;
    for (std::size_t h = 1; h + 1 < spec.layer_widths.size(); ++h) spec.dropout_layers.push_back(static_cast<int>(h));
    return spec;
}

void NetSpec::validate() const {
    if (layer_widths.size() < 2) throw std::invalid_argument("NetSpec: need at least input and output widths");
    for (int w : layer_widths)
        if (w < 1) throw std::invalid_argument("NetSpec: layer widths must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw std::invalid_argument("NetSpec: dropout rate must lie in [0, 1)");
    for (int h : dropout_layers)
        if (h < 1 || static_cast<std::size_t>(h) > num_hidden())
            throw std::invalid_argument("NetSpec: dropout layer " + std::to_string(h) + " is not a hidden layer");
}

std::size_t NetSpec::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l)
        n += static_cast<std::size_t>(layer_widths[l] + 1) * static_cast<std::size_t>(layer_widths[l + 1]);
    return n;
}

bool NetSpec::has_dropout(std::size_t hidden_index) const {
    return std::find(dropout_layers.begin(), dropout_layers.end(), static_cast<int>(hidden_index) + 1) !=
           dropout_layers.end();
}

// ---------------------------------------------------------------------------

ParamVector::ParamVector(const NetSpec& spec) : ParamVector(spec, Vector::Zero(spec.param_count())) {}

ParamVector::ParamVector(const NetSpec& spec, Vector theta) : theta_(std::move(theta)) {
    spec.validate();
    if (static_cast<std::size_t>(theta_.size()) != spec.param_count())
        throw std::invalid_argument("ParamVector: length " + std::to_string(theta_.size()) +
                                    " does not match the network's " + std::to_string(spec.param_count()));
    std::size_t offset = 0;
    for (std::size_t l = 0; l < spec.num_affine(); ++l) {
        const int in = spec.layer_widths[l];
        const int out = spec.layer_widths[l + 1];
        LayerSlot slot{offset, offset + static_cast<std::size_t>(in) * out, in, out};
        layout_.push_back(slot);
        offset = slot.bias_offset + out;
    }
}

Eigen::Map<const Matrix> ParamVector::weight(std::size_t layer) const {
    const auto& s = layout_.at(layer);
    return {theta_.data() + s.weight_offset, s.out, s.in};
}

Eigen::Map<const Vector> ParamVector::bias(std::size_t layer) const {
    const auto& s = layout_.at(layer);
    return {theta_.data() + s.bias_offset, s.out};
}

Eigen::Map<Matrix> ParamVector::weight(std::size_t layer) {
    const auto& s = layout_.at(layer);
    return {theta_.data() + s.weight_offset, s.out, s.in};
}

Eigen::Map<Vector> ParamVector::bias(std::size_t layer) {
    const auto& s = layout_.at(layer);
    return {theta_.data() + s.bias_offset, s.out};
}

std::vector<std::uint8_t> ParamVector::bias_indicator() const {
    std::vector<std::uint8_t> out(size(), 0);
    for (const auto& s : layout_) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(s.bias_offset), s.out, 1);
    return out;
}

ParamVector init_params(const NetSpec& spec, Rng& rng) {
    ParamVector p(spec);
    for (std::size_t l = 0; l < spec.num_affine(); ++l) {
        const auto& s = p.layout()[l];
        const double bound = 1.0 / std::sqrt(static_cast<double>(s.in));
        const std::size_t end = s.bias_offset + s.out;
        for (std::size_t i = s.weight_offset; i < end; ++i)
            p.theta()(static_cast<Eigen::Index>(i)) = bound * (2.0 * rng.uniform() - 1.0);
    }
    return p;
}

// ---------------------------------------------------------------------------

Vector DropoutMask::multiplier(std::size_t hidden) const {
    if (hidden >= bits.size() || bits[hidden].empty()) return {};
    const auto& b = bits[hidden];
    Vector m(static_cast<Eigen::Index>(b.size()));
    for (std::size_t i = 0; i < b.size(); ++i) m(static_cast<Eigen::Index>(i)) = b[i] ? scale : 0.0;
    return m;
}

DropoutMask sample_mask(const NetSpec& spec, Rng& rng) {
    spec.validate();
    DropoutMask mask;
    mask.scale = 1.0 / (1.0 - spec.dropout_rate);
    mask.bits.resize(spec.num_hidden());
    const double keep = 1.0 - spec.dropout_rate;
    for (std::size_t h = 0; h < spec.num_hidden(); ++h) {
        if (!spec.has_dropout(h)) continue;
        auto& b = mask.bits[h];
        b.resize(static_cast<std::size_t>(spec.layer_widths[h + 1]));
        for (auto& bit : b) bit = rng.bernoulli(keep) ? 1 : 0;
    }
    return mask;
}

std::vector<DropoutMask> sample_masks(const NetSpec& spec, std::size_t count, const Rng& rng) {
    std::vector<DropoutMask> out;
    out.reserve(count);
    for (std::size_t s = 0; s < count; ++s) {
        Rng sub = rng.substream("mask", s);
        out.push_back(sample_mask(spec, sub));
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_input(const NetSpec& spec, const Matrix& x) {
    if (x.cols() != spec.input_width())
        throw std::invalid_argument("forward: input width " + std::to_string(x.cols()) + " does not match network input " +
                                    std::to_string(spec.input_width()));
}

void check_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) throw NumericError(std::string(what) + ": non-finite activations (divergence)");
}

// Runs affine layers [0, stop) and returns every activation when `keep` is set.
Matrix run_layers(const NetSpec& spec, const Matrix& x, const ParamVector& p, const DropoutMask* mask,
                  std::size_t stop, std::vector<Matrix>* keep, std::vector<Vector>* mults) {
    Matrix a = x;
    for (std::size_t l = 0; l < stop; ++l) {
        Matrix z = a * p.weight(l).transpose();
        z.rowwise() += p.bias(l).transpose();
        if (l + 1 < spec.num_affine()) {
            z = z.cwiseMax(0.0);
            Vector m = mask ? mask->multiplier(l) : Vector{};
            if (m.size() > 0) z.array().rowwise() *= m.transpose().array();
            if (mults) mults->push_back(std::move(m));
        }
        if (keep) keep->push_back(a);
        a = std::move(z);
    }
    return a;
}

}  // namespace

Matrix forward(const NetSpec& spec, const Matrix& x, const ParamVector& p, const DropoutMask* mask) {
    check_input(spec, x);
    Matrix out = run_layers(spec, x, p, mask, spec.num_affine(), nullptr, nullptr);
    check_finite(out, "forward");
    return out;
}

Matrix features(const NetSpec& spec, const Matrix& x, const ParamVector& p0) {
    check_input(spec, x);
    if (spec.num_hidden() == 0) throw std::invalid_argument("features: network has no hidden layer");
    Matrix out = run_layers(spec, x, p0, nullptr, spec.num_affine() - 1, nullptr, nullptr);
    check_finite(out, "features");
    return out;
}

// ---------------------------------------------------------------------------

Tape::Tape(const NetSpec& spec, const ParamVector& p)
    : spec_(spec), params_(p), param_adjoint_(Vector::Zero(static_cast<Eigen::Index>(p.size()))) {}

Tape::PassId Tape::forward(const Matrix& x, const DropoutMask* mask) {
    check_input(spec_, x);
    Pass pass;
    Matrix out = run_layers(spec_, x, params_, mask, spec_.num_affine(), &pass.acts, &pass.mult);
    check_finite(out, "forward");
    pass.adjoint = Matrix::Zero(out.rows(), out.cols());
    pass.acts.push_back(std::move(out));
    passes_.push_back(std::move(pass));
    return passes_.size() - 1;
}

void Tape::add_output_adjoint(PassId id, const Matrix& adjoint) {
    auto& pass = passes_.at(id);
    if (adjoint.rows() != pass.adjoint.rows() || adjoint.cols() != pass.adjoint.cols())
        throw std::invalid_argument("Tape: adjoint shape does not match pass output");
    pass.adjoint += adjoint;
}

void Tape::add_param_adjoint(const Vector& adjoint) {
    if (adjoint.size() != param_adjoint_.size()) throw std::invalid_argument("Tape: parameter adjoint has wrong length");
    param_adjoint_ += adjoint;
}

Vector Tape::backward() const {
    Vector g = param_adjoint_;
    const std::size_t layers = spec_.num_affine();
    for (const Pass& pass : passes_) {
        Matrix delta = pass.adjoint;  // d/d(pre-activation) of the current layer
        for (std::size_t l = layers; l-- > 0;) {
            const auto& slot = params_.layout()[l];
            const Matrix& a_in = pass.acts[l];
            Eigen::Map<Matrix>(g.data() + slot.weight_offset, slot.out, slot.in).noalias() += delta.transpose() * a_in;
            Eigen::Map<Vector>(g.data() + slot.bias_offset, slot.out) += delta.colwise().sum().transpose();
            if (l == 0) break;
            Matrix up = delta * params_.weight(l);
            // a_in = mult ⊙ relu(z): nonzero exactly where z > 0 and the unit is kept
            up = (a_in.array() > 0.0).select(up, 0.0);
            const Vector& m = pass.mult[l - 1];
            if (m.size() > 0) up.array().rowwise() *= m.transpose().array();
            delta = std::move(up);
        }
    }
    return g;
}

ValueAndGrad value_and_grad(const NetSpec& spec, const ParamVector& p, const TapeLoss& loss) {
    Tape tape(spec, p);
    const double value = loss(tape);
    Vector g = tape.backward();
    if (!std::isfinite(value)) throw NumericError("value_and_grad: non-finite loss");
    if (!g.allFinite()) throw NumericError("value_and_grad: non-finite gradient entries");
    return {value, std::move(g)};
}

Vector grad(const NetSpec& spec, const ParamVector& p, const TapeLoss& loss) {
    return value_and_grad(spec, p, loss).grad;
}

}  // namespace stfseb
