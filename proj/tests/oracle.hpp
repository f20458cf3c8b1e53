#pragma once
// Brute-force reference computations for the tests. Plain vectors and loops
// only; nothing here calls into the library.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace oracle {

using Mat = std::vector<std::vector<double>>;
using Vec = std::vector<double>;

inline Mat zeros(std::size_t r, std::size_t c) { return Mat(r, Vec(c, 0.0)); }

inline Mat matmul(const Mat& a, const Mat& b) {
    Mat out = zeros(a.size(), b[0].size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b[0].size(); ++j)
            for (std::size_t k = 0; k < b.size(); ++k) out[i][j] += a[i][k] * b[k][j];
    return out;
}

// Gauss-Jordan with partial pivoting.
inline Mat inverse(Mat a) {
    const std::size_t n = a.size();
    Mat inv = zeros(n, n);
    for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
        if (a[piv][c] == 0.0) throw std::runtime_error("singular");
        std::swap(a[c], a[piv]);
        std::swap(inv[c], inv[piv]);
        const double d = a[c][c];
        for (std::size_t k = 0; k < n; ++k) {
            a[c][k] /= d;
            inv[c][k] /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == c) continue;
            const double f = a[r][c];
            for (std::size_t k = 0; k < n; ++k) {
                a[r][k] -= f * a[c][k];
                inv[r][k] -= f * inv[c][k];
            }
        }
    }
    return inv;
}

// Laplace expansion along the first row.
inline double det_cofactor(const Mat& a) {
    const std::size_t n = a.size();
    if (n == 1) return a[0][0];
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        Mat minor;
        for (std::size_t r = 1; r < n; ++r) {
            Vec row;
            for (std::size_t c = 0; c < n; ++c)
                if (c != j) row.push_back(a[r][c]);
            minor.push_back(row);
        }
        sum += ((j % 2) ? -1.0 : 1.0) * a[0][j] * det_cofactor(minor);
    }
    return sum;
}

inline double quad_form(const Vec& v, const Mat& inv) {
    double q = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) q += v[i] * inv[i][j] * v[j];
    return q;
}

// Dense ReLU net with layer l stored as W[l] (out × in) and b[l].
struct Net {
    std::vector<Mat> W;
    std::vector<Vec> b;
};

// Unpacks a flat θ laid out layer by layer as W (row-major) then b.
inline Net unpack(const std::vector<int>& widths, const Vec& theta) {
    Net net;
    std::size_t k = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const auto in = static_cast<std::size_t>(widths[l]), out = static_cast<std::size_t>(widths[l + 1]);
        Mat w = zeros(out, in);
        for (std::size_t i = 0; i < out; ++i)
            for (std::size_t j = 0; j < in; ++j) w[i][j] = theta[k++];
        Vec bias(out);
        for (std::size_t i = 0; i < out; ++i) bias[i] = theta[k++];
        net.W.push_back(w);
        net.b.push_back(bias);
    }
    return net;
}

// mult[h][u]: multiplier applied after the ReLU of hidden layer h (empty = 1).
// pre, when given, receives the hidden pre-activations of every row.
inline Vec forward_row(const Net& net, const Vec& x, const std::vector<Vec>& mult = {},
                       std::vector<double>* pre = nullptr) {
    Vec a = x;
    for (std::size_t l = 0; l < net.W.size(); ++l) {
        Vec z(net.W[l].size());
        for (std::size_t i = 0; i < z.size(); ++i) {
            z[i] = net.b[l][i];
            for (std::size_t j = 0; j < a.size(); ++j) z[i] += net.W[l][i][j] * a[j];
        }
        if (l + 1 < net.W.size()) {
            for (std::size_t i = 0; i < z.size(); ++i) {
                if (pre) pre->push_back(z[i]);
                z[i] = z[i] > 0.0 ? z[i] : 0.0;
                if (l < mult.size() && !mult[l].empty()) z[i] *= mult[l][i];
            }
        }
        a = z;
    }
    return a;
}

inline Mat forward(const Net& net, const Mat& x, const std::vector<Vec>& mult = {}, std::vector<double>* pre = nullptr) {
    Mat out;
    for (const auto& row : x) out.push_back(forward_row(net, row, mult, pre));
    return out;
}

// Post-ReLU activations of the last hidden layer, no dropout.
inline Mat penultimate(const Net& net, const Mat& x) {
    Net trunc{Net{std::vector<Mat>(net.W.begin(), net.W.end() - 1), std::vector<Vec>(net.b.begin(), net.b.end() - 1)}};
    Mat out;
    for (const auto& row : x) {
        Vec a = row;
        for (std::size_t l = 0; l < trunc.W.size(); ++l) {
            Vec z(trunc.W[l].size());
            for (std::size_t i = 0; i < z.size(); ++i) {
                z[i] = trunc.b[l][i];
                for (std::size_t j = 0; j < a.size(); ++j) z[i] += trunc.W[l][i][j] * a[j];
                z[i] = z[i] > 0.0 ? z[i] : 0.0;
            }
            a = z;
        }
        out.push_back(a);
    }
    return out;
}

inline double log_softmax_at(const Vec& logits, std::size_t y) {
    double s = 0.0;
    for (double v : logits) s += std::exp(v);
    return logits[y] - std::log(s);
}

// The three objective terms written out directly from their definitions.
struct Terms {
    double data = 0.0;
    double func = 0.0;
    double weight = 0.0;
};

struct Problem {
    std::vector<int> widths;
    Vec theta;
    Vec extractor;
    Mat x;
    std::vector<std::size_t> y;
    Mat context;
    std::vector<std::vector<Vec>> masks;  // per sample, per hidden layer multipliers
    double nu = 3.0;
    double sigma = 1.0;
    double rho = 0.1;
    double minibatches = 1.0;
    double tau1 = 1.0;
    double tau2 = 1.0;
    bool gaussian = false;
};

inline Terms objective(const Problem& pb) {
    const Net net = unpack(pb.widths, pb.theta);
    const Net ext = unpack(pb.widths, pb.extractor);
    const Mat h = penultimate(ext, pb.context);
    const std::size_t nc = pb.context.size();
    Mat k = zeros(nc, nc);
    for (std::size_t i = 0; i < nc; ++i)
        for (std::size_t j = 0; j < nc; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < h[i].size(); ++c) dot += h[i][c] * h[j][c];
            k[i][j] = pb.tau1 * dot + (i == j ? pb.tau2 : 0.0);
        }
    const Mat kinv = inverse(k);
    const double s = static_cast<double>(pb.masks.size());

    Terms t;
    for (const auto& mult : pb.masks) {
        const Mat out = forward(net, pb.x, mult);
        for (std::size_t b = 0; b < out.size(); ++b) t.data += log_softmax_at(out[b], pb.y[b]) / s;
        if (pb.context.empty()) continue;
        const Mat fc = forward(net, pb.context, mult);
        for (std::size_t l = 0; l < fc[0].size(); ++l) {
            Vec f(nc);
            for (std::size_t i = 0; i < nc; ++i) f[i] = fc[i][l];
            const double c = quad_form(f, kinv);
            if (pb.gaussian)
                t.func += -0.5 * c / s;
            else
                t.func += -(pb.nu + static_cast<double>(nc)) / 2.0 * std::log(1.0 + c / (pb.nu - 2.0)) / s;
        }
    }
    for (double th : pb.theta) {
        if (pb.gaussian)
            t.weight += -pb.rho / (2.0 * pb.minibatches) * th * th / (pb.sigma * pb.sigma);
        else
            t.weight += -pb.rho * (pb.nu + 1.0) / (2.0 * pb.minibatches) *
                        std::log(1.0 + th * th / (pb.nu * pb.sigma * pb.sigma));
    }
    return t;
}

}  // namespace oracle
