#include "stfseb/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>
#include <sstream>

namespace stfseb {

void Dataset::validate() const {
    if (static_cast<std::size_t>(inputs.rows()) != labels.size())
        throw DataError(name + ": " + std::to_string(inputs.rows()) + " inputs but " + std::to_string(labels.size()) +
                        " labels");
    if (num_classes < 1) throw DataError(name + ": class count must be positive");
    if (inputs.size() > 0) {
        if (!inputs.allFinite()) throw DataError(name + ": non-finite input value");
        if (inputs.minCoeff() < 0.0 || inputs.maxCoeff() > 1.0) throw DataError(name + ": inputs outside [0, 1]");
    }
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw DataError(name + ": label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                            " outside [0, " + std::to_string(num_classes) + ")");
    if (image && image->rows * image->cols != inputs.cols())
        throw DataError(name + ": image shape does not match input width");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.name = name;
    out.num_classes = num_classes;
    out.image = image;
    out.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
    out.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= size()) throw std::out_of_range("Dataset::subset: row index out of range");
        out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(static_cast<Eigen::Index>(rows[i]));
        out.labels.push_back(labels[rows[i]]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

struct GzCloser {
    void operator()(gzFile f) const { gzclose(f); }
};
using GzHandle = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    GzHandle f(gzopen(path.c_str(), "rb"));
    if (!f) throw DataError("cannot open " + path.string());
    std::vector<unsigned char> out;
    unsigned char buf[1 << 16];
    for (;;) {
        const int n = gzread(f.get(), buf, sizeof buf);
        if (n < 0) throw DataError("read error in " + path.string());
        if (n == 0) break;
        out.insert(out.end(), buf, buf + n);
    }
    return out;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at, const std::filesystem::path& path) {
    if (at + 4 > b.size()) throw DataError(path.string() + ": truncated header");
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
           std::uint32_t{b[at + 3]};
}

void put_be32(std::ofstream& os, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                           static_cast<char>(v)};
    os.write(bytes, 4);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, int num_classes) {
    const auto ib = read_all(images);
    const auto lb = read_all(labels);
    if (be32(ib, 0, images) != 0x00000803)
        throw DataError(images.string() + ": bad magic (expected 0x00000803 for an image file)");
    if (be32(lb, 0, labels) != 0x00000801)
        throw DataError(labels.string() + ": bad magic (expected 0x00000801 for a label file)");
    const std::size_t n = be32(ib, 4, images);
    const int rows = static_cast<int>(be32(ib, 8, images));
    const int cols = static_cast<int>(be32(ib, 12, images));
    const std::size_t n_labels = be32(lb, 4, labels);
    if (n != n_labels)
        throw DataError("image count " + std::to_string(n) + " does not match label count " + std::to_string(n_labels));
    const std::size_t pixels = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    if (ib.size() < 16 + n * pixels) throw DataError(images.string() + ": truncated pixel data");
    if (lb.size() < 8 + n) throw DataError(labels.string() + ": truncated label data");

    Dataset out;
    out.name = images.filename().string();
    out.num_classes = num_classes;
    out.image = ImageShape{rows, cols};
    out.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(pixels));
    out.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < pixels; ++k)
            out.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = ib[16 + i * pixels + k] / 255.0;
        out.labels[i] = lb[8 + i];
    }
    out.validate();
    return out;
}

void save_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels) {
    if (!data.image) throw DataError("save_idx: dataset has no image shape");
    std::ofstream im(images, std::ios::binary);
    std::ofstream lb(labels, std::ios::binary);
    if (!im || !lb) throw DataError("save_idx: cannot open output files");
    put_be32(im, 0x00000803);
    put_be32(im, static_cast<std::uint32_t>(data.size()));
    put_be32(im, static_cast<std::uint32_t>(data.image->rows));
    put_be32(im, static_cast<std::uint32_t>(data.image->cols));
    put_be32(lb, 0x00000801);
    put_be32(lb, static_cast<std::uint32_t>(data.size()));
    for (Eigen::Index i = 0; i < data.inputs.rows(); ++i) {
        for (Eigen::Index k = 0; k < data.inputs.cols(); ++k) {
            const double v = std::clamp(data.inputs(i, k), 0.0, 1.0);
            im.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
        }
        lb.put(static_cast<char>(static_cast<unsigned char>(data.labels[static_cast<std::size_t>(i)])));
    }
}

// ---------------------------------------------------------------------------
// Delimited text

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double parse_number(const std::string& field, const std::filesystem::path& path, std::size_t line) {
    double v = 0.0;
    const auto* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (ec != std::errc() || ptr != end || field.empty() || !std::isfinite(v))
        throw DataError(path.string() + ":" + std::to_string(line) + ": non-numeric field '" + field + "'");
    return v;
}

}  // namespace

Dataset load_delimited(const std::filesystem::path& path, int num_classes, std::span<const ColumnRange> ranges,
                       std::vector<ColumnRange>* used_ranges) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::string raw;
    std::size_t line = 0;
    std::size_t width = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::string text = trim(raw);
        if (text.empty() || text.front() == '#') continue;
        std::vector<double> values;
        std::stringstream ss(text);
        std::string field;
        while (std::getline(ss, field, ',')) values.push_back(parse_number(trim(field), path, line));
        if (values.size() < 2) throw DataError(path.string() + ":" + std::to_string(line) + ": need a label and features");
        if (width == 0) width = values.size();
        if (values.size() != width)
            throw DataError(path.string() + ":" + std::to_string(line) + ": ragged row (" + std::to_string(values.size()) +
                            " fields, expected " + std::to_string(width) + ")");
        const double label = values.front();
        if (label != std::floor(label) || label < 0 || label >= num_classes)
            throw DataError(path.string() + ":" + std::to_string(line) + ": label " + std::to_string(label) +
                            " outside [0, " + std::to_string(num_classes) + ")");
        labels.push_back(static_cast<int>(label));
        rows.emplace_back(values.begin() + 1, values.end());
    }

    const std::size_t dim = width == 0 ? 0 : width - 1;
    std::vector<ColumnRange> used(ranges.begin(), ranges.end());
    if (used.empty()) {
        used.assign(dim, ColumnRange{0.0, 0.0});
        for (std::size_t k = 0; k < dim; ++k) {
            double lo = rows.front()[k];
            double hi = lo;
            for (const auto& r : rows) {
                lo = std::min(lo, r[k]);
                hi = std::max(hi, r[k]);
            }
            used[k] = {lo, hi};
        }
    } else if (used.size() != dim && !rows.empty()) {
        throw DataError(path.string() + ": " + std::to_string(used.size()) + " column ranges for " + std::to_string(dim) +
                        " feature columns");
    }

    Dataset out;
    out.name = path.filename().string();
    out.num_classes = num_classes;
    out.labels = std::move(labels);
    out.inputs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t k = 0; k < dim; ++k) {
            const double span = used[k].hi - used[k].lo;
            const double v = span > 0.0 ? std::clamp((rows[i][k] - used[k].lo) / span, 0.0, 1.0) : 0.0;
            out.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v;
        }
    }
    if (used_ranges) *used_ranges = used;
    out.validate();
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic sets

namespace {

constexpr double kMoonScale = 1.0 / 4.0;
constexpr double kMoonOffsetU = 0.125;
constexpr double kMoonOffsetV = 0.3125;

}  // namespace

std::pair<double, double> two_moons_unmap(double u, double v) {
    return {(u - kMoonOffsetU) / kMoonScale - 1.0, (v - kMoonOffsetV) / kMoonScale - 0.5};
}

Dataset make_two_moons(std::size_t n, double noise_sd, Rng& rng) {
    if (n < 2) throw std::invalid_argument("make_two_moons: need at least two points");
    Dataset out;
    out.name = "two_moons";
    out.num_classes = 2;
    out.inputs.resize(static_cast<Eigen::Index>(n), 2);
    out.labels.resize(n);
    const std::size_t n0 = (n + 1) / 2;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = i < n0 ? 0 : 1;
        const double t = std::numbers::pi * rng.uniform();
        double x = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
        double y = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
        x += noise_sd * rng.normal();
        y += noise_sd * rng.normal();
        const auto r = static_cast<Eigen::Index>(i);
        out.inputs(r, 0) = std::clamp(kMoonOffsetU + kMoonScale * (x + 1.0), 0.0, 1.0);
        out.inputs(r, 1) = std::clamp(kMoonOffsetV + kMoonScale * (y + 0.5), 0.0, 1.0);
        out.labels[i] = label;
    }
    out.validate();
    return out;
}

ContextSet make_ood_clusters(std::size_t n, double center_shift, Rng& rng, const Dataset& reference,
                             const ClusterOptions& opts) {
    if (n < 1) throw std::invalid_argument("make_ood_clusters: need at least one point");
    if (reference.size() == 0) throw std::invalid_argument("make_ood_clusters: empty reference dataset");
    if (opts.clusters < 1 || !(opts.blob_sd > 0.0)) throw std::invalid_argument("make_ood_clusters: bad options");
    const Eigen::Index d = reference.dim();

    std::vector<Vector> centers;
    for (int c = 0; c < opts.clusters; ++c) {
        Vector u(d);
        for (Eigen::Index k = 0; k < d; ++k) u(k) = rng.normal();
        u.normalize();
        const Vector proj = reference.inputs * u;
        Eigen::Index anchor = 0;
        proj.maxCoeff(&anchor);
        centers.emplace_back(reference.inputs.row(anchor).transpose() + center_shift * opts.blob_sd * u);
    }

    ContextSet out;
    out.inputs.resize(static_cast<Eigen::Index>(n), d);
    for (std::size_t i = 0; i < n; ++i) {
        const Vector& center = centers[i % centers.size()];
        for (Eigen::Index k = 0; k < d; ++k)
            out.inputs(static_cast<Eigen::Index>(i), k) = std::clamp(center(k) + opts.blob_sd * rng.normal(), 0.0, 1.0);
    }
    return out;
}

Dataset as_dataset(const ContextSet& ctx, int num_classes, std::string name) {
    Dataset out;
    out.inputs = ctx.inputs;
    out.labels.assign(ctx.size(), 0);
    out.num_classes = num_classes;
    out.name = std::move(name);
    return out;
}

}  // namespace stfseb
