#pragma once

#include "stfseb/numerics.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stfseb {

/// Raised for malformed input files.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ImageShape {
    int rows;
    int cols;
};

struct Dataset {
    Matrix inputs;  // N × D, each entry in [0, 1]
    std::vector<int> labels;
    std::string name;
    int num_classes = 0;
    std::optional<ImageShape> image;  // set for image datasets

    std::size_t size() const { return labels.size(); }
    Eigen::Index dim() const { return inputs.cols(); }

    /// Finite inputs in [0, 1], labels in [0, num_classes), matching sizes.
    void validate() const;
    Dataset subset(std::span<const std::size_t> rows) const;
};

/// Context inputs only: the functional prior targets zero outputs, so no
/// labels are kept.
struct ContextSet {
    Matrix inputs;

    std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
};

/// Big-endian IDX pair (magic 0x00000803 images, 0x00000801 labels). Gzipped
/// files are read transparently. Pixels are scaled by 1/255.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, int num_classes = 10);

/// Writes an image dataset as an uncompressed IDX pair; pixels are rounded to
/// the nearest of the 256 levels.
void save_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels);

struct ColumnRange {
    double lo;
    double hi;
};

/// Comma-separated rows `label, x1, ..., xD`; lines starting with '#' and
/// blank lines are skipped. Features are min-max normalised per column using
/// `ranges` when given (values outside are clipped), otherwise the observed
/// column ranges; a zero-width range maps to 0. `used_ranges`, when non-null,
/// receives the ranges applied so paired files can share them.
Dataset load_delimited(const std::filesystem::path& path, int num_classes, std::span<const ColumnRange> ranges = {},
                       std::vector<ColumnRange>* used_ranges = nullptr);

/// Two interleaved half circles (class 0 upper arc, class 1 lower arc) with
/// Gaussian noise. The noiseless layout spans [−1, 2] × [−0.5, 1] and is
/// mapped affinely onto [0.125, 0.875] × [0.3125, 0.6875] (scale 1/4); noisy
/// points are clipped to [0, 1]². Class sizes are ⌈n/2⌉ and ⌊n/2⌋.
Dataset make_two_moons(std::size_t n, double noise_sd, Rng& rng);

/// Inverse of the two-moons placement map, for geometry checks.
std::pair<double, double> two_moons_unmap(double u, double v);

struct ClusterOptions {
    int clusters = 4;
    double blob_sd = 0.02;
};

/// Gaussian blobs placed beyond the support of `reference`: for each cluster
/// a random unit direction u is drawn, the reference point with the largest
/// projection onto u is taken as anchor, and the blob is centred at
/// anchor + center_shift · blob_sd · u. Points are clipped to [0, 1]^D.
/// center_shift = 0 puts blobs on training points.
ContextSet make_ood_clusters(std::size_t n, double center_shift, Rng& rng, const Dataset& reference,
                             const ClusterOptions& opts = {});

/// Treats a context set as an unlabelled dataset (labels all 0) for
/// prediction and scoring.
Dataset as_dataset(const ContextSet& ctx, int num_classes, std::string name);

}  // namespace stfseb
