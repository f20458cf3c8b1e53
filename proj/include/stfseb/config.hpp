#pragma once

#include "stfseb/objective.hpp"
#include "stfseb/trainer.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace stfseb {

/// Invalid or inconsistent experiment configuration. The message starts with
/// the offending `section.key`.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Where a set of inputs comes from. Not every source is valid for every
/// role: two_moons only for [data], clusters only for [context]/[ood],
/// test/none only for [ood].
struct SourceSpec {
    std::string source;
    std::size_t n = 0;
    // synthetic
    double noise = 0.1;
    double shift = 0.0;
    int clusters = 4;
    double blob_sd = 0.02;
    // files (paths resolved against the config file's directory)
    std::string images;
    std::string labels;
    std::string path;
};

struct DataSpec {
    SourceSpec train;  // train.n = n_train
    int classes = 2;
    std::size_t n_val = 0;
    std::size_t n_test = 0;
    std::string test_images;
    std::string test_labels;
    std::string test_path;
};

struct ModelSpec {
    std::vector<int> hidden{32, 32};
    double dropout = 0.1;
    std::optional<std::vector<int>> dropout_layers;  // nullopt = every hidden layer
    bool prior_on_biases = true;
};

struct EvalSpec {
    int ece_bins = 10;
    std::vector<double> angles{-30, -20, -10, 0, 10, 20, 30};
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string out = "runs/experiment";
    DataSpec data;
    SourceSpec context;
    SourceSpec ood;
    ModelSpec model;
    PriorConfig prior;  // prior.rho mirrors model.dropout
    TrainConfig train;
    EvalSpec eval;
};

/// Parses `[section]` / `key = value` text, then applies `section.key=value`
/// overrides. Unknown sections or keys are errors. Relative file paths are
/// resolved against `base_dir`, overrides included.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {},
                              const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Canonical text form; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& cfg);

/// Cross-field checks and file existence. Throws ConfigError.
void validate(const ExperimentConfig& cfg);

/// Shortest decimal that reads back to the same double.
std::string format_double(double x);

NetSpec make_net_spec(const ExperimentConfig& cfg, int input_dim);

}  // namespace stfseb
