#pragma once

#include "stfseb/config.hpp"
#include "stfseb/data.hpp"
#include "stfseb/metrics.hpp"
#include "stfseb/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stfseb {

/// Unreadable checkpoint, or one that does not fit the configured data.
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything a run needs, materialised from a validated config. All random
/// draws come from labelled substreams of Rng(cfg.seed).
struct Experiment {
    ExperimentConfig cfg;
    Dataset train;
    Dataset val;
    Dataset test;
    ContextSet context;
    std::optional<Dataset> ood;
    NetSpec spec;
    ParamVector extractor;  // frozen, random, feeds the context kernel
    ParamVector init;
};

Experiment build_experiment(const ExperimentConfig& cfg);

struct Checkpoint {
    NetSpec spec;
    ParamVector params;
    ParamVector extractor;
    std::uint64_t seed = 0;
    ObjectiveKind objective = ObjectiveKind::student_t;
    int epoch = 0;
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Files every run directory holds.
inline constexpr const char* kConfigFile = "config.ini";
inline constexpr const char* kEpochLog = "epochs.jsonl";
inline constexpr const char* kSummaryFile = "summary.json";
inline constexpr const char* kCheckpointFile = "checkpoint.json";

/// Trains per cfg and writes the run directory `out`. Returns the one-line
/// summary record (also written to summary.json).
std::string cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out);

/// map: no context term, Gaussian weight prior, dropout off, one predictive
/// pass. mc_dropout: Gaussian weight prior scaled by rho, dropout on.
std::string cmd_baseline(const ExperimentConfig& cfg, const std::string& which, const std::filesystem::path& out);

/// Metrics of a checkpoint on the `split` ("train", "val" or "test") of the
/// configured data. One-line JSON.
std::string cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint, const std::string& split);

/// AUROC of MSP scores, test split vs the configured OOD set.
std::string cmd_ood(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint);

/// Metrics per rotation angle on an image split. One JSON line per angle.
std::string cmd_shift(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                      const std::vector<double>& angles, const std::string& split);

/// Grid entries are numbers > 2 or "gaussian".
std::vector<std::string> parse_dof_grid(const std::string& text);

/// One run per grid entry under out/dof-<entry>, then ablation.jsonl and
/// table.txt in `out`. Returns the table text. `jobs` > 1 runs entries on
/// that many threads; results do not depend on it.
std::string cmd_ablate_dof(const ExperimentConfig& cfg, const std::vector<std::string>& grid,
                           const std::filesystem::path& out, int jobs = 1);

/// Problems found in a run directory; empty means it is well formed.
std::vector<std::string> validate_run(const std::filesystem::path& dir);

}  // namespace stfseb
