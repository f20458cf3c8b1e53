// Experiment front-end. Exit codes: 0 ok, 1 invalid config/input, 2 runtime failure.
#include "stfseb/experiment.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace stfseb;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> sets;
    std::string out;
    std::string checkpoint;
    std::string split = "test";
    std::string angles;
    std::string grid = "2.1,3,5,10,20,gaussian";
    std::string which = "map";
    int jobs = 1;
    std::string run_dir;
};

ExperimentConfig effective_config(const Options& o) {
    ExperimentConfig cfg = load_config(o.config, o.sets);
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.train.seed = *o.seed;
    }
    if (!o.out.empty()) cfg.out = o.out;
    validate(cfg);
    return cfg;
}

std::vector<double> parse_angles(const std::string& text, const std::vector<double>& fallback) {
    if (text.empty()) return fallback;
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double a = 0.0;
        try {
            a = std::stod(item, &used);
        } catch (const std::exception&) {
            throw ConfigError("--angles: bad angle '" + item + "'");
        }
        if (item.find_first_not_of(" \t", used) != std::string::npos) throw ConfigError("--angles: bad angle '" + item + "'");
        out.push_back(a);
    }
    return out;
}

fs::path checkpoint_of(const Options& o, const ExperimentConfig& cfg) {
    return o.checkpoint.empty() ? fs::path(cfg.out) / kCheckpointFile : fs::path(o.checkpoint);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stfseb: Student's-t function-space empirical Bayes experiments"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "experiment config (INI)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "override run.seed");
        sub->add_option("--set", o.sets, "override section.key=value (repeatable)");
    };
    auto* train = app.add_subcommand("train", "fit a model and write a run directory");
    common(train);
    train->add_option("--out", o.out, "run directory (default run.out)");

    auto* baseline = app.add_subcommand("baseline", "fit a MAP or MC-dropout baseline");
    common(baseline);
    baseline->add_option("--out", o.out, "run directory (default run.out)");
    baseline->add_option("--which", o.which, "map or mc_dropout")->check(CLI::IsMember({"map", "mc_dropout"}));

    auto* eval = app.add_subcommand("eval", "ACC/NLL/ECE of a checkpoint");
    common(eval);
    auto* ood = app.add_subcommand("ood", "AUROC of max softmax probability, test vs OOD set");
    common(ood);
    auto* shift = app.add_subcommand("shift", "metrics under input rotation");
    common(shift);
    for (auto* sub : {eval, ood, shift}) {
        sub->add_option("--checkpoint", o.checkpoint, "checkpoint file (default <run.out>/checkpoint.json)");
        sub->add_option("--out", o.out, "run directory holding the checkpoint");
    }
    for (auto* sub : {eval, shift}) sub->add_option("--split", o.split, "train, val or test");
    shift->add_option("--angles", o.angles, "comma-separated degrees (default eval.angles)");

    auto* ablate = app.add_subcommand("ablate-dof", "one run per weight-prior dof");
    common(ablate);
    ablate->add_option("--out", o.out, "output directory (default run.out)");
    ablate->add_option("--grid", o.grid, "comma-separated dof values and/or gaussian");
    ablate->add_option("--jobs", o.jobs, "parallel runs")->check(CLI::PositiveNumber);

    auto* check = app.add_subcommand("validate-run", "check a run directory's contents");
    check->add_option("dir", o.run_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (check->parsed()) {
            const auto problems = validate_run(o.run_dir);
            for (const auto& p : problems) std::cerr << p << "\n";
            if (!problems.empty()) return 1;
            std::cout << "ok\n";
            return 0;
        }
        const ExperimentConfig cfg = effective_config(o);
        if (train->parsed()) {
            std::cout << cmd_train(cfg, cfg.out) << "\n";
        } else if (baseline->parsed()) {
            std::cout << cmd_baseline(cfg, o.which, cfg.out) << "\n";
        } else if (eval->parsed()) {
            std::cout << cmd_eval(cfg, checkpoint_of(o, cfg), o.split) << "\n";
        } else if (ood->parsed()) {
            std::cout << cmd_ood(cfg, checkpoint_of(o, cfg)) << "\n";
        } else if (shift->parsed()) {
            std::cout << cmd_shift(cfg, checkpoint_of(o, cfg), parse_angles(o.angles, cfg.eval.angles), o.split);
        } else if (ablate->parsed()) {
            std::cout << cmd_ablate_dof(cfg, parse_dof_grid(o.grid), cfg.out, o.jobs);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 1;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
