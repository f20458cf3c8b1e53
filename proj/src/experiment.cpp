#include "stfseb/experiment.hpp"

#include "json.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace stfseb {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::vector<std::size_t> permutation(std::size_t n, Rng rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(idx);
    return idx;
}

Dataset take(const Dataset& d, const std::vector<std::size_t>& order, std::size_t from, std::size_t count,
             const std::string& key, const std::string& name) {
    if (from + count > d.size())
        throw ConfigError(key + ": asks for " + std::to_string(from + count) + " rows but " + d.name + " has " +
                          std::to_string(d.size()));
    std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(from),
                                  order.begin() + static_cast<std::ptrdiff_t>(from + count));
    Dataset out = d.subset(rows);
    out.name = name;
    return out;
}

// Reads a file-backed source. `ranges` carries csv normalisation shared
// with the training file.
Dataset load_source(const SourceSpec& s, int classes, const std::vector<ColumnRange>& ranges) {
    if (s.source == "idx") return load_idx(s.images, s.labels, classes);
    return load_delimited(s.path, classes, ranges);
}

void check_dim(const std::string& key, Eigen::Index got, Eigen::Index want) {
    if (got != want)
        throw ConfigError(key + ": input dimension " + std::to_string(got) + " differs from the training data's " +
                          std::to_string(want));
}

}  // namespace

Experiment build_experiment(const ExperimentConfig& cfg) {
    validate(cfg);
    Experiment ex;
    ex.cfg = cfg;
    const Rng root(cfg.seed);
    const Rng data_rng = root.substream("data");
    const auto& d = cfg.data;
    std::vector<ColumnRange> ranges;

    if (d.train.source == "two_moons") {
        Rng r1 = data_rng.substream("train"), r2 = data_rng.substream("val"), r3 = data_rng.substream("test");
        ex.train = make_two_moons(d.train.n, d.train.noise, r1);
        ex.val = make_two_moons(d.n_val, d.train.noise, r2);
        ex.test = make_two_moons(d.n_test, d.train.noise, r3);
    } else {
        const Dataset full = d.train.source == "idx" ? load_idx(d.train.images, d.train.labels, d.classes)
                                                     : load_delimited(d.train.path, d.classes, {}, &ranges);
        const auto order = permutation(full.size(), data_rng.substream("split"));
        ex.train = take(full, order, 0, d.train.n, "data.n_train", "train");
        ex.val = take(full, order, d.train.n, d.n_val, "data.n_val", "val");
        const bool separate = !d.test_images.empty() || !d.test_path.empty();
        if (separate) {
            const Dataset tfull = d.train.source == "idx" ? load_idx(d.test_images, d.test_labels, d.classes)
                                                          : load_delimited(d.test_path, d.classes, ranges);
            check_dim("data.test", tfull.dim(), full.dim());
            ex.test = take(tfull, permutation(tfull.size(), data_rng.substream("test")), 0, d.n_test, "data.n_test",
                           "test");
        } else {
            ex.test = take(full, order, d.train.n + d.n_val, d.n_test, "data.n_test", "test");
        }
    }
    ex.train.name = "train";
    ex.val.name = "val";
    ex.test.name = "test";

    const Rng ctx_rng = root.substream("context");
    if (cfg.context.source == "clusters") {
        Rng r = ctx_rng;
        ex.context = make_ood_clusters(cfg.context.n, cfg.context.shift, r, ex.train,
                                       {cfg.context.clusters, cfg.context.blob_sd});
    } else {
        const Dataset c = load_source(cfg.context, d.classes, ranges);
        check_dim("context.source", c.dim(), ex.train.dim());
        ex.context.inputs = take(c, permutation(c.size(), ctx_rng), 0, cfg.context.n, "context.n", "context").inputs;
    }

    const Rng ood_rng = root.substream("ood");
    if (cfg.ood.source == "clusters") {
        Rng r = ood_rng;
        ex.ood = as_dataset(make_ood_clusters(cfg.ood.n, cfg.ood.shift, r, ex.train, {cfg.ood.clusters, cfg.ood.blob_sd}),
                            d.classes, "ood");
    } else if (cfg.ood.source == "test") {
        ex.ood = ex.test;
        ex.ood->name = "ood";
    } else if (cfg.ood.source != "none") {
        const Dataset o = load_source(cfg.ood, d.classes, ranges);
        check_dim("ood.source", o.dim(), ex.train.dim());
        ex.ood = take(o, permutation(o.size(), ood_rng), 0, cfg.ood.n, "ood.n", "ood");
    }

    ex.spec = make_net_spec(cfg, static_cast<int>(ex.train.dim()));
    Rng ext_rng = root.substream("extractor");
    ex.extractor = init_params(ex.spec, ext_rng);
    Rng init_rng = root.substream("init");
    ex.init = init_params(ex.spec, init_rng);
    return ex;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json spec_json(const NetSpec& s) {
    return json{{"layer_widths", s.layer_widths}, {"dropout_rate", s.dropout_rate}, {"dropout_layers", s.dropout_layers}};
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_std(const std::vector<double>& v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
    return out;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + p.string());
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const fs::path& path) {
    json j{{"format", "stfseb-checkpoint"},
           {"version", 1},
           {"seed", ck.seed},
           {"objective", to_string(ck.objective)},
           {"epoch", ck.epoch},
           {"net", spec_json(ck.spec)},
           {"theta", to_std(ck.params.theta())},
           {"extractor", to_std(ck.extractor.theta())}};
    write_text(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::string text;
    try {
        text = read_text(path);
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("checkpoint: ") + e.what());
    }
    try {
        const json j = json::parse(text);
        if (j.at("format") != "stfseb-checkpoint") throw CheckpointError("checkpoint: not a stfseb checkpoint");
        if (j.at("version") != 1) throw CheckpointError("checkpoint: unsupported version");
        Checkpoint ck;
        ck.seed = j.at("seed").get<std::uint64_t>();
        ck.objective = objective_kind_from_string(j.at("objective").get<std::string>());
        ck.epoch = j.at("epoch").get<int>();
        const auto& n = j.at("net");
        ck.spec.layer_widths = n.at("layer_widths").get<std::vector<int>>();
        ck.spec.dropout_rate = n.at("dropout_rate").get<double>();
        ck.spec.dropout_layers = n.at("dropout_layers").get<std::vector<int>>();
        ck.spec.validate();
        const auto theta = j.at("theta").get<std::vector<double>>();
        const auto ext = j.at("extractor").get<std::vector<double>>();
        if (theta.size() != ck.spec.param_count() || ext.size() != ck.spec.param_count())
            throw CheckpointError("checkpoint: parameter count does not match the network");
        ck.params = ParamVector(ck.spec, from_std(theta));
        ck.extractor = ParamVector(ck.spec, from_std(ext));
        return ck;
    } catch (const CheckpointError&) {
        throw;
    } catch (const std::exception& e) {
        throw CheckpointError("checkpoint " + path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Commands

namespace {

json num_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json report_json(const MetricsReport& r) {
    json j{{"acc", r.acc}, {"nll", r.nll}, {"ece", r.ece}};
    if (r.auroc) j["auroc"] = *r.auroc;
    return j;
}

int predictive_passes(const ExperimentConfig& cfg, const NetSpec& spec) {
    return spec.dropout_rate == 0.0 ? 1 : cfg.prior.predict_samples;
}

Rng predict_rng(const ExperimentConfig& cfg) { return Rng(cfg.seed).substream("predict"); }

double ood_auroc(const Experiment& ex, const NetSpec& spec, const ParamVector& p) {
    const int passes = predictive_passes(ex.cfg, spec);
    const auto in = predict(spec, ex.test.inputs, p, passes, predict_rng(ex.cfg)).max_prob();
    const auto out = predict(spec, ex.ood->inputs, p, passes, predict_rng(ex.cfg)).max_prob();
    return auroc(in, out);
}

json epoch_json(const EpochRecord& e) {
    return json{{"epoch", e.epoch},
                {"data_ll", e.train.data_ll},
                {"func_penalty", e.train.func_penalty},
                {"weight_penalty", e.train.weight_penalty},
                {"total", e.train.total},
                {"val_acc", e.val_acc},
                {"val_nll", e.val_nll}};
}

std::string run_training(const ExperimentConfig& cfg, const fs::path& out, const std::string& command) {
    const Experiment ex = build_experiment(cfg);
    fs::create_directories(out);
    for (const char* f : {kConfigFile, kEpochLog, kSummaryFile, kCheckpointFile}) fs::remove(out / f);
    write_text(out / kConfigFile, serialize_config(cfg));

    const TrainingProblem pb{ex.spec, ex.extractor, cfg.prior, cfg.train};
    std::ofstream log(out / kEpochLog, std::ios::binary | std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write " + (out / kEpochLog).string());
    Checkpoint ck{ex.spec, ex.init, ex.extractor, cfg.seed, cfg.prior.kind, 0};
    save_checkpoint(ck, out / kCheckpointFile);
    double best = std::numeric_limits<double>::infinity();
    int last_epoch = 0;

    RunRecord rec;
    try {
        rec = fit(ex.train, ex.val, ex.context, pb, ex.init, [&](const EpochRecord& er, const TrainState& st) {
            log << epoch_json(er).dump() << "\n";
            log.flush();
            last_epoch = er.epoch;
            if (er.val_nll < best) {
                best = er.val_nll;
                ck.params = st.params;
                ck.epoch = er.epoch;
                save_checkpoint(ck, out / kCheckpointFile);
            }
        });
    } catch (const NumericError& e) {
        throw NumericError(std::string("training diverged (last finite epoch ") + std::to_string(last_epoch) +
                           "): " + e.what());
    }

    const int passes = predictive_passes(cfg, ex.spec);
    const auto pred = predict(ex.spec, ex.test.inputs, rec.best, passes, predict_rng(cfg));
    MetricsReport test = evaluate(pred, ex.test.labels, cfg.eval.ece_bins);
    if (ex.ood) test.auroc = ood_auroc(ex, ex.spec, rec.best);

    json s{{"command", command},
           {"objective", to_string(cfg.prior.kind)},
           {"nu_theta", cfg.prior.kind == ObjectiveKind::student_t ? json(cfg.prior.nu_theta) : json(nullptr)},
           {"seed", cfg.seed},
           {"epochs_run", static_cast<int>(rec.epochs.size())},
           {"best_epoch", rec.best_epoch},
           {"stop_reason", rec.stop_reason},
           {"best_val_nll", num_or_null(rec.best_val_nll)},
           {"test", report_json(test)}};
    const std::string line = s.dump();
    write_text(out / kSummaryFile, line + "\n");
    return line;
}

struct Loaded {
    Experiment ex;
    Checkpoint ck;
};

Loaded load_for_eval(const ExperimentConfig& cfg, const fs::path& checkpoint) {
    Loaded l{build_experiment(cfg), load_checkpoint(checkpoint)};
    if (l.ck.spec.input_width() != l.ex.train.dim())
        throw CheckpointError("checkpoint: input width " + std::to_string(l.ck.spec.input_width()) +
                              " does not match data dimension " + std::to_string(l.ex.train.dim()));
    if (l.ck.spec.output_width() != cfg.data.classes)
        throw CheckpointError("checkpoint: " + std::to_string(l.ck.spec.output_width()) +
                              " outputs but data.classes = " + std::to_string(cfg.data.classes));
    return l;
}

const Dataset& pick_split(const Experiment& ex, const std::string& split) {
    if (split == "train") return ex.train;
    if (split == "val") return ex.val;
    if (split == "test") return ex.test;
    throw ConfigError("--split: expected train, val or test, got '" + split + "'");
}

}  // namespace

std::string cmd_train(const ExperimentConfig& cfg, const fs::path& out) { return run_training(cfg, out, "train"); }

std::string cmd_baseline(const ExperimentConfig& cfg, const std::string& which, const fs::path& out) {
    ExperimentConfig c = cfg;
    if (which == "map") {
        c.prior.kind = ObjectiveKind::map;
        c.model.dropout = 0.0;
        c.prior.rho = 0.0;
        c.prior.mc_samples = 1;
        c.prior.predict_samples = 1;
    } else if (which == "mc_dropout") {
        c.prior.kind = ObjectiveKind::mc_dropout;
    } else {
        throw ConfigError("--which: expected map or mc_dropout, got '" + which + "'");
    }
    return run_training(c, out, "baseline");
}

std::string cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint, const std::string& split) {
    const Loaded l = load_for_eval(cfg, checkpoint);
    const Dataset& d = pick_split(l.ex, split);
    const auto pred = predict(l.ck.spec, d.inputs, l.ck.params, predictive_passes(cfg, l.ck.spec), predict_rng(cfg));
    json j{{"command", "eval"}, {"split", split}, {"n", d.size()}};
    j.update(report_json(evaluate(pred, d.labels, cfg.eval.ece_bins)));
    return j.dump();
}

std::string cmd_ood(const ExperimentConfig& cfg, const fs::path& checkpoint) {
    const Loaded l = load_for_eval(cfg, checkpoint);
    if (!l.ex.ood) throw ConfigError("ood.source: no OOD set configured");
    json j{{"command", "ood"},
           {"n_in", l.ex.test.size()},
           {"n_out", l.ex.ood->size()},
           {"auroc", ood_auroc(l.ex, l.ck.spec, l.ck.params)}};
    return j.dump();
}

std::string cmd_shift(const ExperimentConfig& cfg, const fs::path& checkpoint, const std::vector<double>& angles,
                      const std::string& split) {
    const Loaded l = load_for_eval(cfg, checkpoint);
    const Dataset& d = pick_split(l.ex, split);
    if (!l.ex.train.image) throw ConfigError("data.source: shift needs image data");
    for (double a : angles)
        if (!(a >= -180.0 && a <= 180.0)) throw ConfigError("--angles: angles must lie in [-180, 180]");
    const auto points = shift_eval(l.ck.spec, l.ck.params, d.inputs, d.labels, l.ex.train.image->rows,
                                   l.ex.train.image->cols, angles, predictive_passes(cfg, l.ck.spec),
                                   predict_rng(cfg), cfg.eval.ece_bins);
    std::string out;
    for (const auto& p : points) {
        json j{{"command", "shift"}, {"split", split}, {"angle", p.angle}};
        j.update(report_json(p.report));
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<std::string> parse_dof_grid(const std::string& text) {
    std::vector<std::string> grid;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        item = item.substr(b, item.find_last_not_of(" \t") - b + 1);
        if (item != "gaussian") {
            std::size_t used = 0;
            double nu = 0.0;
            try {
                nu = std::stod(item, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != item.size()) throw ConfigError("--grid: '" + item + "' is neither a number nor gaussian");
            if (!(nu > 2.0)) throw ConfigError("--grid: nu_theta must exceed 2, got " + item);
            item = format_double(nu);
        }
        grid.push_back(item);
    }
    if (grid.empty()) throw ConfigError("--grid: empty grid");
    return grid;
}

std::string cmd_ablate_dof(const ExperimentConfig& cfg, const std::vector<std::string>& grid, const fs::path& out,
                           int jobs) {
    std::set<std::string> unique(grid.begin(), grid.end());
    if (unique.size() != grid.size()) throw ConfigError("--grid: duplicate entries");
    std::vector<ExperimentConfig> cfgs;
    for (const auto& g : grid) {
        ExperimentConfig c = cfg;
        if (g == "gaussian") {
            c.prior.kind = ObjectiveKind::gaussian;
        } else {
            c.prior.kind = ObjectiveKind::student_t;
            c.prior.nu_theta = std::stod(g);
        }
        c.out = (out / ("dof-" + g)).string();
        validate(c);
        cfgs.push_back(c);
    }

    fs::create_directories(out);
    std::vector<std::string> summaries(grid.size());
    std::vector<std::string> errors(grid.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next++) < grid.size();) {
            try {
                summaries[i] = cmd_train(cfgs[i], cfgs[i].out);
            } catch (const std::exception& e) {
                errors[i] = "dof " + grid[i] + ": " + e.what();
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(grid.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (!e.empty()) throw std::runtime_error(e);

    std::ostringstream rows, table;
    table << std::left << std::setw(10) << "dof" << std::setw(10) << "ACC" << std::setw(10) << "NLL" << "AUROC\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const json s = json::parse(summaries[i]);
        const auto& t = s.at("test");
        json row{{"dof", grid[i]}, {"acc", t.at("acc")}, {"nll", t.at("nll")},
                 {"auroc", t.contains("auroc") ? t.at("auroc") : json(nullptr)}};
        rows << row.dump() << "\n";
        table << std::left << std::setw(10) << grid[i] << std::fixed << std::setprecision(4) << std::setw(10)
              << t.at("acc").get<double>() << std::setw(10) << t.at("nll").get<double>();
        if (t.contains("auroc"))
            table << t.at("auroc").get<double>();
        else
            table << "-";
        table << "\n";
    }
    write_text(out / "ablation.jsonl", rows.str());
    write_text(out / "table.txt", table.str());
    return table.str();
}

std::vector<std::string> validate_run(const fs::path& dir) {
    std::vector<std::string> problems;
    if (!fs::is_directory(dir)) return {dir.string() + ": not a directory"};
    const std::set<std::string> expected{kConfigFile, kEpochLog, kSummaryFile, kCheckpointFile};
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (!expected.count(name)) problems.push_back(name + ": unexpected entry");
    }
    for (const auto& f : expected)
        if (!fs::exists(dir / f)) problems.push_back(f + ": missing");
    if (!problems.empty()) return problems;

    ExperimentConfig cfg;
    try {
        cfg = parse_config(read_text(dir / kConfigFile));
        if (serialize_config(cfg) != read_text(dir / kConfigFile))
            problems.push_back(std::string(kConfigFile) + ": not in canonical form");
    } catch (const std::exception& e) {
        problems.push_back(std::string(kConfigFile) + ": " + e.what());
    }

    std::size_t lines = 0;
    {
        std::istringstream log(read_text(dir / kEpochLog));
        std::string line;
        while (std::getline(log, line)) {
            ++lines;
            try {
                const json j = json::parse(line);
                for (const char* k : {"epoch", "data_ll", "func_penalty", "weight_penalty", "total", "val_acc", "val_nll"})
                    if (!j.contains(k)) throw std::runtime_error(std::string("missing ") + k);
                if (j.at("epoch").get<std::size_t>() != lines) throw std::runtime_error("epochs out of order");
            } catch (const std::exception& e) {
                problems.push_back(std::string(kEpochLog) + " line " + std::to_string(lines) + ": " + e.what());
            }
        }
    }
    if (problems.empty() && lines > static_cast<std::size_t>(cfg.train.max_epochs))
        problems.push_back(std::string(kEpochLog) + ": more records than train.max_epochs");

    try {
        const std::string text = read_text(dir / kSummaryFile);
        if (std::count(text.begin(), text.end(), '\n') != 1) throw std::runtime_error("expected exactly one record");
        const json s = json::parse(text);
        for (const char* k : {"command", "objective", "seed", "epochs_run", "best_epoch", "stop_reason", "test"})
            if (!s.contains(k)) throw std::runtime_error(std::string("missing ") + k);
        if (s.at("epochs_run").get<std::size_t>() != lines)
            throw std::runtime_error("epochs_run disagrees with the epoch log");
    } catch (const std::exception& e) {
        problems.push_back(std::string(kSummaryFile) + ": " + e.what());
    }

    try {
        load_checkpoint(dir / kCheckpointFile);
    } catch (const std::exception& e) {
        problems.push_back(e.what());
    }
    return problems;
}

}  // namespace stfseb
