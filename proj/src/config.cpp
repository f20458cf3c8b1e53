#include "stfseb/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace stfseb {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    double x = 0.0;
    const auto t = trim(v);
    auto res = std::from_chars(t.data(), t.data() + t.size(), x);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    return x;
}

long long parse_int(const std::string& key, const std::string& v) {
    long long x = 0;
    const auto t = trim(v);
    auto res = std::from_chars(t.data(), t.data() + t.size(), x);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
    const auto t = trim(v);
    if (t == "true" || t == "1") return true;
    if (t == "false" || t == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

// Reads keys out of the tree and remembers which were seen so leftovers can
// be reported.
class Reader {
public:
    Reader(const pt::ptree& tree, fs::path base) : tree_(tree), base_(std::move(base)) {}

    std::optional<std::string> raw(const std::string& key) {
        seen_.insert(key);
        auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
        if (!v) return std::nullopt;
        return trim(*v);
    }
    void str(const std::string& key, std::string& dst) {
        if (auto v = raw(key)) dst = *v;
    }
    void path(const std::string& key, std::string& dst) {
        if (auto v = raw(key)) {
            if (v->empty()) {
                dst.clear();
                return;
            }
            fs::path p(*v);
            if (p.is_relative() && !base_.empty()) p = base_ / p;
            dst = p.lexically_normal().string();
        }
    }
    void num(const std::string& key, double& dst) {
        if (auto v = raw(key)) dst = parse_double(key, *v);
    }
    template <typename I>
    void integer(const std::string& key, I& dst) {
        if (auto v = raw(key)) {
            const long long x = parse_int(key, *v);
            if (x < 0 && std::is_unsigned_v<I>) throw ConfigError(key + ": must be nonnegative");
            dst = static_cast<I>(x);
        }
    }
    void boolean(const std::string& key, bool& dst) {
        if (auto v = raw(key)) dst = parse_bool(key, *v);
    }

    void check_unknown() const {
        for (const auto& [section, sub] : tree_) {
            if (sub.empty() && !sub.data().empty())
                throw ConfigError(section + ": key outside any section");
            for (const auto& [key, _] : sub) {
                const std::string full = section + "." + key;
                if (!seen_.count(full)) throw ConfigError(full + ": unknown key");
            }
        }
    }

private:
    const pt::ptree& tree_;
    fs::path base_;
    std::set<std::string> seen_;
};

void read_source(Reader& r, const std::string& sec, SourceSpec& s, bool with_n) {
    r.str(sec + ".source", s.source);
    if (with_n) r.integer(sec + ".n", s.n);
    r.num(sec + ".shift", s.shift);
    r.integer(sec + ".clusters", s.clusters);
    r.num(sec + ".blob_sd", s.blob_sd);
    r.path(sec + ".images", s.images);
    r.path(sec + ".labels", s.labels);
    r.path(sec + ".path", s.path);
}

pt::ptree read_tree(const std::string& text) {
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config: line " + std::to_string(e.line()) + ": " + e.message());
    }
    return tree;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir,
                              const std::vector<std::string>& overrides) {
    pt::ptree tree = read_tree(text);
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError("--set " + o + ": expected section.key=value");
        const std::string key = trim(o.substr(0, eq));
        const auto dot = key.find('.');
        if (dot == std::string::npos || dot == 0 || dot + 1 == key.size() || key.find('.', dot + 1) != std::string::npos)
            throw ConfigError("--set " + o + ": expected section.key=value");
        tree.put(pt::ptree::path_type(key, '.'), trim(o.substr(eq + 1)));
    }

    ExperimentConfig c;
    Reader r(tree, base_dir);
    r.integer("run.seed", c.seed);
    r.str("run.out", c.out);

    c.data.train.source = "two_moons";
    r.str("data.source", c.data.train.source);
    r.integer("data.classes", c.data.classes);
    r.integer("data.n_train", c.data.train.n);
    r.integer("data.n_val", c.data.n_val);
    r.integer("data.n_test", c.data.n_test);
    r.num("data.noise", c.data.train.noise);
    r.path("data.images", c.data.train.images);
    r.path("data.labels", c.data.train.labels);
    r.path("data.path", c.data.train.path);
    r.path("data.test_images", c.data.test_images);
    r.path("data.test_labels", c.data.test_labels);
    r.path("data.test_path", c.data.test_path);

    c.context.source = "clusters";
    read_source(r, "context", c.context, true);
    c.ood.source = "none";
    read_source(r, "ood", c.ood, true);

    if (auto v = r.raw("model.hidden")) {
        c.model.hidden.clear();
        for (const auto& w : split_list(*v)) c.model.hidden.push_back(static_cast<int>(parse_int("model.hidden", w)));
    }
    r.num("model.dropout", c.model.dropout);
    if (auto v = r.raw("model.dropout_layers")) {
        if (*v == "all") {
            c.model.dropout_layers.reset();
        } else {
            std::vector<int> layers;
            for (const auto& h : split_list(*v)) layers.push_back(static_cast<int>(parse_int("model.dropout_layers", h)));
            c.model.dropout_layers = layers;
        }
    }
    r.boolean("model.prior_on_biases", c.model.prior_on_biases);

    if (auto v = r.raw("prior.objective")) {
        try {
            c.prior.kind = objective_kind_from_string(*v);
        } catch (const std::exception&) {
            throw ConfigError("prior.objective: unknown objective '" + *v + "'");
        }
    }
    if (auto v = r.raw("prior.nu_theta")) {
        if (*v == "gaussian")
            c.prior.kind = ObjectiveKind::gaussian;
        else
            c.prior.nu_theta = parse_double("prior.nu_theta", *v);
    }
    r.num("prior.sigma_theta", c.prior.sigma_theta);
    r.num("prior.tau1", c.prior.tau.tau1);
    r.num("prior.tau2", c.prior.tau.tau2);
    r.integer("prior.mc_samples", c.prior.mc_samples);
    r.integer("prior.predict_samples", c.prior.predict_samples);
    r.integer("prior.context_points", c.prior.context_points);
    c.prior.rho = c.model.dropout;
    c.prior.prior_on_biases = c.model.prior_on_biases;

    r.num("train.lr", c.train.lr);
    r.num("train.beta1", c.train.beta1);
    r.num("train.beta2", c.train.beta2);
    r.num("train.eps", c.train.eps);
    r.integer("train.batch_size", c.train.batch_size);
    r.integer("train.max_epochs", c.train.max_epochs);
    r.integer("train.patience", c.train.patience);
    c.train.seed = c.seed;

    r.integer("eval.ece_bins", c.eval.ece_bins);
    if (auto v = r.raw("eval.angles")) {
        c.eval.angles.clear();
        for (const auto& a : split_list(*v)) c.eval.angles.push_back(parse_double("eval.angles", a));
    }

    r.check_unknown();
    return c;
}

ExperimentConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), fs::absolute(path).parent_path(), overrides);
}

namespace {

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

void write_source(std::ostream& o, const SourceSpec& s) {
    o << "source = " << s.source << "\n";
    o << "n = " << s.n << "\n";
    o << "shift = " << format_double(s.shift) << "\n";
    o << "clusters = " << s.clusters << "\n";
    o << "blob_sd = " << format_double(s.blob_sd) << "\n";
    o << "images = " << s.images << "\n";
    o << "labels = " << s.labels << "\n";
    o << "path = " << s.path << "\n";
}

}  // namespace

std::string serialize_config(const ExperimentConfig& c) {
    std::ostringstream o;
    o << "[run]\nseed = " << c.seed << "\nout = " << c.out << "\n\n";
    o << "[data]\nsource = " << c.data.train.source << "\nclasses = " << c.data.classes
      << "\nn_train = " << c.data.train.n << "\nn_val = " << c.data.n_val << "\nn_test = " << c.data.n_test
      << "\nnoise = " << format_double(c.data.train.noise) << "\nimages = " << c.data.train.images
      << "\nlabels = " << c.data.train.labels << "\npath = " << c.data.train.path
      << "\ntest_images = " << c.data.test_images << "\ntest_labels = " << c.data.test_labels
      << "\ntest_path = " << c.data.test_path << "\n\n";
    o << "[context]\n";
    write_source(o, c.context);
    o << "\n[ood]\n";
    write_source(o, c.ood);
    o << "\n[model]\nhidden = " << join_ints(c.model.hidden) << "\ndropout = " << format_double(c.model.dropout)
      << "\ndropout_layers = " << (c.model.dropout_layers ? join_ints(*c.model.dropout_layers) : "all")
      << "\nprior_on_biases = " << (c.model.prior_on_biases ? "true" : "false") << "\n\n";
    o << "[prior]\nobjective = " << to_string(c.prior.kind) << "\nnu_theta = " << format_double(c.prior.nu_theta)
      << "\nsigma_theta = " << format_double(c.prior.sigma_theta) << "\ntau1 = " << format_double(c.prior.tau.tau1)
      << "\ntau2 = " << format_double(c.prior.tau.tau2) << "\nmc_samples = " << c.prior.mc_samples
      << "\npredict_samples = " << c.prior.predict_samples << "\ncontext_points = " << c.prior.context_points
      << "\n\n";
    o << "[train]\nlr = " << format_double(c.train.lr) << "\nbeta1 = " << format_double(c.train.beta1)
      << "\nbeta2 = " << format_double(c.train.beta2) << "\neps = " << format_double(c.train.eps)
      << "\nbatch_size = " << c.train.batch_size << "\nmax_epochs = " << c.train.max_epochs
      << "\npatience = " << c.train.patience << "\n\n";
    o << "[eval]\nece_bins = " << c.eval.ece_bins << "\nangles = ";
    for (std::size_t i = 0; i < c.eval.angles.size(); ++i) o << (i ? "," : "") << format_double(c.eval.angles[i]);
    o << "\n";
    return o.str();
}

namespace {

void require_file(const std::string& key, const std::string& p) {
    if (p.empty()) throw ConfigError(key + ": file path required");
    if (!fs::exists(p)) throw ConfigError(key + ": file not found: " + p);
}

void check_source(const std::string& sec, const SourceSpec& s, const std::set<std::string>& allowed) {
    if (!allowed.count(s.source)) throw ConfigError(sec + ".source: unsupported source '" + s.source + "'");
    if (s.source == "none" || s.source == "test") return;
    if (s.n < 1) throw ConfigError(sec + ".n: must be at least 1");
    if (s.source == "clusters") {
        if (s.clusters < 1) throw ConfigError(sec + ".clusters: must be at least 1");
        if (!(s.blob_sd > 0.0)) throw ConfigError(sec + ".blob_sd: must be positive");
        if (!(s.shift >= 0.0)) throw ConfigError(sec + ".shift: must be nonnegative");
    } else if (s.source == "idx") {
        require_file(sec + ".images", s.images);
        require_file(sec + ".labels", s.labels);
    } else if (s.source == "csv") {
        require_file(sec + ".path", s.path);
    }
}

}  // namespace

void validate(const ExperimentConfig& c) {
    const auto& d = c.data;
    if (d.train.source == "two_moons") {
        if (d.classes != 2) throw ConfigError("data.classes: two_moons has exactly 2 classes");
        if (!(d.train.noise >= 0.0)) throw ConfigError("data.noise: must be nonnegative");
    } else if (d.train.source == "idx") {
        require_file("data.images", d.train.images);
        require_file("data.labels", d.train.labels);
        if (d.test_images.empty() != d.test_labels.empty())
            throw ConfigError("data.test_images: test_images and test_labels go together");
        if (!d.test_images.empty()) {
            require_file("data.test_images", d.test_images);
            require_file("data.test_labels", d.test_labels);
        }
    } else if (d.train.source == "csv") {
        require_file("data.path", d.train.path);
        if (!d.test_path.empty()) require_file("data.test_path", d.test_path);
    } else {
        throw ConfigError("data.source: unsupported source '" + d.train.source + "'");
    }
    if (d.classes < 2) throw ConfigError("data.classes: need at least 2 classes");
    if (d.train.n < 1) throw ConfigError("data.n_train: must be at least 1");
    if (d.n_val < 1) throw ConfigError("data.n_val: must be at least 1");
    if (d.n_test < 1) throw ConfigError("data.n_test: must be at least 1");

    check_source("context", c.context, {"clusters", "idx", "csv"});
    check_source("ood", c.ood, {"clusters", "idx", "csv", "test", "none"});

    if (c.model.hidden.empty()) throw ConfigError("model.hidden: need at least one hidden layer");
    for (int w : c.model.hidden)
        if (w < 1) throw ConfigError("model.hidden: widths must be positive");
    if (c.model.dropout_layers)
        for (int h : *c.model.dropout_layers)
            if (h < 1 || static_cast<std::size_t>(h) > c.model.hidden.size())
                throw ConfigError("model.dropout_layers: " + std::to_string(h) + " is not a hidden layer");
    try {
        PriorConfig p = c.prior;
        p.validate();
        c.train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (c.eval.ece_bins < 1) throw ConfigError("eval.ece_bins: must be at least 1");
    for (double a : c.eval.angles)
        if (!(a >= -180.0 && a <= 180.0)) throw ConfigError("eval.angles: angles must lie in [-180, 180]");
    if (c.out.empty()) throw ConfigError("run.out: output directory required");
}

NetSpec make_net_spec(const ExperimentConfig& c, int input_dim) {
    std::vector<int> widths{input_dim};
    widths.insert(widths.end(), c.model.hidden.begin(), c.model.hidden.end());
    widths.push_back(c.data.classes);
    NetSpec spec = NetSpec::dense(widths, c.prior.rho);
    if (c.model.dropout_layers) spec.dropout_layers = *c.model.dropout_layers;
    spec.validate();
    return spec;
}

}  // namespace stfseb
