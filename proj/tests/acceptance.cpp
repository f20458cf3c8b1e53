// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// nonzero if any fails. Pass criterion numbers as arguments to run a subset.
#include "oracle.hpp"

#include "stfseb/distributions.hpp"
#include "stfseb/experiment.hpp"

#include "json.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

using namespace stfseb;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path kConfigs = fs::path(STFSEB_SOURCE_DIR) / "configs";
const fs::path kWork = fs::temp_directory_path() / "stfseb_acceptance";

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

oracle::Vec std_vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

oracle::Mat rows_of(const Matrix& m) {
    oracle::Mat out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        oracle::Vec r;
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        out.push_back(r);
    }
    return out;
}

Matrix uniform(Eigen::Index n, Eigen::Index d, Rng& rng) {
    Matrix x(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.uniform();
    return x;
}

Matrix random_spd(Eigen::Index n, Rng& rng) {
    Matrix h(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) h(i, j) = rng.normal();
    Matrix a = h * h.transpose();
    a = 0.5 * (a + a.transpose()).eval();
    a.diagonal().array() += 0.2 + rng.uniform();
    return a;
}

// log of ∫ N(x; mu, K/λ) Gamma(λ; ν/2, (ν−2)/2) dλ, λ = 1/γ.
double gsm_oracle(const Vector& x, const Vector& mu, const Matrix& k, double nu) {
    const auto d = static_cast<std::size_t>(x.size());
    oracle::Mat km(d, oracle::Vec(d));
    oracle::Vec diff(d);
    for (std::size_t i = 0; i < d; ++i) {
        diff[i] = x(static_cast<Eigen::Index>(i)) - mu(static_cast<Eigen::Index>(i));
        for (std::size_t j = 0; j < d; ++j) km[i][j] = k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    const double q = oracle::quad_form(diff, oracle::inverse(km));
    const double logdet = std::log(oracle::det_cofactor(km));
    const double a = nu / 2.0, b = (nu - 2.0) / 2.0, dd = static_cast<double>(d);
    auto log_f = [&](double lam) {
        return (0.5 * dd + a - 1.0) * std::log(lam) - (0.5 * q + b) * lam + a * std::log(b) - boost::math::lgamma(a);
    };
    const double mode = std::max((0.5 * dd + a - 1.0) / (0.5 * q + b), 1e-12);
    const double ref = log_f(mode);
    auto f = [&](double lam) { return lam <= 0.0 ? 0.0 : std::exp(log_f(lam) - ref); };
    using boost::math::quadrature::gauss_kronrod;
    const double i1 = gauss_kronrod<double, 61>::integrate(f, 0.0, mode, 15, 1e-14);
    const double i2 = gauss_kronrod<double, 61>::integrate(f, mode, std::numeric_limits<double>::infinity(), 15, 1e-14);
    return std::log(i1 + i2) + ref - 0.5 * dd * std::log(2.0 * M_PI) - 0.5 * logdet;
}

// ---------------------------------------------------------------------------

Outcome density_correctness() {
    const double origin = std::fabs(st_log_pdf(0.0, {1.0, 0.0, 1.0}) - std::log(1.0 / M_PI));
    Rng rng(2024);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const auto d = static_cast<Eigen::Index>(1 + rng.below(4));
        const double nu = 2.1 + (20.0 - 2.1) * rng.uniform();
        const Matrix k = random_spd(d, rng);
        Vector x(d), mu(d);
        for (Eigen::Index i = 0; i < d; ++i) {
            mu(i) = 0.5 * rng.normal();
            x(i) = mu(i) + 1.5 * rng.normal();
        }
        const MvtParams p{nu, mu, SymMatrix(k)};
        const double got = mvt_log_pdf(x, p, cholesky(p.cov));
        const double ref = gsm_oracle(x, mu, k, nu);
        worst = std::max(worst, std::fabs(got - ref) / std::max(1.0, std::fabs(ref)));
    }
    return {origin < 1e-12 && worst < 1e-6,
            "|st(0;1,0,1) - ln(1/pi)| = " + fmt("%.1e", origin) + ", worst mvt-vs-GSM rel err " + fmt("%.1e", worst)};
}

Outcome gaussian_limits() {
    boost::math::normal n01;
    double worst = 0.0;
    // at nu = 1e6 the exact gap grows like x^4/(4 nu), about 6.4e-5 at |x| = 4
    for (int i = 0; i < 200; ++i) {
        const double x = -4.0 + 8.0 * i / 199.0;
        worst = std::max(worst, std::fabs(st_log_pdf(x, {1e6, 0.0, 1.0}) - std::log(boost::math::pdf(n01, x))));
    }
    double worst_pen = 0.0;
    Rng rng(77);
    for (int t = 0; t < 10; ++t) {
        const NetSpec s = NetSpec::dense({2, 2 + static_cast<int>(rng.below(8)), 3}, 0.1 + 0.3 * rng.uniform());
        const ParamVector p = init_params(s, rng);
        const ParamVector ext = init_params(s, rng);
        const Batch batch{uniform(8, 2, rng), {0, 1, 2, 0, 1, 2, 0, 1}};
        const Matrix ctx = uniform(6, 2, rng);
        PriorConfig cfg;
        cfg.nu_theta = 1e6;
        cfg.rho = s.dropout_rate;
        cfg.sigma_theta = 0.5 + rng.uniform();
        cfg.mc_samples = 3;
        const Rng mrng(rng.next_u64());
        const auto st = minibatch_loss(s, batch, ctx, p, cfg, ext, mrng);
        const auto ga = gaussian_limit_loss(s, batch, ctx, p, cfg, ext, mrng);
        worst_pen = std::max(worst_pen, std::fabs(st.func_penalty - ga.func_penalty) / std::fabs(ga.func_penalty));
        worst_pen = std::max(worst_pen, std::fabs(st.weight_penalty - ga.weight_penalty) / std::fabs(ga.weight_penalty));
    }
    return {worst < 1e-4 && worst_pen < 1e-3,
            "pdf grid on [-4, 4] max abs err " + fmt("%.1e", worst) + ", penalty max rel err " + fmt("%.1e", worst_pen)};
}

Outcome gradient_fidelity() {
    const double h = 1e-4;
    double worst = 0.0;
    int checked = 0, skipped = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        const NetSpec s = NetSpec::dense({2, 8, 4, 2}, 0.3);
        const ParamVector p = init_params(s, rng);
        const ParamVector ext = init_params(s, rng);
        std::vector<int> y;
        for (int i = 0; i < 16; ++i) y.push_back(static_cast<int>(rng.below(2)));
        const Batch batch{uniform(16, 2, rng), y};
        const Matrix ctx = uniform(8, 2, rng);
        PriorConfig cfg;
        cfg.nu_theta = 3.0;
        cfg.rho = 0.3;
        cfg.mc_samples = 2;
        cfg.minibatches = 4;
        const auto masks = sample_masks(s, 2, rng.substream("masks"));
        const auto kf = context_kernel(s, ctx, ext, cfg.tau);
        const auto lg = evaluate_minibatch_with_grad({s, p, batch, ctx, &kf, cfg, masks});

        oracle::Mat all = rows_of(batch.x);
        for (const auto& r : rows_of(ctx)) all.push_back(r);
        std::vector<std::vector<oracle::Vec>> mults;
        for (const auto& m : masks) {
            std::vector<oracle::Vec> mult;
            for (std::size_t hdn = 0; hdn < s.num_hidden(); ++hdn) mult.push_back(std_vec(m.multiplier(hdn)));
            mults.push_back(mult);
        }
        // ReLU sign pattern under every mask; a flip inside [θ−h, θ+h] means a kink
        auto signs = [&](const ParamVector& q) {
            std::vector<double> pre;
            const auto net = oracle::unpack(s.layer_widths, std_vec(q.theta()));
            for (const auto& mult : mults) oracle::forward(net, all, mult, &pre);
            std::vector<bool> out;
            for (double v : pre) out.push_back(v > 0.0);
            return out;
        };
        const auto base = signs(p);
        int found = 0;
        while (found < 50) {
            const auto i = static_cast<Eigen::Index>(rng.below(p.size()));
            ParamVector up = p, dn = p;
            up.theta()(i) += h;
            dn.theta()(i) -= h;
            if (signs(up) != base || signs(dn) != base) {
                ++skipped;
                continue;
            }
            const double fd = (evaluate_minibatch({s, up, batch, ctx, &kf, cfg, masks}).total -
                               evaluate_minibatch({s, dn, batch, ctx, &kf, cfg, masks}).total) / (2 * h);
            const double g = lg.grad(i);
            worst = std::max(worst, std::fabs(fd - g) / std::max({std::fabs(fd), std::fabs(g), 1e-6}));
            ++found;
            ++checked;
        }
    }
    return {worst < 1e-4, std::to_string(checked) + " coordinates over 5 seeds (" + std::to_string(skipped) +
                              " kink draws resampled), max rel err " + fmt("%.1e", worst)};
}

Outcome objective_oracle() {
    const NetSpec s = NetSpec::dense({2, 3, 2}, 0.3);
    Rng rng(4);
    const ParamVector p = init_params(s, rng);
    const ParamVector ext = init_params(s, rng);
    const Batch batch{uniform(5, 2, rng), {1, 0, 0, 1, 1}};
    const Matrix ctx = uniform(4, 2, rng);
    PriorConfig cfg;
    cfg.nu_theta = 2.5;
    cfg.sigma_theta = 0.4;
    cfg.rho = 0.3;
    cfg.tau = {2.0, 0.3};
    cfg.mc_samples = 4;
    cfg.minibatches = 3;
    const auto masks = sample_masks(s, 4, Rng(12));
    const auto kf = context_kernel(s, ctx, ext, cfg.tau);
    const auto got = evaluate_minibatch({s, p, batch, ctx, &kf, cfg, masks});

    oracle::Problem pb;
    pb.widths = s.layer_widths;
    pb.theta = std_vec(p.theta());
    pb.extractor = std_vec(ext.theta());
    pb.x = rows_of(batch.x);
    pb.y = {1, 0, 0, 1, 1};
    pb.context = rows_of(ctx);
    for (const auto& m : masks) {
        std::vector<oracle::Vec> mult;
        for (std::size_t hdn = 0; hdn < s.num_hidden(); ++hdn) {
            oracle::Vec v;
            for (auto bit : m.bits[hdn]) v.push_back(bit ? 1.0 / (1.0 - 0.3) : 0.0);
            mult.push_back(v);
        }
        pb.masks.push_back(mult);
    }
    pb.nu = 2.5;
    pb.sigma = 0.4;
    pb.rho = 0.3;
    pb.minibatches = 3;
    pb.tau1 = 2.0;
    pb.tau2 = 0.3;
    const auto want = oracle::objective(pb);
    const double err = std::max({std::fabs(got.data_ll - want.data), std::fabs(got.func_penalty - want.func),
                                 std::fabs(got.weight_penalty - want.weight)});
    return {err < 1e-9, "max abs diff over the three terms " + fmt("%.1e", err)};
}

struct MoonRuns {
    std::vector<double> st_acc, st_auroc, map_auroc, seconds;
};

const MoonRuns& moon_runs() {
    static const MoonRuns runs = [] {
        MoonRuns r;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto cfg = load_config(kConfigs / "two_moons.ini", {"run.seed=" + std::to_string(seed)});
            const auto t0 = std::chrono::steady_clock::now();
            const json st = json::parse(cmd_train(cfg, kWork / ("moons-st-" + std::to_string(seed))));
            r.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
            const json mp = json::parse(cmd_baseline(cfg, "map", kWork / ("moons-map-" + std::to_string(seed))));
            r.st_acc.push_back(st["test"]["acc"]);
            r.st_auroc.push_back(st["test"]["auroc"]);
            r.map_auroc.push_back(mp["test"]["auroc"]);
        }
        return r;
    }();
    return runs;
}

std::string join(const std::vector<double>& v, const char* f) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(f, v[i]);
    return s;
}

Outcome training_smoke() {
    const auto& r = moon_runs();
    int ok = 0;
    for (double a : r.st_acc) ok += a >= 0.95;
    const double slowest = *std::max_element(r.seconds.begin(), r.seconds.end());
    return {ok >= 8 && slowest < 120.0, std::to_string(ok) + "/10 seeds with test ACC >= 0.95 [" +
                                            join(r.st_acc, "%.3f") + "], slowest seed " + fmt("%.1f s", slowest)};
}

Outcome ood_ordering() {
    const auto& r = moon_runs();
    int ok = 0;
    double st = 0.0, mp = 0.0;
    for (std::size_t i = 0; i < r.st_auroc.size(); ++i) {
        ok += r.st_auroc[i] >= 0.9;
        st += r.st_auroc[i] / 10.0;
        mp += r.map_auroc[i] / 10.0;
    }
    return {ok >= 8 && st >= mp, std::to_string(ok) + "/10 seeds with AUROC >= 0.90 [" + join(r.st_auroc, "%.3f") +
                                     "], mean ST " + fmt("%.3f", st) + " vs MAP " + fmt("%.3f", mp)};
}

Outcome shift_degradation() {
    int ok = 0;
    std::string detail;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto cfg = load_config(kConfigs / "mnist_subset.ini", {"run.seed=" + std::to_string(seed)});
        const fs::path out = kWork / ("mnist-" + std::to_string(seed));
        cmd_train(cfg, out);
        std::istringstream lines(cmd_shift(cfg, out / kCheckpointFile, {-30.0, 0.0, 30.0}, "test"));
        std::vector<double> nll;
        for (std::string line; std::getline(lines, line);) nll.push_back(json::parse(line)["nll"]);
        ok += nll[0] >= nll[1] && nll[2] >= nll[1];
        detail += (seed ? " " : "") + fmt("%.2f", nll[0]) + "/" + fmt("%.2f", nll[1]) + "/" + fmt("%.2f", nll[2]);
    }
    return {ok >= 9, std::to_string(ok) + "/10 seeds with NLL(+-30) >= NLL(0); -30/0/+30 per seed: " + detail};
}

Outcome dof_ablation() {
    const auto cfg = load_config(kConfigs / "two_moons.ini");
    const fs::path out = kWork / "ablation";
    fs::remove_all(out);
    const std::string table = cmd_ablate_dof(cfg, parse_dof_grid("2.1,3,5,10,20,gaussian"), out);
    std::istringstream t(table);
    std::vector<std::string> lines;
    for (std::string l; std::getline(t, l);) lines.push_back(l);
    bool well_formed = lines.size() == 7 && lines[0].rfind("dof", 0) == 0;
    const std::vector<std::string> labels{"2.1", "3", "5", "10", "20", "gaussian"};
    std::istringstream rows(slurp(out / "ablation.jsonl"));
    std::size_t n = 0;
    for (std::string l; std::getline(rows, l); ++n) {
        const json j = json::parse(l);
        well_formed &= n < labels.size() && j["dof"] == labels[n] && j["acc"].is_number() && j["nll"].is_number() &&
                       j["auroc"].is_number();
        well_formed &= n + 1 < lines.size() && lines[n + 1].rfind(labels[n], 0) == 0;
    }
    well_formed &= n == 6;

    auto g = cfg;
    g.prior.kind = ObjectiveKind::gaussian;
    const fs::path solo = kWork / "gaussian-solo";
    cmd_train(g, solo);
    const bool same = slurp(solo / kSummaryFile) == slurp(out / "dof-gaussian" / kSummaryFile);
    return {well_formed && same, std::string(well_formed ? "6-row table well formed" : "malformed table") +
                                     (same ? ", gaussian row byte-identical to a separate gaussian run"
                                           : ", gaussian row differs from a separate gaussian run")};
}

Outcome metric_correctness() {
    std::vector<std::string> bad;
    PredictiveDist cal;
    cal.probs.resize(10, 2);
    std::vector<int> y;
    for (int i = 0; i < 10; ++i) {
        cal.probs.row(i) << 0.8, 0.2;
        y.push_back(i < 8 ? 0 : 1);
    }
    if (std::fabs(ece(cal, y)) > 1e-12) bad.push_back("ece");
    const std::vector<double> hi{0.9, 0.95, 0.99}, lo{0.1, 0.3}, same{0.4, 0.6, 0.6};
    if (std::fabs(auroc(hi, lo) - 1.0) > 1e-12) bad.push_back("auroc separated");
    if (std::fabs(auroc(same, same) - 0.5) > 1e-12) bad.push_back("auroc identical");
    PredictiveDist u;
    u.probs = Matrix::Constant(7, 10, 0.1);
    if (std::fabs(nll(u, std::vector<int>{0, 1, 2, 3, 4, 5, 9}) - std::log(10.0)) > 1e-12) bad.push_back("nll");
    std::string d = "ece 0, auroc 1 and 0.5, nll ln 10";
    for (const auto& b : bad) d += "; wrong: " + b;
    return {bad.empty(), d};
}

Outcome determinism() {
    const std::vector<std::string> small{"data.n_train=300", "data.n_val=100", "data.n_test=200", "train.max_epochs=4",
                                         "train.patience=4", "prior.mc_samples=3"};
    const auto moons = load_config(kConfigs / "two_moons.ini", small);
    auto mnist_sets = small;
    mnist_sets.insert(mnist_sets.end(), {"context.n=100", "train.max_epochs=1", "train.patience=1"});
    const auto mnist = load_config(kConfigs / "mnist_subset.ini", mnist_sets);
    std::vector<std::string> differ;
    auto twice = [&](const std::string& name, const std::function<std::string(int)>& run) {
        if (run(0) != run(1)) differ.push_back(name);
    };
    auto dir = [](const std::string& n, int k) { return kWork / ("det-" + n + "-" + std::to_string(k)); };
    twice("train", [&](int k) { return cmd_train(moons, dir("train", k)) + slurp(dir("train", k) / kEpochLog); });
    twice("baseline", [&](int k) { return cmd_baseline(moons, "mc_dropout", dir("baseline", k)); });
    twice("eval", [&](int) { return cmd_eval(moons, dir("train", 0) / kCheckpointFile, "test"); });
    twice("ood", [&](int) { return cmd_ood(moons, dir("train", 0) / kCheckpointFile); });
    cmd_train(mnist, dir("mnist", 0));
    twice("shift", [&](int) { return cmd_shift(mnist, dir("mnist", 0) / kCheckpointFile, mnist.eval.angles, "test"); });
    twice("ablate-dof", [&](int k) {
        const fs::path d = dir("ablate", k);
        cmd_ablate_dof(moons, {"5", "gaussian"}, d, 2);
        return slurp(d / "ablation.jsonl") + slurp(d / "dof-5" / kSummaryFile);
    });
    std::string detail = "train, baseline, eval, ood, shift, ablate-dof each run twice";
    for (const auto& d : differ) detail += "; differs: " + d;
    return {differ.empty(), detail};
}

struct Criterion {
    int id;
    const char* name;
    double budget_s;
    Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "density correctness", 10, density_correctness},
        {2, "gaussian limits", 10, gaussian_limits},
        {3, "gradient fidelity", 30, gradient_fidelity},
        {4, "objective term oracle", 5, objective_oracle},
        {5, "training smoke (two moons)", 1200, training_smoke},
        {6, "OOD ordering vs MAP", 300, ood_ordering},
        {7, "shift degradation (MNIST subset)", 900, shift_degradation},
        {8, "dof ablation harness", 900, dof_ablation},
        {9, "metric correctness", 1, metric_correctness},
        {10, "determinism", 600, determinism},
    };
    std::set<int> want;
    for (int i = 1; i < argc; ++i) want.insert(std::atoi(argv[i]));
    fs::create_directories(kWork);

    int failed = 0;
    for (const auto& c : all) {
        if (!want.empty() && !want.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.budget_s;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::printf("criterion %2d %s: %s (%s; %.1f s of %.0f s budget%s)\n", c.id, c.name, pass ? "PASS" : "FAIL",
                    o.detail.c_str(), secs, c.budget_s, in_time ? "" : ", over budget");
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
