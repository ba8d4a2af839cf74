// Command-line front end: dataset simulation, bound computation, estimation,
// and closed-form replication bundles for the numerical illustrations.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mtebounds/csvio.hpp"
#include "mtebounds/pipeline.hpp"
#include "mtebounds/simulate.hpp"

using json = nlohmann::json;
using namespace mte;

namespace {

constexpr const char* kVersion = "0.1.0";

struct CliError {
    int code;
    std::string message;
};

[[noreturn]] void fail(int code, const std::string& message) { throw CliError{code, message}; }

void reject_unknown_keys(const json& obj, const std::vector<std::string>& known,
                         const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            fail(2, "config: unknown key '" + it.key() + "' in " + where);
    }
}

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(3, "cannot open config '" + path + "'");
    json cfg;
    try {
        in >> cfg;
    } catch (const std::exception& e) {
        fail(2, std::string("config parse error: ") + e.what());
    }
    reject_unknown_keys(cfg, {"dgp", "ident", "estimate"}, "the top level");
    return cfg;
}

MisclassKind parse_mechanism(const std::string& name) {
    if (name == "copula") return MisclassKind::CopulaDependent;
    if (name == "threshold-low" || name == "threshold_low") return MisclassKind::ThresholdLow;
    if (name == "threshold-high" || name == "threshold_high") return MisclassKind::ThresholdHigh;
    fail(2, "unknown mechanism '" + name + "' (copula | threshold-low | threshold-high)");
}

std::string mechanism_name(MisclassKind kind) {
    switch (kind) {
        case MisclassKind::CopulaDependent: return "copula";
        case MisclassKind::ThresholdLow: return "threshold-low";
        case MisclassKind::ThresholdHigh: return "threshold-high";
    }
    return "?";
}

KernelKind parse_kernel(const std::string& name) {
    if (name == "gaussian") return KernelKind::Gaussian;
    if (name == "epanechnikov") return KernelKind::Epanechnikov;
    fail(2, "unknown kernel '" + name + "' (gaussian | epanechnikov)");
}

std::uint64_t env_seed_or(std::uint64_t fallback) {
    const char* env = std::getenv("MTE_SEED");
    if (!env) return fallback;
    try {
        return static_cast<std::uint64_t>(std::stoull(env));
    } catch (const std::exception&) {
        fail(2, "MTE_SEED is not a valid unsigned integer");
    }
}

Grid parse_grid_spec(const std::string& text, const char* what) {
    double lo, hi;
    int n;
    if (std::sscanf(text.c_str(), "%lf,%lf,%d", &lo, &hi, &n) != 3 || n < 2 || !(lo < hi))
        fail(2, std::string(what) + " must have the form lo,hi,n with lo < hi and n >= 2");
    return Grid::linspace(lo, hi, n);
}

std::string interval_lo(const Interval& iv) {
    if (iv.empty_set) return "EMPTY";
    if (iv.unbounded_lo) return "UNBOUNDED";
    return format_double(iv.lo);
}

std::string interval_hi(const Interval& iv) {
    if (iv.empty_set) return "EMPTY";
    if (iv.unbounded_hi) return "UNBOUNDED";
    return format_double(iv.hi);
}

std::string value_or_na(double v) { return std::isnan(v) ? "NA" : format_double(v); }

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(3, "cannot open '" + path + "' for writing");
    return out;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const std::string& config_path, std::optional<std::int64_t> n_flag,
                 std::optional<std::uint64_t> seed_flag, std::optional<double> alpha_flag,
                 std::optional<double> rho_flag, std::optional<std::string> mechanism_flag,
                 bool latent, const std::string& out_path, const std::string& meta_path,
                 int threads) {
    DgpSpec spec;
    spec.n = 10000;
    if (!config_path.empty()) {
        const json cfg = load_config(config_path);
        if (cfg.contains("dgp")) {
            const json& d = cfg["dgp"];
            reject_unknown_keys(d, {"n", "seed", "mechanism", "alpha", "rho", "mean", "cov", "pscore_map"},
                                "dgp");
            if (d.contains("n")) spec.n = d["n"].get<std::int64_t>();
            if (d.contains("seed")) spec.seed = d["seed"].get<std::uint64_t>();
            if (d.contains("mechanism")) spec.misclass.kind = parse_mechanism(d["mechanism"].get<std::string>());
            if (d.contains("alpha")) spec.misclass.alpha = d["alpha"].get<double>();
            if (d.contains("rho")) spec.misclass.rho = d["rho"].get<double>();
            if (d.contains("pscore_map")) spec.pscore_map = d["pscore_map"].get<std::string>();
            if (d.contains("mean")) {
                const auto m = d["mean"].get<std::vector<double>>();
                if (m.size() != 5) fail(2, "dgp.mean must have 5 entries");
                for (int i = 0; i < 5; ++i) spec.mean[static_cast<std::size_t>(i)] = m[static_cast<std::size_t>(i)];
            }
            if (d.contains("cov")) {
                const auto m = d["cov"].get<std::vector<std::vector<double>>>();
                if (m.size() != 5) fail(2, "dgp.cov must be 5x5");
                for (int i = 0; i < 5; ++i) {
                    if (m[static_cast<std::size_t>(i)].size() != 5) fail(2, "dgp.cov must be 5x5");
                    for (int j = 0; j < 5; ++j)
                        spec.cov[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                            m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                }
            }
        }
    }
    if (n_flag) spec.n = *n_flag;
    if (alpha_flag) spec.misclass.alpha = *alpha_flag;
    if (rho_flag) spec.misclass.rho = *rho_flag;
    if (mechanism_flag) spec.misclass.kind = parse_mechanism(*mechanism_flag);
    spec.seed = seed_flag ? *seed_flag : env_seed_or(spec.seed);
    spec.sync_rho();

    try {
        spec.validate();
    } catch (const std::exception& e) {
        fail(2, e.what());
    }

    const SampleResult sample = sample_dgp(spec, threads);
    write_observations_csv(out_path, sample.obs, {}, latent ? &sample.latent : nullptr);

    if (!meta_path.empty()) {
        json meta;
        meta["schema_version"] = 1;
        meta["library_version"] = kVersion;
        meta["seed"] = spec.seed;
        meta["n"] = spec.n;
        meta["mechanism"] = mechanism_name(spec.misclass.kind);
        meta["alpha"] = spec.misclass.alpha;
        meta["rho"] = spec.misclass.rho;
        meta["pscore_map"] = spec.pscore_map;
        meta["mean"] = spec.mean;
        meta["cov"] = spec.cov;
        meta["latent_columns"] = latent;
        auto out = open_out(meta_path);
        out << meta.dump(2) << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------- identify

IdentConfig ident_from_config(const std::string& config_path) {
    IdentConfig cfg;
    if (config_path.empty()) return cfg;
    const json doc = load_config(config_path);
    if (!doc.contains("ident")) return cfg;
    const json& d = doc["ident"];
    reject_unknown_keys(d,
                        {"alpha_bar", "alpha_grid", "p_grid", "z_cells", "bandwidth", "kernel",
                         "fd_step", "y_bins", "trim_delta"},
                        "ident");
    if (d.contains("alpha_bar")) cfg.alpha_bar = d["alpha_bar"].get<double>();
    if (d.contains("alpha_grid")) cfg.alpha_grid_size = d["alpha_grid"].get<int>();
    if (d.contains("bandwidth")) cfg.bandwidth = d["bandwidth"].get<double>();
    if (d.contains("kernel")) cfg.kernel = parse_kernel(d["kernel"].get<std::string>());
    if (d.contains("fd_step")) cfg.fd_step = d["fd_step"].get<double>();
    if (d.contains("y_bins")) cfg.y_bins = d["y_bins"].get<int>();
    if (d.contains("trim_delta")) cfg.trim_delta = d["trim_delta"].get<double>();
    if (d.contains("p_grid")) {
        const auto g = d["p_grid"].get<std::vector<double>>();
        if (g.size() != 3) fail(2, "ident.p_grid must be [lo, hi, n]");
        cfg.p_grid = Grid::linspace(g[0], g[1], static_cast<int>(g[2]));
    }
    if (d.contains("z_cells")) {
        const int zc = d["z_cells"].get<int>();
        if (zc < 2) fail(2, "ident.z_cells must be at least 2");
        cfg.z_grid = Grid::linspace(0.0, 1.0, zc + 1);  // cell-count carrier; edges come from data
    }
    return cfg;
}

int cmd_identify(const std::string& data_path, const std::string& mode,
                 const std::string& config_path, std::optional<double> alpha_bar,
                 std::optional<int> alpha_grid, std::optional<std::string> p_grid_spec,
                 std::optional<double> fd_step, std::optional<int> y_bins,
                 std::optional<int> z_cells, std::optional<double> bandwidth,
                 std::optional<std::string> kernel, int bootstrap_b, double level,
                 std::uint64_t seed, int threads, const std::string& out_path,
                 const std::string& curves_path, const std::string& summary_path) {
    IdentConfig cfg = ident_from_config(config_path);
    if (alpha_bar) cfg.alpha_bar = *alpha_bar;
    if (alpha_grid) cfg.alpha_grid_size = *alpha_grid;
    if (p_grid_spec) cfg.p_grid = parse_grid_spec(*p_grid_spec, "--p-grid");
    if (fd_step) cfg.fd_step = *fd_step;
    if (y_bins) cfg.y_bins = *y_bins;
    if (z_cells) {
        if (*z_cells < 2) fail(2, "--z-cells must be at least 2");
        cfg.z_grid = Grid::linspace(0.0, 1.0, *z_cells + 1);
    }
    if (bandwidth) cfg.bandwidth = *bandwidth;
    if (kernel) cfg.kernel = parse_kernel(*kernel);
    try {
        validate(cfg);
    } catch (const std::exception& e) {
        fail(2, e.what());
    }

    const Dataset ds = read_observations_csv(data_path);

    if (mode == "prop2" || mode == "robust") {
        BoundCurve curve;
        try {
            curve = identify_bounds(ds.obs, cfg, mode == "robust");
        } catch (const std::exception& e) {
            fail(4, e.what());
        }
        auto out = open_out(out_path);
        out << "p,lb,ub,liv\n";
        for (std::size_t j = 0; j < curve.at.size(); ++j) {
            const Interval& iv = curve.intervals[j];
            out << format_double(curve.at[j]) << ',' << interval_lo(iv) << ',' << interval_hi(iv)
                << ',' << value_or_na((*curve.liv)[j]) << '\n';
        }
        return 0;
    }
    if (mode == "symmetric") {
        SymmetricIdentify res;
        try {
            res = identify_symmetric(ds.obs, cfg, bootstrap_b, level, seed, threads);
        } catch (const std::exception& e) {
            fail(4, e.what());
        }
        auto out = open_out(out_path);
        out << (res.region ? "p,lb,ub,liv,region_lo,region_hi\n" : "p,lb,ub,liv\n");
        for (std::size_t j = 0; j < res.p_grid.size(); ++j) {
            const Interval& iv = res.envelope.intervals[j];
            out << format_double(res.p_grid[j]) << ',' << interval_lo(iv) << ',' << interval_hi(iv)
                << ',' << value_or_na((*res.envelope.liv)[j]);
            if (res.region)
                out << ',' << value_or_na(res.region->lo[j]) << ',' << value_or_na(res.region->hi[j]);
            out << '\n';
        }
        if (!curves_path.empty()) {
            auto cf = open_out(curves_path);
            cf << "alpha,p,mte\n";
            for (std::size_t a = 0; a < res.alpha_grid.size(); ++a)
                for (std::size_t j = 0; j < res.p_grid.size(); ++j)
                    cf << format_double(res.alpha_grid[a]) << ',' << format_double(res.p_grid[j])
                       << ',' << value_or_na(res.curves[a][j]) << '\n';
        }
        if (!summary_path.empty()) {
            json s;
            s["schema_version"] = 1;
            s["mode"] = "symmetric";
            s["n"] = ds.obs.size();
            s["alpha_bar"] = cfg.alpha_bar;
            s["alpha_grid"] = res.alpha_grid;
            s["inf_q"] = res.pscore.inf_q;
            s["sup_q"] = res.pscore.sup_q;
            s["alpha_cap"] = res.pscore.alpha_cap;
            s["feasible_alphas"] = res.feasible_alphas;
            auto sf = open_out(summary_path);
            sf << s.dump(2) << '\n';
        }
        return 0;
    }
    if (mode == "discrete-late") {
        std::vector<DiscreteLateRow> rows;
        try {
            rows = identify_discrete_late(ds.obs, cfg);
        } catch (const std::exception& e) {
            fail(4, e.what());
        }
        auto out = open_out(out_path);
        out << "pair,z_lo,z_hi,lb,ub,lb_p,ub_p,ura_lb,ura_ub,delta_yz\n";
        for (const auto& r : rows) {
            out << r.pair << ',' << format_double(r.z_lo) << ',' << format_double(r.z_hi) << ','
                << interval_lo(r.ours.late) << ',' << interval_hi(r.ours.late) << ','
                << format_double(r.ours.lb_p) << ',' << format_double(r.ours.ub_p) << ','
                << interval_lo(r.ura) << ',' << interval_hi(r.ura) << ','
                << format_double(r.ours.delta_yz) << '\n';
        }
        return 0;
    }
    fail(2, "unknown mode '" + mode + "' (prop2 | robust | symmetric | discrete-late)");
}

// ---------------------------------------------------------------- estimate

int cmd_estimate(const std::string& data_path, const std::string& config_path,
                 const std::string& covariates, std::optional<double> alpha_bar,
                 std::optional<int> alpha_grid, std::optional<double> bandwidth,
                 std::optional<std::string> kernel, std::optional<int> bootstrap_b,
                 std::optional<double> level, const std::string& aggregates_flag,
                 std::optional<std::uint64_t> seed_flag, std::optional<double> trim,
                 std::optional<std::string> p_grid_spec, int threads, const std::string& out_path,
                 const std::string& curves_path) {
    EstimateOptions opt;
    opt.aggregates = {AggregateKind::parse("ate"), AggregateKind::parse("att"),
                      AggregateKind::parse("atu")};
    if (!config_path.empty()) {
        const json doc = load_config(config_path);
        if (doc.contains("estimate")) {
            const json& d = doc["estimate"];
            reject_unknown_keys(d,
                                {"alpha_bar", "alpha_grid", "bandwidth", "kernel", "bootstrap",
                                 "level", "aggregates", "trim_delta", "p_grid", "seed"},
                                "estimate");
            if (d.contains("alpha_bar")) opt.alpha_bar = d["alpha_bar"].get<double>();
            if (d.contains("alpha_grid")) opt.alpha_grid_size = d["alpha_grid"].get<int>();
            if (d.contains("bandwidth")) opt.bandwidth = d["bandwidth"].get<double>();
            if (d.contains("kernel")) opt.kernel = parse_kernel(d["kernel"].get<std::string>());
            if (d.contains("bootstrap")) opt.bootstrap_b = d["bootstrap"].get<int>();
            if (d.contains("level")) opt.level = d["level"].get<double>();
            if (d.contains("trim_delta")) opt.trim_delta = d["trim_delta"].get<double>();
            if (d.contains("seed")) opt.seed = d["seed"].get<std::uint64_t>();
            if (d.contains("p_grid")) {
                const auto g = d["p_grid"].get<std::vector<double>>();
                if (g.size() != 3) fail(2, "estimate.p_grid must be [lo, hi, n]");
                opt.p_grid = Grid::linspace(g[0], g[1], static_cast<int>(g[2]));
            }
            if (d.contains("aggregates")) {
                opt.aggregates.clear();
                for (const auto& name : d["aggregates"].get<std::vector<std::string>>())
                    opt.aggregates.push_back(AggregateKind::parse(name));
            }
        }
    }
    if (alpha_bar) opt.alpha_bar = *alpha_bar;
    if (alpha_grid) opt.alpha_grid_size = *alpha_grid;
    if (bandwidth) opt.bandwidth = *bandwidth;
    if (kernel) opt.kernel = parse_kernel(*kernel);
    if (bootstrap_b) opt.bootstrap_b = *bootstrap_b;
    if (level) opt.level = *level;
    if (trim) opt.trim_delta = *trim;
    if (p_grid_spec) opt.p_grid = parse_grid_spec(*p_grid_spec, "--p-grid");
    opt.seed = seed_flag ? *seed_flag : env_seed_or(opt.seed);
    opt.threads = threads;
    if (!aggregates_flag.empty()) {
        opt.aggregates.clear();
        std::size_t start = 0;
        while (start <= aggregates_flag.size()) {
            const auto pos = aggregates_flag.find(',', start);
            const std::string tok = aggregates_flag.substr(start, pos - start);
            if (!tok.empty()) {
                try {
                    opt.aggregates.push_back(AggregateKind::parse(tok));
                } catch (const std::exception& e) {
                    fail(2, e.what());
                }
            }
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        if (opt.aggregates.empty()) fail(2, "--aggregates parsed to an empty list");
    }

    Dataset ds = read_observations_csv(data_path);
    if (!covariates.empty()) {
        std::vector<std::string> wanted;
        std::size_t start = 0;
        while (start <= covariates.size()) {
            const auto pos = covariates.find(',', start);
            wanted.push_back(covariates.substr(start, pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        std::vector<std::size_t> indices;
        for (const auto& w : wanted) {
            const auto it = std::find(ds.x_names.begin(), ds.x_names.end(), w);
            if (it == ds.x_names.end()) fail(2, "covariate '" + w + "' not present in the CSV");
            indices.push_back(static_cast<std::size_t>(it - ds.x_names.begin()));
        }
        for (auto& ob : ds.obs) {
            std::vector<double> x;
            for (std::size_t idx : indices) x.push_back(ob.x[idx]);
            ob.x = std::move(x);
        }
    }

    EstimateReport rep;
    try {
        rep = run_estimate_pipeline(ds.obs, opt);
    } catch (const std::exception& e) {
        fail(4, e.what());
    }
    if (rep.bootstrap_failures > opt.bootstrap_b / 10)
        fail(4, "estimation failed on more than 10% of bootstrap draws (" +
                    std::to_string(rep.bootstrap_failures) + "/" + std::to_string(opt.bootstrap_b) + ")");

    json r;
    r["schema_version"] = 1;
    r["library_version"] = kVersion;
    r["n"] = rep.n_rows;
    r["seed"] = opt.seed;
    r["bootstrap"] = {{"B", rep.bootstrap_total}, {"failures", rep.bootstrap_failures},
                      {"level", opt.level}};
    r["alpha_bar"] = opt.alpha_bar;
    r["alpha_grid"] = rep.alpha_grid;
    r["aggregates"] = json::array();
    for (const auto& row : rep.aggregates) {
        json a;
        a["name"] = row.kind.name();
        a["lb"] = row.lb;
        a["ub"] = row.ub;
        a["ci_lb"] = row.ci_lb;
        a["ci_ub"] = row.ci_ub;
        a["per_alpha"] = row.per_alpha;
        r["aggregates"].push_back(a);
    }
    auto out = open_out(out_path);
    out << r.dump(2) << '\n';

    if (!curves_path.empty()) {
        auto cf = open_out(curves_path);
        cf << "alpha,p,mte,band_lo,band_hi,union_lo,union_hi\n";
        for (std::size_t a = 0; a < rep.alpha_grid.size(); ++a)
            for (std::size_t j = 0; j < rep.p_grid.size(); ++j)
                cf << format_double(rep.alpha_grid[a]) << ',' << format_double(rep.p_grid[j]) << ','
                   << value_or_na(rep.curves[a][j]) << ',' << value_or_na(rep.bands[a].lo[j]) << ','
                   << value_or_na(rep.bands[a].hi[j]) << ',' << value_or_na(rep.union_band.lo[j])
                   << ',' << value_or_na(rep.union_band.hi[j]) << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------- replicate

int cmd_replicate(const std::string& figure, const std::string& out_dir, double fd_step,
                  int alpha_grid, int points) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) fail(3, "cannot create output directory '" + out_dir + "'");
    const Grid pg = Grid::linspace(0.05, 0.95, points);

    if (figure == "fig1") {
        auto out = open_out(out_dir + "/fig1.csv");
        out << "alpha,rho,p,lb,ub,truth\n";
        for (double alpha : {0.1, 0.3, 0.5, 0.7, 0.9})
            for (double rho : {-0.5, 0.0, 0.5})
                for (std::size_t j = 0; j < pg.size(); ++j) {
                    const Interval iv = closed_form_mte_bounds(pg[j], alpha, rho, fd_step);
                    out << format_double(alpha) << ',' << format_double(rho) << ','
                        << format_double(pg[j]) << ',' << interval_lo(iv) << ',' << interval_hi(iv)
                        << ',' << format_double(true_mte(pg[j])) << '\n';
                }
        return 0;
    }
    if (figure == "fig2") {
        auto out = open_out(out_dir + "/fig2.csv");
        out << "alpha_true,alpha_bar,p,lb,ub,truth\n";
        for (double alpha_true : {0.1, 0.3, 0.4}) {
            const LivFn liv = [alpha_true](double q) {
                if (!(q > alpha_true && q < 1.0 - alpha_true))
                    return std::numeric_limits<double>::quiet_NaN();
                return true_liv_rho0(q, alpha_true);
            };
            for (double alpha_bar : {0.1, 0.3, 0.4}) {
                const auto agrid = default_alpha_grid(alpha_bar, alpha_grid);
                const BoundCurve curve = symmetric_family_curve(pg, agrid, liv);
                for (std::size_t j = 0; j < pg.size(); ++j) {
                    const Interval& iv = curve.intervals[j];
                    out << format_double(alpha_true) << ',' << format_double(alpha_bar) << ','
                        << format_double(pg[j]) << ',' << interval_lo(iv) << ',' << interval_hi(iv)
                        << ',' << format_double(true_mte(pg[j])) << '\n';
                }
            }
        }
        return 0;
    }
    if (figure == "fig4") {
        auto out = open_out(out_dir + "/fig4.csv");
        out << "alpha,p,lb,ub,liv,truth\n";
        for (double alpha : {0.1, 0.3, 0.5, 0.7, 0.9})
            for (std::size_t j = 0; j < pg.size(); ++j) {
                const Interval iv = closed_form_mte_bounds(pg[j], alpha, 0.0, fd_step);
                double liv = std::numeric_limits<double>::quiet_NaN();
                if (alpha < 0.5 && pg[j] > alpha && pg[j] < 1.0 - alpha)
                    liv = true_liv_rho0(pg[j], alpha);
                out << format_double(alpha) << ',' << format_double(pg[j]) << ',' << interval_lo(iv)
                    << ',' << interval_hi(iv) << ',' << value_or_na(liv) << ','
                    << format_double(true_mte(pg[j])) << '\n';
            }
        return 0;
    }
    fail(2, "unknown figure '" + figure + "' (fig1 | fig2 | fig4)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Partial-identification toolkit for marginal treatment effects under a misclassified treatment"};
    app.require_subcommand(1);

    auto* sim = app.add_subcommand("simulate", "sample a dataset from the generative model");
    std::string sim_config, sim_out, sim_meta, sim_mechanism;
    std::int64_t sim_n = -1;
    std::uint64_t sim_seed = 0;
    double sim_alpha = -1.0, sim_rho = -2.0;
    bool sim_latent = false;
    int sim_threads = 1;
    auto* sim_seed_opt = sim->add_option("--seed", sim_seed, "RNG seed");
    sim->add_option("--config", sim_config, "JSON config with a dgp section");
    sim->add_option("--n", sim_n, "sample size");
    sim->add_option("--alpha", sim_alpha, "misclassification rate");
    sim->add_option("--rho", sim_rho, "copula dependence parameter");
    sim->add_option("--mechanism", sim_mechanism, "copula | threshold-low | threshold-high");
    sim->add_flag("--latent", sim_latent, "emit the latent columns as well");
    sim->add_option("--out", sim_out, "output CSV path")->required();
    sim->add_option("--meta", sim_meta, "metadata JSON path");
    sim->add_option("--threads", sim_threads, "worker threads (0 = auto)");

    auto* ide = app.add_subcommand("identify", "compute identification bounds from a dataset");
    std::string ide_data, ide_mode, ide_config, ide_out, ide_curves, ide_summary;
    double ide_alpha_bar_v = -1, ide_fd_v = -1, ide_bw_v = -1;
    int ide_agrid_v = -1, ide_ybins_v = -1, ide_zcells_v = -1;
    std::string ide_pgrid_v, ide_kernel_v;
    ide->add_option("data", ide_data, "input CSV")->required();
    ide->add_option("--mode", ide_mode, "prop2 | robust | symmetric | discrete-late")->required();
    ide->add_option("--config", ide_config, "JSON config with an ident section");
    auto* o_ab = ide->add_option("--alpha-bar", ide_alpha_bar_v, "upper bound on the misclassification rate");
    auto* o_ag = ide->add_option("--alpha-grid", ide_agrid_v, "alpha grid size");
    auto* o_pg = ide->add_option("--p-grid", ide_pgrid_v, "evaluation grid lo,hi,n");
    auto* o_fd = ide->add_option("--fd-step", ide_fd_v, "finite-difference separation");
    auto* o_yb = ide->add_option("--y-bins", ide_ybins_v, "outcome bins for the TV distances");
    auto* o_zc = ide->add_option("--z-cells", ide_zcells_v, "instrument cells");
    auto* o_bw = ide->add_option("--bandwidth", ide_bw_v, "kernel bandwidth");
    auto* o_kn = ide->add_option("--kernel", ide_kernel_v, "gaussian | epanechnikov");
    int ide_b = 0, ide_threads = 1;
    double ide_level = 0.95;
    std::uint64_t ide_seed = 0;
    auto* o_sd = ide->add_option("--seed", ide_seed, "bootstrap seed");
    ide->add_option("--B", ide_b, "bootstrap replications for the confidence region (symmetric mode)");
    ide->add_option("--level", ide_level, "confidence level for the region");
    ide->add_option("--threads", ide_threads, "bootstrap worker threads (0 = auto)");
    ide->add_option("--out", ide_out, "output CSV path")->required();
    ide->add_option("--curves", ide_curves, "per-alpha curves CSV (symmetric mode)");
    ide->add_option("--summary", ide_summary, "summary JSON (symmetric mode)");

    auto* est = app.add_subcommand("estimate", "run the semiparametric estimation pipeline");
    std::string est_data, est_config, est_cov, est_aggr, est_out, est_curves;
    double est_alpha_bar_v = -1, est_bw_v = -1, est_level_v = -1, est_trim_v = -1;
    int est_agrid_v = -1, est_b_v = -1;
    std::string est_kernel_v, est_pgrid_v;
    std::uint64_t est_seed = 0;
    int est_threads = 1;
    est->add_option("data", est_data, "input CSV")->required();
    est->add_option("--config", est_config, "JSON config with an estimate section");
    est->add_option("--covariates", est_cov, "comma-separated covariate columns (default: all x*)");
    auto* e_ab = est->add_option("--alpha-bar", est_alpha_bar_v, "upper bound on the misclassification rate");
    auto* e_ag = est->add_option("--alpha-grid", est_agrid_v, "alpha grid size");
    auto* e_bw = est->add_option("--bandwidth", est_bw_v, "kernel bandwidth (0 = rule-of-thumb)");
    auto* e_kn = est->add_option("--kernel", est_kernel_v, "gaussian | epanechnikov");
    auto* e_b = est->add_option("--B", est_b_v, "bootstrap replications");
    auto* e_lv = est->add_option("--level", est_level_v, "confidence level");
    est->add_option("--aggregates", est_aggr, "comma list, e.g. ate,att,atu,prte:0.05,amte:0.1");
    auto* e_sd = est->add_option("--seed", est_seed, "bootstrap seed");
    auto* e_tr = est->add_option("--trim", est_trim_v, "propensity trimming delta");
    auto* e_pg = est->add_option("--p-grid", est_pgrid_v, "MTE grid lo,hi,n");
    est->add_option("--threads", est_threads, "bootstrap worker threads (0 = auto)");
    est->add_option("--out", est_out, "report JSON path")->required();
    est->add_option("--curves", est_curves, "MTE curves CSV path");

    auto* rep = app.add_subcommand("replicate", "emit the closed-form replication bundles");
    std::string rep_fig, rep_out = ".";
    double rep_fd = 1e-4;
    int rep_agrid = 21, rep_points = 21;
    rep->add_option("figure", rep_fig, "fig1 | fig2 | fig4")->required();
    rep->add_option("--out", rep_out, "output directory");
    rep->add_option("--fd-step", rep_fd, "finite-difference separation");
    rep->add_option("--alpha-grid", rep_agrid, "alpha grid size per panel (fig2)");
    rep->add_option("--points", rep_points, "evaluation points per curve");

    CLI11_PARSE(app, argc, argv);

    const auto resolve_threads = [](int t) {
        if (t > 0) return t;
        const unsigned hw = std::thread::hardware_concurrency();
        return (hw == 0) ? 1 : static_cast<int>(hw);
    };
    const auto opt_d = [](const CLI::Option* o, double v) {
        return o->count() ? std::optional<double>(v) : std::nullopt;
    };
    const auto opt_i = [](const CLI::Option* o, int v) {
        return o->count() ? std::optional<int>(v) : std::nullopt;
    };
    const auto opt_s = [](const CLI::Option* o, const std::string& v) {
        return o->count() ? std::optional<std::string>(v) : std::nullopt;
    };

    try {
        if (sim->parsed())
            return cmd_simulate(sim_config, sim_n >= 0 ? std::optional<std::int64_t>(sim_n) : std::nullopt,
                                sim_seed_opt->count() ? std::optional<std::uint64_t>(sim_seed) : std::nullopt,
                                sim_alpha >= 0.0 ? std::optional<double>(sim_alpha) : std::nullopt,
                                sim_rho >= -1.0 ? std::optional<double>(sim_rho) : std::nullopt,
                                sim_mechanism.empty() ? std::nullopt : std::optional<std::string>(sim_mechanism),
                                sim_latent, sim_out, sim_meta, resolve_threads(sim_threads));
        if (ide->parsed())
            return cmd_identify(ide_data, ide_mode, ide_config, opt_d(o_ab, ide_alpha_bar_v),
                                opt_i(o_ag, ide_agrid_v), opt_s(o_pg, ide_pgrid_v),
                                opt_d(o_fd, ide_fd_v), opt_i(o_yb, ide_ybins_v),
                                opt_i(o_zc, ide_zcells_v), opt_d(o_bw, ide_bw_v),
                                opt_s(o_kn, ide_kernel_v), ide_b, ide_level,
                                o_sd->count() ? ide_seed : env_seed_or(0),
                                resolve_threads(ide_threads), ide_out, ide_curves, ide_summary);
        if (est->parsed())
            return cmd_estimate(est_data, est_config, est_cov, opt_d(e_ab, est_alpha_bar_v),
                                opt_i(e_ag, est_agrid_v), opt_d(e_bw, est_bw_v),
                                opt_s(e_kn, est_kernel_v), opt_i(e_b, est_b_v),
                                opt_d(e_lv, est_level_v), est_aggr,
                                e_sd->count() ? std::optional<std::uint64_t>(est_seed) : std::nullopt,
                                opt_d(e_tr, est_trim_v), opt_s(e_pg, est_pgrid_v),
                                resolve_threads(est_threads), est_out, est_curves);
        if (rep->parsed()) return cmd_replicate(rep_fig, rep_out, rep_fd, rep_agrid, rep_points);
    } catch (const CliError& e) {
        std::cerr << "error: " << e.message << '\n';
        return e.code;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::runtime_error& e) {
        const std::string what = e.what();
        std::cerr << "error: " << what << '\n';
        if (what.find("cannot open") != std::string::npos || what.find("CSV") != std::string::npos ||
            what.find("write") != std::string::npos)
            return 3;
        return 4;
    }
    return 0;
}
