#include "mtebounds/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

#include <Eigen/Dense>

#include "mtebounds/simulate.hpp"

namespace mte {

namespace {

double interp_grid(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const std::size_t j = static_cast<std::size_t>(it - xs.begin()) - 1;
    const double frac = (x - xs[j]) / (xs[j + 1] - xs[j]);
    return ys[j] + frac * (ys[j + 1] - ys[j]);
}

}  // namespace

PscoreEstimate estimate_observed_pscore(std::span<const Observation> data, KernelKind kernel,
                                        double bandwidth, int grid_points, int knn_floor) {
    if (data.empty()) throw std::invalid_argument("estimate_observed_pscore: no observations");
    const std::size_t n = data.size();
    std::vector<double> zs(n);
    std::vector<double> ds(n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return data[a].z < data[b].z; });
    for (std::size_t i = 0; i < n; ++i) {
        zs[i] = data[order[i]].z;
        ds[i] = data[order[i]].d;
    }
    const double h_base =
        (bandwidth > 0.0) ? bandwidth : 1.06 * std::sqrt(std::max(1e-12, [&] {
            double m = 0.0, s = 0.0;
            for (double z : zs) m += z;
            m /= static_cast<double>(n);
            for (double z : zs) s += (z - m) * (z - m);
            return s / static_cast<double>(n);
        }())) * std::pow(static_cast<double>(n), -0.2);

    PscoreEstimate out;
    const int g = std::max(grid_points, 11);
    out.z_grid.resize(static_cast<std::size_t>(g));
    out.q_grid.resize(static_cast<std::size_t>(g));
    const double zlo = zs.front(), zhi = zs.back();
    // neighbor floor scaled down for small samples so the tails are not
    // dragged toward the bulk
    const std::size_t k_floor = std::min<std::size_t>(
        std::min<std::size_t>(static_cast<std::size_t>(std::max(knn_floor, 8)),
                              std::max<std::size_t>(30, n / 250)),
        n);

    for (int j = 0; j < g; ++j) {
        const double z0 = zlo + (zhi - zlo) * j / (g - 1);
        // bandwidth floor: reach at least k_floor neighbors
        const auto lo_it = std::lower_bound(zs.begin(), zs.end(), z0);
        const std::size_t pos = static_cast<std::size_t>(lo_it - zs.begin());
        double h = h_base;
        {
            std::size_t a = pos, b = pos;
            std::size_t count = 0;
            double reach = 0.0;
            while (count < k_floor && (a > 0 || b < n)) {
                const double dl = (a > 0) ? z0 - zs[a - 1] : std::numeric_limits<double>::infinity();
                const double dr = (b < n) ? zs[b] - z0 : std::numeric_limits<double>::infinity();
                if (dl <= dr) { reach = dl; --a; } else { reach = dr; ++b; }
                ++count;
            }
            h = std::max(h_base, reach);
        }
        // local-constant fit of D on Z at z0: a weighted mean cannot leave the
        // data range, so the support edges stay sane where local-linear
        // extrapolation would overshoot
        double s0 = 0, t0 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dx = zs[i] - z0;
            if (std::fabs(dx) > 8.0 * h) continue;
            const double w = kernel_weight(kernel, dx / h);
            if (w <= 0.0) continue;
            s0 += w;
            t0 += w * ds[i];
        }
        const double q = (s0 > 0.0) ? t0 / s0 : 0.5;
        out.z_grid[static_cast<std::size_t>(j)] = z0;
        out.q_grid[static_cast<std::size_t>(j)] = std::clamp(q, 1e-9, 1.0 - 1e-9);
    }

    out.inf_q = *std::min_element(out.q_grid.begin(), out.q_grid.end());
    out.sup_q = *std::max_element(out.q_grid.begin(), out.q_grid.end());
    // Under symmetric misclassification q(z) is monotone, so the support
    // edges carry the extrema without the selection noise of a grid-wide
    // min/max; both tails then estimate the same alpha and the cap pools them.
    out.alpha_cap = std::min(out.q_grid.front(), 1.0 - out.q_grid.back());
    out.q_row.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out.q_row[i] = interp_grid(out.z_grid, out.q_grid, data[i].z);
    return out;
}

double LivEstimate::at(double q) const {
    if (std::isnan(q) || q < q_lo || q > q_hi) return std::numeric_limits<double>::quiet_NaN();
    return interp_grid(q_grid.points(), liv, q);
}

LivEstimate estimate_liv(std::span<const double> q_rows, std::span<const double> y_rows,
                         KernelKind kernel, double bandwidth, int grid_points) {
    if (q_rows.size() != y_rows.size() || q_rows.empty())
        throw std::invalid_argument("estimate_liv: bad inputs");
    std::vector<double> sorted(q_rows.begin(), q_rows.end());
    std::sort(sorted.begin(), sorted.end());
    // evaluable support: inner quantile range of the observed propensity
    const std::size_t n = sorted.size();
    const double q_lo = sorted[static_cast<std::size_t>(0.001 * static_cast<double>(n - 1))];
    const double q_hi = sorted[static_cast<std::size_t>(0.999 * static_cast<double>(n - 1))];
    if (!(q_hi > q_lo)) throw std::invalid_argument("estimate_liv: propensity has no variation");

    LivEstimate out;
    out.q_grid = Grid::linspace(q_lo, q_hi, std::max(grid_points, 21));
    out.q_lo = q_lo;
    out.q_hi = q_hi;
    out.liv = local_poly_deriv(q_rows, y_rows, out.q_grid, 2, kernel, bandwidth);
    // fill isolated undefined points from neighbors
    for (std::size_t j = 0; j < out.liv.size(); ++j) {
        if (!std::isnan(out.liv[j])) continue;
        if (j > 0 && !std::isnan(out.liv[j - 1])) out.liv[j] = out.liv[j - 1];
        else if (j + 1 < out.liv.size() && !std::isnan(out.liv[j + 1])) out.liv[j] = out.liv[j + 1];
    }
    return out;
}

namespace {

// the per-alpha family curves from one dataset
std::vector<std::vector<double>> symmetric_curves(std::span<const Observation> data,
                                                  const IdentConfig& cfg,
                                                  const std::vector<double>& alpha_grid,
                                                  PscoreEstimate* pscore_out,
                                                  LivEstimate* liv_out) {
    PscoreEstimate ps = estimate_observed_pscore(data, cfg.kernel, 0.0);
    std::vector<double> ys(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) ys[i] = data[i].y;
    LivEstimate liv = estimate_liv(ps.q_row, ys, cfg.kernel, cfg.bandwidth);
    const LivFn liv_fn = [&liv](double q) { return liv.at(q); };

    std::vector<std::vector<double>> curves(alpha_grid.size(),
                                            std::vector<double>(cfg.p_grid.size()));
    for (std::size_t a = 0; a < alpha_grid.size(); ++a)
        for (std::size_t j = 0; j < cfg.p_grid.size(); ++j)
            curves[a][j] = mte_symmetric(cfg.p_grid[j], alpha_grid[a], liv_fn);
    if (pscore_out) *pscore_out = std::move(ps);
    if (liv_out) *liv_out = std::move(liv);
    return curves;
}

}  // namespace

SymmetricIdentify identify_symmetric(std::span<const Observation> data, const IdentConfig& cfg,
                                     int bootstrap_b, double level, std::uint64_t seed,
                                     int threads) {
    validate(cfg);
    SymmetricIdentify out;
    out.p_grid = cfg.p_grid;
    out.alpha_grid = default_alpha_grid(cfg.alpha_bar, cfg.alpha_grid_size);

    LivEstimate liv;
    out.curves = symmetric_curves(data, cfg, out.alpha_grid, &out.pscore, &liv);
    const LivFn liv_fn = [&liv](double q) { return liv.at(q); };
    out.envelope = symmetric_family_curve(cfg.p_grid, out.alpha_grid, liv_fn);
    out.envelope.liv = std::vector<double>(cfg.p_grid.size());
    for (std::size_t j = 0; j < cfg.p_grid.size(); ++j)
        (*out.envelope.liv)[j] = liv.at(cfg.p_grid[j]);

    out.feasible_alphas =
        alpha_identified_set(out.pscore.q_grid, cfg.alpha_bar, cfg.alpha_grid_size);

    if (bootstrap_b >= 2) {
        const std::size_t B = static_cast<std::size_t>(bootstrap_b);
        const std::size_t n = data.size();
        std::vector<std::vector<std::vector<double>>> reps(B);  // [b][alpha][p]
        std::vector<char> ok(B, 0);
        auto worker = [&](std::size_t b0, std::size_t b1) {
            for (std::size_t b = b0; b < b1; ++b) {
                Xoshiro256pp rng = Xoshiro256pp::substream(seed, b);
                std::vector<Observation> sample;
                sample.reserve(n);
                for (std::size_t i = 0; i < n; ++i)
                    sample.push_back(data[static_cast<std::size_t>(rng.next() % n)]);
                try {
                    reps[b] = symmetric_curves(sample, cfg, out.alpha_grid, nullptr, nullptr);
                    ok[b] = 1;
                } catch (const std::exception&) {
                    ok[b] = 0;
                }
            }
        };
        const int nt = std::max(1, threads);
        if (nt == 1) {
            worker(0, B);
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < nt; ++t)
                pool.emplace_back(worker, B * static_cast<std::size_t>(t) / static_cast<std::size_t>(nt),
                                  B * static_cast<std::size_t>(t + 1) / static_cast<std::size_t>(nt));
            for (auto& th : pool) th.join();
        }
        const double tail = (1.0 - level) / 2.0;
        std::vector<Band> bands(out.alpha_grid.size());
        std::vector<double> col;
        for (std::size_t a = 0; a < out.alpha_grid.size(); ++a) {
            bands[a].lo.assign(cfg.p_grid.size(), std::numeric_limits<double>::quiet_NaN());
            bands[a].hi.assign(cfg.p_grid.size(), std::numeric_limits<double>::quiet_NaN());
            for (std::size_t j = 0; j < cfg.p_grid.size(); ++j) {
                col.clear();
                for (std::size_t b = 0; b < B; ++b)
                    if (ok[b] && !std::isnan(reps[b][a][j])) col.push_back(reps[b][a][j]);
                if (col.size() < 2) continue;
                bands[a].lo[j] = empirical_quantile(col, tail);
                bands[a].hi[j] = empirical_quantile(col, 1.0 - tail);
            }
        }
        out.region = union_confidence_region(bands);
    }
    return out;
}

BoundCurve identify_bounds(std::span<const Observation> data, const IdentConfig& cfg, bool robust) {
    validate(cfg);
    // continuous instrument: equal-count z cells over the config's z grid span
    const int cells = std::max(10, static_cast<int>(cfg.z_grid.size()) - 1);
    const CellTable table = cell_stats(data, quantile_z_edges(data, cells), cfg.y_bins);

    std::vector<double> ys(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) ys[i] = data[i].y;
    const PscoreEstimate ps = estimate_observed_pscore(data, cfg.kernel, 0.0);
    const LivEstimate liv = estimate_liv(ps.q_row, ys, cfg.kernel, cfg.bandwidth);

    BoundCurve curve;
    curve.at = cfg.p_grid;
    curve.intervals.resize(cfg.p_grid.size());
    curve.liv = std::vector<double>(cfg.p_grid.size());
    for (std::size_t j = 0; j < cfg.p_grid.size(); ++j) {
        (*curve.liv)[j] = liv.at(cfg.p_grid[j]);
        try {
            curve.intervals[j] = robust ? robust_mte_bounds_at(cfg.p_grid[j], table, cfg)
                                        : mte_bounds_at(cfg.p_grid[j], table, cfg);
        } catch (const std::exception&) {
            curve.intervals[j].empty_set = true;
            curve.intervals[j].binding_lo = curve.intervals[j].binding_hi = "insufficient support";
        }
    }
    return curve;
}

std::vector<DiscreteLateRow> identify_discrete_late(std::span<const Observation> data,
                                                    const IdentConfig& cfg) {
    validate(cfg);
    std::set<double> levels;
    for (const auto& ob : data) {
        levels.insert(ob.z);
        if (levels.size() > 64)
            throw std::invalid_argument(
                "identify_discrete_late: instrument has many distinct values; use the continuous modes");
    }
    const CellTable table = cell_stats_discrete_z(data, cfg.y_bins);
    // rank cells by reported propensity (symmetric misclassification default)
    std::vector<std::size_t> rank(table.cells.size());
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
        return table.cells[a].pD1 < table.cells[b].pD1;
    });

    std::vector<DiscreteLateRow> rows;
    for (int ell = 1; ell < static_cast<int>(table.cells.size()); ++ell) {
        DiscreteLateRow row;
        row.pair = ell;
        row.z_lo = table.cells[rank[static_cast<std::size_t>(ell - 1)]].z_value;
        row.z_hi = table.cells[rank[static_cast<std::size_t>(ell)]].z_value;
        row.ours = late_bounds_discrete(table, ell, cfg.alpha_bar);
        const TvPair tv = tv_distances(table.cells[rank[static_cast<std::size_t>(ell - 1)]],
                                       table.cells[rank[static_cast<std::size_t>(ell)]]);
        row.ura_lb = ura_pdiff_lower(tv);
        const double dyz = row.ours.delta_yz;
        if (row.ura_lb > 0.0) {
            row.ura.lo = std::min(dyz, dyz / row.ura_lb);
            row.ura.hi = std::max(dyz, dyz / row.ura_lb);
        } else {
            row.ura.lo = std::min(dyz, 0.0);
            row.ura.hi = std::max(dyz, 0.0);
            row.ura.unbounded_lo = dyz < 0.0;
            row.ura.unbounded_hi = dyz > 0.0;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

struct PipelineCore {
    std::vector<double> alpha_grid;
    Grid p_grid = Grid::linspace(0.0, 1.0, 2);
    EstimateOptions opt;

    // One full pass: logit propensity, per-alpha inversion + Robinson fit,
    // MTE curves and aggregates. Throws when a stage degenerates.
    struct Result {
        std::vector<std::vector<double>> curves;          // [alpha][p]
        std::vector<std::vector<double>> aggregates;      // [aggregate][alpha]
    };

    Result run(const std::vector<Observation>& rows) const {
        const std::size_t n = rows.size();
        const std::size_t k = rows.empty() ? 0 : rows[0].x.size();
        Eigen::MatrixXd features(n, 2 + k);
        std::vector<int> labels(n);
        std::vector<double> ys(n);
        for (std::size_t i = 0; i < n; ++i) {
            features(static_cast<Eigen::Index>(i), 0) = 1.0;
            features(static_cast<Eigen::Index>(i), 1) = rows[i].z;
            for (std::size_t c = 0; c < k; ++c)
                features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(2 + c)) = rows[i].x[c];
            labels[i] = rows[i].d;
            ys[i] = rows[i].y;
        }
        const LogitFit logit = fit_logit(features, labels);
        std::vector<double> q(n);
        for (std::size_t i = 0; i < n; ++i)
            q[i] = logistic(features.row(static_cast<Eigen::Index>(i)).dot(logit.coef));

        Eigen::MatrixXd xonly(n, k);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < k; ++c)
                xonly(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i].x[c];
        Eigen::RowVectorXd xbar = (k > 0) ? Eigen::RowVectorXd(xonly.colwise().mean())
                                          : Eigen::RowVectorXd();

        IdentConfig cfg;
        cfg.kernel = opt.kernel;
        cfg.trim_delta = opt.trim_delta;

        Result res;
        res.curves.assign(alpha_grid.size(), {});
        res.aggregates.assign(opt.aggregates.size(), std::vector<double>(alpha_grid.size()));
        for (std::size_t a = 0; a < alpha_grid.size(); ++a) {
            const double alpha = alpha_grid[a];
            std::vector<double> p(n);
            for (std::size_t i = 0; i < n; ++i)
                p[i] = (q[i] - alpha) / (1.0 - 2.0 * alpha);
            // bandwidth <= 0 requests the rule-of-thumb derivative bandwidth
            cfg.bandwidth = opt.bandwidth;
            if (!(cfg.bandwidth > 0.0)) {
                double mean = 0.0, var = 0.0;
                for (double v : p) mean += v;
                mean /= static_cast<double>(n);
                for (double v : p) var += (v - mean) * (v - mean);
                var /= static_cast<double>(n);
                cfg.bandwidth = std::max(
                    0.02, 1.06 * std::sqrt(var) * std::pow(static_cast<double>(n), -1.0 / 7.0));
            }
            const PartialLinearFit fit = robinson_fit(ys, xonly, p, cfg);
            res.curves[a] = mte_curve_from_fit(fit, xbar, p_grid, cfg.kernel, cfg.bandwidth);

            // blank the curve outside the fitted propensity's support: smooth
            // kernels would otherwise extrapolate freely there
            std::vector<double> pk_sorted = fit.p_kept;
            std::sort(pk_sorted.begin(), pk_sorted.end());
            const double support_lo = pk_sorted[static_cast<std::size_t>(0.001 * (pk_sorted.size() - 1))];
            const double support_hi = pk_sorted[static_cast<std::size_t>(0.999 * (pk_sorted.size() - 1))];
            for (std::size_t j = 0; j < p_grid.size(); ++j)
                if (p_grid[j] < support_lo || p_grid[j] > support_hi)
                    res.curves[a][j] = std::numeric_limits<double>::quiet_NaN();

            // aggregate over the part of the grid where the curve is known
            std::vector<double> sub_pts, sub_curve;
            for (std::size_t j = 0; j < p_grid.size(); ++j)
                if (!std::isnan(res.curves[a][j])) {
                    sub_pts.push_back(p_grid[j]);
                    sub_curve.push_back(res.curves[a][j]);
                }
            if (sub_pts.size() < 5) throw std::runtime_error("estimate: curve support too thin");
            const Grid sub_grid = Grid::from_points(sub_pts);
            for (std::size_t ag = 0; ag < opt.aggregates.size(); ++ag) {
                // an aggregate without support overlap at this alpha is
                // recorded as missing, not fatal
                try {
                    const WeightFn w = aggregate_weight_fn(opt.aggregates[ag], fit.p_kept, sub_grid);
                    res.aggregates[ag][a] = aggregate_mte(sub_curve, w, sub_grid);
                } catch (const std::invalid_argument&) {
                    res.aggregates[ag][a] = std::numeric_limits<double>::quiet_NaN();
                }
            }
        }
        return res;
    }
};

}  // namespace

EstimateReport run_estimate_pipeline(std::span<const Observation> data, const EstimateOptions& opt) {
    if (data.empty()) throw std::invalid_argument("estimate: no observations");
    if (opt.bootstrap_b < 2) throw std::invalid_argument("estimate: bootstrap B must be at least 2");
    if (!(opt.level > 0.0 && opt.level < 1.0)) throw std::invalid_argument("estimate: level in (0,1)");

    PipelineCore core;
    core.alpha_grid = default_alpha_grid(opt.alpha_bar, opt.alpha_grid_size);
    // guard the inversion away from 1/2
    while (!core.alpha_grid.empty() && core.alpha_grid.back() >= 0.5 - 1e-6) core.alpha_grid.pop_back();
    if (core.alpha_grid.empty()) throw std::invalid_argument("estimate: alpha grid is empty below 1/2");
    core.p_grid = opt.p_grid;
    core.opt = opt;

    const std::vector<Observation> base(data.begin(), data.end());
    const PipelineCore::Result point = core.run(base);

    EstimateReport rep;
    rep.alpha_grid = core.alpha_grid;
    rep.p_grid = opt.p_grid;
    rep.curves = point.curves;
    rep.n_rows = data.size();
    rep.bootstrap_total = opt.bootstrap_b;

    // bootstrap replicates, parallel over replicate indices with derived seeds
    const std::size_t B = static_cast<std::size_t>(opt.bootstrap_b);
    std::vector<PipelineCore::Result> reps(B);
    std::vector<char> ok(B, 0);
    auto worker = [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b) {
            Xoshiro256pp rng = Xoshiro256pp::substream(opt.seed, b);
            std::vector<Observation> sample;
            sample.reserve(base.size());
            for (std::size_t i = 0; i < base.size(); ++i)
                sample.push_back(base[static_cast<std::size_t>(rng.next() % base.size())]);
            try {
                reps[b] = core.run(sample);
                ok[b] = 1;
            } catch (const std::exception&) {
                ok[b] = 0;
            }
        }
    };
    const int nt = std::max(1, opt.threads);
    if (nt == 1) {
        worker(0, B);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nt; ++t)
            pool.emplace_back(worker, B * static_cast<std::size_t>(t) / static_cast<std::size_t>(nt),
                              B * static_cast<std::size_t>(t + 1) / static_cast<std::size_t>(nt));
        for (auto& th : pool) th.join();
    }
    for (std::size_t b = 0; b < B; ++b)
        if (!ok[b]) ++rep.bootstrap_failures;

    const double tail = (1.0 - opt.level) / 2.0;

    // per-alpha curve bands and their union
    rep.bands.resize(core.alpha_grid.size());
    for (std::size_t a = 0; a < core.alpha_grid.size(); ++a) {
        Band& band = rep.bands[a];
        band.lo.assign(opt.p_grid.size(), std::numeric_limits<double>::quiet_NaN());
        band.hi.assign(opt.p_grid.size(), std::numeric_limits<double>::quiet_NaN());
        std::vector<double> col;
        for (std::size_t j = 0; j < opt.p_grid.size(); ++j) {
            col.clear();
            for (std::size_t b = 0; b < B; ++b)
                if (ok[b] && !std::isnan(reps[b].curves[a][j])) col.push_back(reps[b].curves[a][j]);
            if (col.size() < 2) continue;
            band.lo[j] = empirical_quantile(col, tail);
            band.hi[j] = empirical_quantile(col, 1.0 - tail);
        }
    }
    rep.union_band = union_confidence_region(rep.bands);

    // aggregate bounds over the alpha grid, with bootstrap CIs of the bounds
    const auto finite_range = [](const std::vector<double>& vals, double& lo, double& hi) {
        lo = std::numeric_limits<double>::quiet_NaN();
        hi = std::numeric_limits<double>::quiet_NaN();
        for (double v : vals) {
            if (std::isnan(v)) continue;
            if (std::isnan(lo) || v < lo) lo = v;
            if (std::isnan(hi) || v > hi) hi = v;
        }
        return !std::isnan(lo);
    };
    rep.aggregates.resize(opt.aggregates.size());
    for (std::size_t ag = 0; ag < opt.aggregates.size(); ++ag) {
        AggregateBoundsRow& row = rep.aggregates[ag];
        row.kind = opt.aggregates[ag];
        row.per_alpha = point.aggregates[ag];
        if (!finite_range(row.per_alpha, row.lb, row.ub))
            throw std::runtime_error("estimate: aggregate " + row.kind.name() +
                                     " has no support at any alpha on this data");
        std::vector<double> lbs, ubs;
        for (std::size_t b = 0; b < B; ++b) {
            if (!ok[b]) continue;
            double lo, hi;
            if (finite_range(reps[b].aggregates[ag], lo, hi)) {
                lbs.push_back(lo);
                ubs.push_back(hi);
            }
        }
        if (lbs.size() >= 2) {
            row.ci_lb = empirical_quantile(lbs, tail);
            row.ci_ub = empirical_quantile(ubs, 1.0 - tail);
        } else {
            row.ci_lb = row.lb;
            row.ci_ub = row.ub;
        }
    }
    return rep;
}

}  // namespace mte
