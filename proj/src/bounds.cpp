#include "mtebounds/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mte {

std::size_t YBinning::bin_of(double y) const {
    if (discrete) {
        auto it = std::lower_bound(values.begin(), values.end(), y);
        if (it == values.end() || *it != y)
            throw std::invalid_argument("YBinning: value not among the discrete outcome levels");
        return static_cast<std::size_t>(it - values.begin());
    }
    if (y <= values.front()) return 0;
    if (y >= values.back()) return values.size() - 2;
    auto it = std::upper_bound(values.begin(), values.end(), y);
    return static_cast<std::size_t>(it - values.begin()) - 1;
}

namespace {

YBinning make_ybinning(std::span<const Observation> data, int y_bins) {
    std::set<double> distinct;
    for (const auto& ob : data) {
        distinct.insert(ob.y);
        if (distinct.size() > 20) break;
    }
    YBinning yb;
    if (distinct.size() <= 20) {
        yb.discrete = true;
        yb.values.assign(distinct.begin(), distinct.end());
        return yb;
    }
    double lo = data[0].y, hi = data[0].y;
    for (const auto& ob : data) {
        lo = std::min(lo, ob.y);
        hi = std::max(hi, ob.y);
    }
    if (!(hi > lo)) hi = lo + 1.0;
    yb.discrete = false;
    yb.values.resize(static_cast<std::size_t>(y_bins) + 1);
    for (int b = 0; b <= y_bins; ++b)
        yb.values[static_cast<std::size_t>(b)] = lo + (hi - lo) * b / y_bins;
    return yb;
}

CellStats finalize_cell(double z_value, const std::vector<const Observation*>& members, const YBinning& yb) {
    CellStats c;
    c.z_value = z_value;
    c.n_cell = static_cast<int>(members.size());
    c.joint1.assign(yb.bins(), 0.0);
    c.joint0.assign(yb.bins(), 0.0);
    double sum_y = 0.0;
    int n1 = 0;
    for (const Observation* ob : members) {
        const std::size_t b = yb.bin_of(ob->y);
        if (ob->d == 1) {
            c.joint1[b] += 1.0;
            ++n1;
        } else {
            c.joint0[b] += 1.0;
        }
        sum_y += ob->y;
    }
    const double denom = static_cast<double>(c.n_cell);
    for (auto& m : c.joint1) m /= denom;
    for (auto& m : c.joint0) m /= denom;
    c.pD1 = n1 / denom;
    c.mean_y = sum_y / denom;
    return c;
}

}  // namespace

CellTable cell_stats(std::span<const Observation> data, const std::vector<double>& z_edges, int y_bins) {
    if (data.empty()) throw std::invalid_argument("cell_stats: no observations");
    if (z_edges.size() < 3) throw std::invalid_argument("cell_stats: need at least 2 cells");
    for (std::size_t i = 1; i < z_edges.size(); ++i)
        if (!(z_edges[i] > z_edges[i - 1]))
            throw std::invalid_argument("cell_stats: z edges must be strictly increasing");

    CellTable table;
    table.ybin = make_ybinning(data, y_bins);
    const std::size_t k = z_edges.size() - 1;
    std::vector<std::vector<const Observation*>> buckets(k);
    for (const auto& ob : data) {
        if (ob.z < z_edges.front() || ob.z > z_edges.back()) continue;
        auto it = std::upper_bound(z_edges.begin(), z_edges.end(), ob.z);
        std::size_t idx = static_cast<std::size_t>(it - z_edges.begin());
        idx = (idx == 0) ? 0 : idx - 1;
        if (idx >= k) idx = k - 1;
        buckets[idx].push_back(&ob);
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (buckets[c].empty()) {
            std::ostringstream os;
            os << "cell_stats: empty z cell [" << z_edges[c] << ", " << z_edges[c + 1] << ")";
            throw std::invalid_argument(os.str());
        }
        double zm = 0.0;
        for (const Observation* ob : buckets[c]) zm += ob->z;
        zm /= static_cast<double>(buckets[c].size());
        table.cells.push_back(finalize_cell(zm, buckets[c], table.ybin));
    }
    return table;
}

CellTable cell_stats_discrete_z(std::span<const Observation> data, int y_bins) {
    if (data.empty()) throw std::invalid_argument("cell_stats: no observations");
    CellTable table;
    table.ybin = make_ybinning(data, y_bins);
    std::map<double, std::vector<const Observation*>> levels;
    for (const auto& ob : data) levels[ob.z].push_back(&ob);
    if (levels.size() < 2) throw std::invalid_argument("cell_stats: need at least 2 instrument levels");
    for (const auto& [z, members] : levels)
        table.cells.push_back(finalize_cell(z, members, table.ybin));
    return table;
}

std::vector<double> quantile_z_edges(std::span<const Observation> data, int k) {
    if (data.empty()) throw std::invalid_argument("quantile_z_edges: no observations");
    if (k < 2) throw std::invalid_argument("quantile_z_edges: need at least 2 cells");
    std::vector<double> zs(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) zs[i] = data[i].z;
    std::sort(zs.begin(), zs.end());
    std::vector<double> edges;
    edges.reserve(static_cast<std::size_t>(k) + 1);
    edges.push_back(zs.front());
    for (int c = 1; c < k; ++c) {
        std::size_t idx = static_cast<std::size_t>(static_cast<double>(zs.size()) * c / k);
        idx = std::min(idx, zs.size() - 1);
        double e = zs[idx];
        if (e <= edges.back()) continue;  // ties collapse cells
        edges.push_back(e);
    }
    if (zs.back() > edges.back()) edges.push_back(zs.back());
    if (edges.size() < 3) throw std::invalid_argument("quantile_z_edges: instrument has too few distinct values");
    return edges;
}

Interval pointwise_pscore_bounds(double q, double alpha_bar) {
    if (!(q >= 0.0 && q <= 1.0)) throw std::domain_error("pointwise_pscore_bounds: q must be in [0,1]");
    if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0))
        throw std::domain_error("pointwise_pscore_bounds: alpha_bar must be in [0,1]");
    Interval out;
    // inf over alpha of |q - alpha| and sup over alpha of min{q+alpha, 2-alpha-q}
    if (alpha_bar >= q) {
        out.lo = 0.0;
        out.binding_lo = "alpha=q attainable";
    } else {
        out.lo = q - alpha_bar;
        out.binding_lo = "q-alpha_bar";
    }
    if (alpha_bar >= 1.0 - q) {
        out.hi = 1.0;
        out.binding_hi = "alpha=1-q attainable";
    } else {
        out.hi = q + alpha_bar;
        out.binding_hi = "q+alpha_bar";
    }
    return out;
}

TvPair tv_distances(const CellStats& a, const CellStats& b) {
    if (a.joint1.size() != b.joint1.size() || a.joint0.size() != b.joint0.size())
        throw std::invalid_argument("tv_distances: cells use different outcome binnings");
    TvPair tv;
    for (std::size_t i = 0; i < a.joint1.size(); ++i) {
        tv.tv1 += std::fabs(a.joint1[i] - b.joint1[i]);
        tv.tv0 += std::fabs(a.joint0[i] - b.joint0[i]);
        tv.tv_y += 0.5 * std::fabs((a.joint1[i] + a.joint0[i]) - (b.joint1[i] + b.joint0[i]));
    }
    return tv;
}

Interval pscore_diff_bounds(const TvPair& tv, double delta_dz, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::domain_error("pscore_diff_bounds: alpha must be in [0,1]");
    Interval out;
    out.lo = std::max(tv.tv1, tv.tv0);
    out.binding_lo = (tv.tv1 >= tv.tv0) ? "tv1" : "tv0";
    const double c1 = 2.0 * alpha + delta_dz;
    const double c2 = 2.0 * (1.0 - alpha) - delta_dz;
    out.hi = std::min({1.0, c1, c2});
    out.binding_hi = (out.hi == 1.0) ? "one" : (out.hi == c1 ? "2a+ddz" : "2(1-a)-ddz");
    if (out.lo > out.hi) out.empty_set = true;
    return out;
}

namespace {

// Working point value for P(z): the midpoint of the propensity bounds, which
// equals the reported propensity whenever neither endpoint clips at 0 or 1.
// Using the unclipped midpoint keeps the cell map invariant in alpha_bar.
double cell_p_value(const CellStats& c, double /*alpha_bar*/) {
    return c.pD1;
}

struct FdPair {
    const CellStats* lo = nullptr;
    const CellStats* hi = nullptr;
};

// Finds the cells whose working P values sit nearest p - fd/2 and p + fd/2,
// one-sided at the support edges.
FdPair bracket_cells(const CellTable& table, double p_eval, double alpha_bar, double fd_step) {
    std::vector<std::pair<double, const CellStats*>> pv;
    pv.reserve(table.cells.size());
    for (const auto& c : table.cells) pv.emplace_back(cell_p_value(c, alpha_bar), &c);
    std::sort(pv.begin(), pv.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    double lo_target = p_eval - 0.5 * fd_step;
    double hi_target = p_eval + 0.5 * fd_step;
    if (lo_target < pv.front().first) { lo_target = p_eval; hi_target = p_eval + fd_step; }
    if (hi_target > pv.back().first) { hi_target = p_eval; lo_target = p_eval - fd_step; }

    auto nearest = [&](double target) {
        std::size_t best = 0;
        double bestd = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < pv.size(); ++i) {
            const double d = std::fabs(pv[i].first - target);
            if (d < bestd) { bestd = d; best = i; }
        }
        return best;
    };
    const std::size_t anchor = nearest(p_eval);
    if (std::fabs(pv[anchor].first - p_eval) > fd_step)
        throw std::runtime_error("mte_bounds_at: insufficient support near the evaluation point");
    std::size_t ilo = nearest(lo_target);
    std::size_t ihi = nearest(hi_target);
    if (ilo == ihi) {
        if (ihi + 1 < pv.size()) ++ihi;
        else if (ilo > 0) --ilo;
    }
    if (ilo == ihi)
        throw std::runtime_error("mte_bounds_at: need two distinct cells near the evaluation point");
    if (ilo > ihi) std::swap(ilo, ihi);
    return {pv[ilo].second, pv[ihi].second};
}

Interval ratio_interval(double dyz, double denom) {
    Interval out;
    if (denom <= 0.0) {
        if (dyz == 0.0) {
            out.lo = out.hi = 0.0;
            out.binding_lo = out.binding_hi = "zero";
            return out;
        }
        out.lo = std::min(0.0, dyz);
        out.hi = std::max(0.0, dyz);
        out.unbounded_lo = dyz < 0.0;
        out.unbounded_hi = dyz > 0.0;
        out.binding_lo = out.unbounded_lo ? "unbounded" : "zero";
        out.binding_hi = out.unbounded_hi ? "unbounded" : "zero";
        return out;
    }
    const double r = dyz / denom;
    out.lo = std::min(0.0, r);
    out.hi = std::max(0.0, r);
    out.binding_lo = (out.lo == 0.0) ? "zero" : "ratio";
    out.binding_hi = (out.hi == 0.0) ? "zero" : "ratio";
    return out;
}

Interval fd_bounds(double p_eval, const CellTable& table, const IdentConfig& cfg, bool robust) {
    const FdPair pair = bracket_cells(table, p_eval, cfg.alpha_bar, cfg.fd_step);
    const CellStats& clo = *pair.lo;
    const CellStats& chi = *pair.hi;
    const double dyz = chi.mean_y - clo.mean_y;
    const double ddz = chi.pD1 - clo.pD1;
    if (cfg.alpha_bar == 0.0) {
        Interval out;
        if (std::fabs(ddz) < 1e-300) {
            out = ratio_interval(dyz, 0.0);
            return out;
        }
        const double r = dyz / ddz;
        out.lo = out.hi = r;
        out.binding_lo = out.binding_hi = "point";
        return out;
    }
    const TvPair tv = tv_distances(clo, chi);
    const double denom = robust ? tv.tv_y : std::max(tv.tv1, tv.tv0);
    return ratio_interval(dyz, denom);
}

}  // namespace

Interval mte_bounds_at(double p_eval, const CellTable& table, const IdentConfig& cfg) {
    return fd_bounds(p_eval, table, cfg, /*robust=*/false);
}

Interval robust_mte_bounds_at(double p_eval, const CellTable& table, const IdentConfig& cfg) {
    return fd_bounds(p_eval, table, cfg, /*robust=*/true);
}

double ura_pdiff_lower(const TvPair& tv) {
    return 0.5 * tv.tv1 + 0.5 * tv.tv0;
}

DiscreteLateBounds late_bounds_discrete(const CellTable& table, int ell, double alpha_bar,
                                        const std::vector<int>* order) {
    const std::size_t K = table.cells.size();
    if (K < 2) throw std::invalid_argument("late_bounds_discrete: need at least 2 cells");
    if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0))
        throw std::domain_error("late_bounds_discrete: alpha_bar must be in [0,1]");

    std::vector<const CellStats*> ranked(K);
    if (order) {
        if (order->size() != K) throw std::invalid_argument("late_bounds_discrete: order length mismatch");
        std::vector<bool> seen(K, false);
        for (std::size_t i = 0; i < K; ++i) {
            const int r = (*order)[i];
            if (r < 0 || static_cast<std::size_t>(r) >= K || seen[static_cast<std::size_t>(r)])
                throw std::invalid_argument("late_bounds_discrete: order is not a permutation of the cells");
            seen[static_cast<std::size_t>(r)] = true;
            ranked[i] = &table.cells[static_cast<std::size_t>(r)];
        }
    } else {
        // default ranking by the reported propensity (symmetric misclassification)
        std::vector<std::size_t> idx(K);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::sort(idx.begin(), idx.end(),
                  [&](std::size_t a, std::size_t b) { return table.cells[a].pD1 < table.cells[b].pD1; });
        for (std::size_t i = 0; i < K; ++i) ranked[i] = &table.cells[idx[i]];
    }
    if (ell < 1 || static_cast<std::size_t>(ell) >= K)
        throw std::invalid_argument("late_bounds_discrete: ell must index an adjacent pair (1..K-1)");

    // pairwise ingredients: pair k joins ranked[k-1] and ranked[k], k = 1..K-1
    std::vector<TvPair> pair_tv(K);
    std::vector<double> pair_ddz(K);
    for (std::size_t k = 1; k < K; ++k) {
        pair_tv[k] = tv_distances(*ranked[k - 1], *ranked[k]);
        pair_ddz[k] = ranked[k]->pD1 - ranked[k - 1]->pD1;
    }
    const TvPair ends_tv = tv_distances(*ranked[0], *ranked[K - 1]);
    const double ends_ddz = ranked[K - 1]->pD1 - ranked[0]->pD1;
    const double dyz = ranked[static_cast<std::size_t>(ell)]->mean_y - ranked[static_cast<std::size_t>(ell) - 1]->mean_y;

    const auto ubp = [](double ddz, double a) {
        return std::min({1.0, 2.0 * a + ddz, 2.0 * (1.0 - a) - ddz});
    };

    DiscreteLateBounds out;
    out.delta_yz = dyz;
    bool any_alpha_feasible = false;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    bool unbounded_lo = false, unbounded_hi = false;
    double lbp_min = std::numeric_limits<double>::infinity();
    double ubp_max = 0.0;

    // union of the per-alpha intervals over alpha in [0, alpha_bar]
    const int steps = 2000;
    for (int s = 0; s <= steps; ++s) {
        const double a = alpha_bar * static_cast<double>(s) / static_cast<double>(steps);
        const double lb1 = std::max(pair_tv[static_cast<std::size_t>(ell)].tv1,
                                    pair_tv[static_cast<std::size_t>(ell)].tv0);
        double lb2 = std::max(ends_tv.tv1, ends_tv.tv0);
        double ub2 = ubp(ends_ddz, a);
        for (std::size_t k = 1; k < K; ++k) {
            if (k == static_cast<std::size_t>(ell)) continue;
            lb2 -= ubp(pair_ddz[k], a);
            ub2 -= std::max(pair_tv[k].tv1, pair_tv[k].tv0);
        }
        const double ub1 = ubp(pair_ddz[static_cast<std::size_t>(ell)], a);
        const double lb_p = std::max(lb1, lb2);
        const double ub_p = std::min(ub1, ub2);
        if (lb_p > ub_p || ub_p <= 0.0) continue;  // this alpha is incompatible with the data
        any_alpha_feasible = true;
        lbp_min = std::min(lbp_min, lb_p);
        ubp_max = std::max(ubp_max, ub_p);

        const double r_ub = dyz / ub_p;
        if (lb_p <= 0.0) {
            if (dyz > 0.0) {
                lo = std::min(lo, r_ub);
                unbounded_hi = true;
            } else if (dyz < 0.0) {
                hi = std::max(hi, r_ub);
                unbounded_lo = true;
            } else {
                lo = std::min(lo, 0.0);
                hi = std::max(hi, 0.0);
            }
        } else {
            const double r_lb = dyz / lb_p;
            lo = std::min(lo, std::min(r_ub, r_lb));
            hi = std::max(hi, std::max(r_ub, r_lb));
        }
    }

    if (!any_alpha_feasible) {
        out.late.empty_set = true;
        out.late.binding_lo = out.late.binding_hi = "no feasible alpha";
        return out;
    }
    if (unbounded_hi && !std::isfinite(hi)) hi = (std::isfinite(lo) ? lo : 0.0);
    if (unbounded_lo && !std::isfinite(lo)) lo = (std::isfinite(hi) ? hi : 0.0);
    out.late.lo = lo;
    out.late.hi = hi;
    out.late.unbounded_lo = unbounded_lo;
    out.late.unbounded_hi = unbounded_hi;
    out.late.binding_lo = unbounded_lo ? "unbounded" : "ratio";
    out.late.binding_hi = unbounded_hi ? "unbounded" : "ratio";
    out.lb_p = lbp_min;
    out.ub_p = ubp_max;
    return out;
}

double SharpReport::max_residual() const {
    return std::max({p1, p2, p3, p4, p5, p6, p7, p8, p9});
}

SharpReport sharp_constraint_residuals(const SharpCandidate& cand) {
    if (!(cand.alpha > 0.0 && cand.alpha < 1.0))
        throw std::domain_error("sharp_constraint_residuals: alpha must be in (0,1)");
    const std::size_t np = cand.p_grid.size();
    const std::size_t ny = cand.y_grid.size();
    if (cand.dq_dp.size() != np)
        throw std::invalid_argument("sharp_constraint_residuals: dq_dp length mismatch");
    if (cand.kappa1.size() != np || cand.kappa0.size() != np)
        throw std::invalid_argument("sharp_constraint_residuals: kappa grids must match p_grid");
    if (cand.pyd1_at_p1.size() != ny || cand.pyd1_at_p0.size() != ny)
        throw std::invalid_argument("sharp_constraint_residuals: terminal vectors must match y_grid");

    const double a = cand.alpha;
    SharpReport rep;
    rep.p7 = cand.index_sufficiency_discrepancy;

    std::vector<double> f0(np), f1(np);
    for (std::size_t i = 0; i < np; ++i) {
        f0[i] = (1.0 + cand.dq_dp[i]) / (2.0 * (1.0 - a));
        f1[i] = (1.0 - cand.dq_dp[i]) / (2.0 * a);
        rep.p1 = std::max(rep.p1, -f0[i]);
        rep.p2 = std::max(rep.p2, -f1[i]);
    }
    rep.p3 = std::fabs(trapezoid_integral(cand.p_grid, f0) - 1.0);
    rep.p4 = std::fabs(trapezoid_integral(cand.p_grid, f1) - 1.0);

    // implied P(Y1<=y | V=p) and P(Y0<=y | V=p); denominator a*f1 - (1-a)*f0 = -dq/dp
    std::vector<std::vector<double>> g1(np, std::vector<double>(ny, 0.0));
    std::vector<std::vector<double>> g0(np, std::vector<double>(ny, 0.0));
    std::vector<bool> usable(np, true);
    for (std::size_t i = 0; i < np; ++i) {
        const double det = a * f1[i] - (1.0 - a) * f0[i];
        if (std::fabs(det) < 1e-10) {
            usable[i] = false;
            rep.singular_ps.push_back(cand.p_grid[i]);
            continue;
        }
        if (cand.kappa1[i].size() != ny || cand.kappa0[i].size() != ny)
            throw std::invalid_argument("sharp_constraint_residuals: kappa row length mismatch");
        for (std::size_t j = 0; j < ny; ++j) {
            g1[i][j] = (a * f1[i] * cand.kappa0[i][j] - (1.0 - a) * f0[i] * cand.kappa1[i][j]) / det;
            g0[i][j] = ((1.0 - a) * f0[i] * cand.kappa0[i][j] - a * f1[i] * cand.kappa1[i][j]) / det;
            rep.p5 = std::max({rep.p5, -g1[i][j], g1[i][j] - 1.0});
            rep.p6 = std::max({rep.p6, -g0[i][j], g0[i][j] - 1.0});
        }
    }

    // terminal conditions, integrating over the usable part of the p grid
    std::vector<double> integrand(np);
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < np; ++i)
            integrand[i] = usable[i] ? (1.0 - a) * f0[i] * g1[i][j] : 0.0;
        rep.p8 = std::max(rep.p8, std::fabs(trapezoid_integral(cand.p_grid, integrand) - cand.pyd1_at_p1[j]));
        for (std::size_t i = 0; i < np; ++i)
            integrand[i] = usable[i] ? a * f1[i] * g0[i][j] : 0.0;
        rep.p9 = std::max(rep.p9, std::fabs(trapezoid_integral(cand.p_grid, integrand) - cand.pyd1_at_p0[j]));
    }
    return rep;
}

}  // namespace mte
