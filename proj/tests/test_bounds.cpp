#include "doctest.h"

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "mtebounds/bounds.hpp"
#include "mtebounds/simulate.hpp"
#include "oracles.hpp"

using namespace mte;

namespace {

// grid-search version of the pointwise propensity bounds; the objectives are
// piecewise linear in alpha, so the kink candidates make the search exact
Interval pointwise_grid_search(double q, double alpha_bar, int steps = 10000) {
    std::vector<double> candidates;
    candidates.reserve(static_cast<std::size_t>(steps) + 3);
    for (int s = 0; s <= steps; ++s)
        candidates.push_back(alpha_bar * static_cast<double>(s) / static_cast<double>(steps));
    if (q <= alpha_bar) candidates.push_back(q);
    if (1.0 - q <= alpha_bar) candidates.push_back(1.0 - q);
    double lo = 1e300, hi = -1e300;
    for (double a : candidates) {
        lo = std::min(lo, std::max(q - a, a - q));
        hi = std::max(hi, std::min(q + a, (1.0 - a) + (1.0 - q)));
    }
    Interval out;
    out.lo = lo;
    out.hi = hi;
    return out;
}

std::vector<Observation> obs_block(double z, int d, double y, int count) {
    std::vector<Observation> out;
    for (int i = 0; i < count; ++i) out.push_back(Observation{y, d, z, {}});
    return out;
}

void append(std::vector<Observation>& to, const std::vector<Observation>& from) {
    to.insert(to.end(), from.begin(), from.end());
}

// binary-instrument table: cell z=0 and z=1 with prescribed (d, y) counts
CellTable binary_example_table() {
    std::vector<Observation> data;
    append(data, obs_block(0.0, 1, 0.0, 20));
    append(data, obs_block(0.0, 1, 1.0, 20));
    append(data, obs_block(0.0, 0, 0.0, 30));
    append(data, obs_block(0.0, 0, 1.0, 30));
    append(data, obs_block(1.0, 1, 0.0, 10));
    append(data, obs_block(1.0, 1, 1.0, 39));
    append(data, obs_block(1.0, 1, 2.0, 1));
    append(data, obs_block(1.0, 0, 0.0, 35));
    append(data, obs_block(1.0, 0, 1.0, 15));
    return cell_stats_discrete_z(data, 50);
}

}  // namespace

TEST_CASE("pointwise propensity bounds: examples") {
    const Interval a = pointwise_pscore_bounds(0.6, 0.2);
    CHECK(a.lo == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(a.hi == doctest::Approx(0.8).epsilon(1e-15));

    for (double q : {0.0, 0.17, 0.5, 0.99}) {
        const Interval b = pointwise_pscore_bounds(q, 0.0);
        CHECK(b.lo == q);
        CHECK(b.hi == q);
    }
    const Interval c = pointwise_pscore_bounds(0.6, 1.0);
    CHECK(c.lo == 0.0);
    CHECK(c.hi == 1.0);
    CHECK_THROWS_AS(pointwise_pscore_bounds(1.2, 0.5), std::domain_error);
}

TEST_CASE("pointwise propensity bounds: closed form equals grid search") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double q = unif(gen);
        const double ab = unif(gen);
        const Interval fast = pointwise_pscore_bounds(q, ab);
        const Interval slow = pointwise_grid_search(q, ab);
        CHECK(std::fabs(fast.lo - slow.lo) <= 1e-12);
        CHECK(std::fabs(fast.hi - slow.hi) <= 1e-12);
    }
}

TEST_CASE("pointwise propensity bounds: monotone in alpha_bar") {
    std::mt19937_64 gen(6);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < 300; ++i) {
        const double q = unif(gen);
        double a1 = unif(gen), a2 = unif(gen);
        if (a1 > a2) std::swap(a1, a2);
        const Interval narrow = pointwise_pscore_bounds(q, a1);
        const Interval wide = pointwise_pscore_bounds(q, a2);
        CHECK(wide.lo <= narrow.lo + 1e-15);
        CHECK(wide.hi >= narrow.hi - 1e-15);
    }
}

TEST_CASE("cell stats: discrete instrument and outcome count exactly") {
    std::vector<Observation> data;
    append(data, obs_block(0.0, 1, 1.0, 3));
    append(data, obs_block(0.0, 0, 0.0, 5));
    append(data, obs_block(0.0, 0, 1.0, 2));
    append(data, obs_block(1.0, 1, 0.0, 4));
    append(data, obs_block(1.0, 1, 1.0, 4));
    append(data, obs_block(1.0, 0, 0.0, 2));
    const CellTable t = cell_stats_discrete_z(data, 50);
    REQUIRE(t.cells.size() == 2);
    CHECK(t.ybin.discrete);
    const CellStats& c0 = t.cells[0];
    CHECK(c0.n_cell == 10);
    CHECK(c0.joint1 == std::vector<double>{0.0, 0.3});
    CHECK(c0.joint0 == std::vector<double>{0.5, 0.2});
    CHECK(c0.pD1 == doctest::Approx(0.3).epsilon(1e-15));
    const CellStats& c1 = t.cells[1];
    CHECK(c1.joint1 == std::vector<double>{0.4, 0.4});
    CHECK(c1.joint0 == std::vector<double>{0.2, 0.0});
    // joint masses sum to one per cell
    double m = 0.0;
    for (double v : c1.joint1) m += v;
    for (double v : c1.joint0) m += v;
    CHECK(m == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(cell_stats_discrete_z(std::vector<Observation>{}, 50), std::invalid_argument);
    CHECK_THROWS_AS(cell_stats(std::vector<Observation>{}, {0.0, 0.5, 1.0}, 10), std::invalid_argument);
    // empty interior cell
    std::vector<Observation> sparse;
    append(sparse, obs_block(0.0, 1, 1.0, 5));
    append(sparse, obs_block(10.0, 0, 0.0, 5));
    CHECK_THROWS_AS(cell_stats(sparse, {-1.0, 4.0, 5.0, 11.0}, 10), std::invalid_argument);
}

TEST_CASE("cell stats: simulated reported propensity near the closed form") {
    DgpSpec spec;
    spec.misclass = {MisclassKind::CopulaDependent, 0.3, 0.0};
    spec.sync_rho();
    spec.mean[4] = 0.0;  // center the instrument so z = 0 is densely populated
    spec.n = 100000;
    spec.seed = 123;
    const SampleResult s = sample_dgp(spec);
    const auto edges = quantile_z_edges(s.obs, 50);
    const CellTable t = cell_stats(s.obs, edges, 30);
    // cell whose mean z is nearest 0 has true propensity 0.5 and q = 0.5
    double best = 1e9;
    double got = 0.0;
    for (const auto& c : t.cells)
        if (std::fabs(c.z_value) < best) {
            best = std::fabs(c.z_value);
            got = c.pD1;
        }
    CHECK(std::fabs(got - 0.5) < 0.04);
}

TEST_CASE("tv distances") {
    const CellTable t = binary_example_table();
    const TvPair self = tv_distances(t.cells[0], t.cells[0]);
    CHECK(self.tv1 == 0.0);
    CHECK(self.tv0 == 0.0);
    CHECK(self.tv_y == 0.0);

    const TvPair tv = tv_distances(t.cells[0], t.cells[1]);
    CHECK(tv.tv1 == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(tv.tv0 == doctest::Approx(0.2).epsilon(1e-12));

    CellStats wrong = t.cells[0];
    wrong.joint1.push_back(0.0);
    CHECK_THROWS_AS(tv_distances(t.cells[0], wrong), std::invalid_argument);
}

TEST_CASE("tv distances: random-histogram properties") {
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int bins = 7;
    auto random_cell = [&]() {
        CellStats c;
        c.joint1.resize(bins);
        c.joint0.resize(bins);
        double tot = 0.0;
        for (int b = 0; b < bins; ++b) {
            c.joint1[b] = unif(gen);
            c.joint0[b] = unif(gen);
            tot += c.joint1[b] + c.joint0[b];
        }
        c.pD1 = 0.0;
        for (int b = 0; b < bins; ++b) {
            c.joint1[b] /= tot;
            c.joint0[b] /= tot;
            c.pD1 += c.joint1[b];
        }
        return c;
    };
    for (int i = 0; i < 1000; ++i) {
        const CellStats a = random_cell();
        const CellStats b = random_cell();
        const TvPair tv = tv_distances(a, b);
        // the propensity difference is dominated by the larger joint TV
        CHECK(std::max(tv.tv1, tv.tv0) >= std::fabs(a.pD1 - b.pD1) - 1e-12);
        CHECK(tv.tv1 >= std::fabs(a.pD1 - b.pD1) - 1e-12);
        // the marginal TV never exceeds the joint ones
        CHECK(tv.tv_y <= 0.5 * (tv.tv1 + tv.tv0) + 1e-12);
        CHECK(tv.tv_y <= std::max(tv.tv1, tv.tv0) + 1e-12);
        // Ura's averaged lower bound never beats the max
        CHECK(ura_pdiff_lower(tv) <= std::max(tv.tv1, tv.tv0) + 1e-12);
    }
}

TEST_CASE("propensity difference bounds") {
    const Interval a = pscore_diff_bounds(TvPair{0.0, 0.0, 0.0}, 0.3, 0.1);
    CHECK(a.lo == 0.0);
    CHECK(a.hi == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_FALSE(a.empty_set);

    const Interval b = pscore_diff_bounds(TvPair{0.3, 0.3, 0.3}, 0.3, 0.0);
    CHECK(b.lo == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(b.hi == doctest::Approx(0.3).epsilon(1e-15));

    const Interval c = pscore_diff_bounds(TvPair{0.6, 0.0, 0.3}, 0.1, 0.1);
    CHECK(c.empty_set);
}

TEST_CASE("ura comparator") {
    CHECK(ura_pdiff_lower(TvPair{0.3, 0.2, 0.0}) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(ura_pdiff_lower(TvPair{0.4, 0.4, 0.0}) == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("discrete LATE bounds: binary instrument example") {
    const CellTable t = binary_example_table();
    const DiscreteLateBounds res = late_bounds_discrete(t, 1, 1.0);
    CHECK(res.delta_yz == doctest::Approx(0.06).epsilon(1e-12));
    CHECK(res.lb_p == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(res.ub_p == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(res.late.lo == doctest::Approx(0.06).epsilon(1e-9));
    CHECK(res.late.hi == doctest::Approx(0.2).epsilon(1e-9));
    CHECK_FALSE(res.late.unbounded_hi);

    // Ura's interval is strictly wider
    const TvPair tv = tv_distances(t.cells[0], t.cells[1]);
    const double ura_lb = ura_pdiff_lower(tv);
    CHECK(ura_lb == doctest::Approx(0.25).epsilon(1e-12));
    const double ura_hi = res.delta_yz / ura_lb;
    CHECK(ura_hi == doctest::Approx(0.24).epsilon(1e-9));
    CHECK(res.late.hi < ura_hi);
    CHECK(res.late.lo >= res.delta_yz / 1.0 - 1e-12);
}

TEST_CASE("discrete LATE bounds: no-misclassification Wald point") {
    std::vector<Observation> data;
    append(data, obs_block(0.0, 1, 0.0, 20));
    append(data, obs_block(0.0, 1, 1.0, 20));
    append(data, obs_block(0.0, 0, 0.0, 30));
    append(data, obs_block(0.0, 0, 1.0, 30));
    append(data, obs_block(1.0, 1, 0.0, 20));
    append(data, obs_block(1.0, 1, 1.0, 30));
    append(data, obs_block(1.0, 0, 0.0, 25));
    append(data, obs_block(1.0, 0, 1.0, 25));
    const CellTable t = cell_stats_discrete_z(data, 50);
    const TvPair tv = tv_distances(t.cells[0], t.cells[1]);
    CHECK(tv.tv1 == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(tv.tv0 == doctest::Approx(0.1).epsilon(1e-12));
    const DiscreteLateBounds res = late_bounds_discrete(t, 1, 0.0);
    CHECK(res.late.lo == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(res.late.hi == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("discrete LATE bounds: ordering and input validation") {
    const CellTable t = binary_example_table();
    const std::vector<int> bad_order{0, 0};
    CHECK_THROWS_AS(late_bounds_discrete(t, 1, 1.0, &bad_order), std::invalid_argument);
    const std::vector<int> short_order{0};
    CHECK_THROWS_AS(late_bounds_discrete(t, 1, 1.0, &short_order), std::invalid_argument);
    CHECK_THROWS_AS(late_bounds_discrete(t, 0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(late_bounds_discrete(t, 2, 1.0), std::invalid_argument);
    // reversed explicit order flips the sign of the effect
    const std::vector<int> rev{1, 0};
    const DiscreteLateBounds res = late_bounds_discrete(t, 1, 1.0, &rev);
    CHECK(res.delta_yz == doctest::Approx(-0.06).epsilon(1e-12));
    CHECK(res.late.hi == doctest::Approx(-0.06).epsilon(1e-9));
    CHECK(res.late.lo == doctest::Approx(-0.2).epsilon(1e-9));
}

TEST_CASE("discrete LATE interval sits inside the Ura interval on random inputs") {
    std::mt19937_64 gen(23);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int bins = 5;
    auto random_table = [&]() {
        CellTable t;
        t.ybin.discrete = true;
        for (int b = 0; b < bins; ++b) t.ybin.values.push_back(b);
        for (int c = 0; c < 2; ++c) {
            CellStats cell;
            cell.z_value = c;
            cell.n_cell = 100;
            cell.joint1.resize(bins);
            cell.joint0.resize(bins);
            double tot = 0.0;
            for (int b = 0; b < bins; ++b) {
                cell.joint1[b] = unif(gen);
                cell.joint0[b] = unif(gen);
                tot += cell.joint1[b] + cell.joint0[b];
            }
            cell.pD1 = 0.0;
            cell.mean_y = 0.0;
            for (int b = 0; b < bins; ++b) {
                cell.joint1[b] /= tot;
                cell.joint0[b] /= tot;
                cell.pD1 += cell.joint1[b];
                cell.mean_y += b * (cell.joint1[b] + cell.joint0[b]);
            }
            t.cells.push_back(cell);
        }
        return t;
    };
    int strict = 0;
    for (int i = 0; i < 1000; ++i) {
        CellTable t = random_table();
        if (std::fabs(t.cells[1].mean_y - t.cells[0].mean_y) < 0.01) continue;
        const DiscreteLateBounds ours = late_bounds_discrete(t, 1, 1.0);
        if (ours.late.empty_set || ours.late.unbounded_hi || ours.late.unbounded_lo) continue;
        const TvPair tv = tv_distances(t.cells[0], t.cells[1]);
        const double ura_lb = ura_pdiff_lower(tv);
        if (ura_lb <= 1e-9) continue;
        const double dyz = ours.delta_yz;
        const double ura_lo = std::min(dyz / 1.0, dyz / ura_lb);
        const double ura_hi = std::max(dyz / 1.0, dyz / ura_lb);
        CHECK(ours.late.lo >= ura_lo - 1e-9);
        CHECK(ours.late.hi <= ura_hi + 1e-9);
        if (std::fabs(tv.tv1 - tv.tv0) > 1e-9) {
            CHECK(ours.late.width() < (ura_hi - ura_lo) - 1e-12);
            ++strict;
        }
    }
    CHECK(strict > 500);  // the strict comparison actually exercised
}

TEST_CASE("mte bounds from cells: point identification without misclassification") {
    DgpSpec spec;
    spec.misclass = {MisclassKind::CopulaDependent, 0.0, 0.0};
    spec.sync_rho();
    spec.n = 200000;
    spec.seed = 31;
    const SampleResult s = sample_dgp(spec);
    const CellTable t = cell_stats(s.obs, quantile_z_edges(s.obs, 60), 40);
    IdentConfig cfg;
    cfg.alpha_bar = 0.0;
    cfg.fd_step = 0.2;
    const Interval iv = mte_bounds_at(0.5, t, cfg);
    CHECK(iv.lo == iv.hi);
    CHECK(std::fabs(iv.lo - 2.0) < 0.75);
}

TEST_CASE("mte bounds from cells: sign identification under misclassification") {
    DgpSpec spec;
    spec.misclass = {MisclassKind::CopulaDependent, 0.3, 0.0};
    spec.sync_rho();
    spec.n = 100000;
    spec.seed = 77;
    const SampleResult s = sample_dgp(spec);
    const CellTable t = cell_stats(s.obs, quantile_z_edges(s.obs, 40), 25);
    IdentConfig cfg;
    cfg.alpha_bar = 0.4;
    cfg.fd_step = 0.25;
    for (double p : {0.4, 0.5, 0.6}) {
        const Interval iv = mte_bounds_at(p, t, cfg);
        CHECK(iv.lo == 0.0);
        CHECK(iv.hi > 0.0);
        // robust version uses a weaker denominator: interval contains the standard one
        const Interval rob = robust_mte_bounds_at(p, t, cfg);
        CHECK(rob.lo <= iv.lo + 1e-12);
        CHECK(rob.hi >= iv.hi - 1e-12);
    }
    CHECK_THROWS_AS(mte_bounds_at(0.97, t, cfg), std::runtime_error);
}

TEST_CASE("mte bounds from cells: invariance in alpha_bar above zero") {
    DgpSpec spec;
    spec.misclass = {MisclassKind::CopulaDependent, 0.3, 0.0};
    spec.sync_rho();
    spec.n = 50000;
    spec.seed = 13;
    const SampleResult s = sample_dgp(spec);
    const CellTable t = cell_stats(s.obs, quantile_z_edges(s.obs, 30), 25);
    IdentConfig lo_cfg, hi_cfg;
    lo_cfg.alpha_bar = 0.1;
    hi_cfg.alpha_bar = 1.0;
    lo_cfg.fd_step = hi_cfg.fd_step = 0.2;
    for (double p : {0.4, 0.5, 0.6}) {
        const Interval a = mte_bounds_at(p, t, lo_cfg);
        const Interval b = mte_bounds_at(p, t, hi_cfg);
        CHECK(std::fabs(a.lo - b.lo) <= 1e-12);
        CHECK(std::fabs(a.hi - b.hi) <= 1e-12);
    }
}

TEST_CASE("robust bounds: degenerate cases") {
    CellTable t;
    t.ybin.discrete = true;
    t.ybin.values = {0.0, 1.0};
    CellStats a;
    a.z_value = 0.0;
    a.n_cell = 10;
    a.pD1 = 0.4;
    a.mean_y = 0.5;
    a.joint1 = {0.2, 0.2};
    a.joint0 = {0.3, 0.3};
    CellStats b = a;
    b.z_value = 1.0;
    t.cells = {a, b};
    IdentConfig cfg;
    cfg.alpha_bar = 0.5;
    cfg.fd_step = 0.1;
    // identical cells: [0, 0]
    const Interval same = robust_mte_bounds_at(0.4, t, cfg);
    CHECK(same.lo == 0.0);
    CHECK(same.hi == 0.0);
    // tv_y = 0 but a mean shift: unbounded flag
    t.cells[1].mean_y = 0.6;
    const Interval unb = robust_mte_bounds_at(0.4, t, cfg);
    CHECK(unb.unbounded_hi);
}

TEST_CASE("sharp constraint checker: the true model passes") {
    const double alpha = 0.3;
    // p grid warped through Phi so the endpoint regions, where the implied
    // conditionals move fastest, are finely resolved
    std::vector<double> pts;
    const int nt = 6001;
    for (int i = 0; i < nt; ++i) {
        const double p = std_normal_cdf(-8.0 + 16.0 * i / (nt - 1));
        if (pts.empty() || p > pts.back()) pts.push_back(p);
    }
    const Grid pg = Grid::from_points(pts);
    const int ny = 41;
    std::vector<double> ygrid(ny);
    for (int j = 0; j < ny; ++j) ygrid[static_cast<std::size_t>(j)] = -2.0 + 12.0 * j / (ny - 1);

    SharpCandidate cand;
    cand.alpha = alpha;
    cand.p_grid = pg;
    cand.y_grid = ygrid;
    cand.dq_dp.assign(pg.size(), 1.0 - 2.0 * alpha);
    cand.kappa1.resize(pg.size());
    cand.kappa0.resize(pg.size());
    const double sd1 = std::sqrt(3.0);
    const double sd0 = std::sqrt(0.75);
    for (std::size_t i = 0; i < pg.size(); ++i) {
        const double t = std_normal_quantile(pg[i]);
        cand.kappa1[i].resize(ygrid.size());
        cand.kappa0[i].resize(ygrid.size());
        for (std::size_t j = 0; j < ygrid.size(); ++j) {
            const double g1 = std_normal_cdf((ygrid[j] - 4.0) / sd1);
            const double g0 = std_normal_cdf((ygrid[j] - 2.0 - 0.5 * t) / sd0);
            cand.kappa1[i][j] = (1.0 - alpha) * g1 - alpha * g0;
            cand.kappa0[i][j] = alpha * g1 - (1.0 - alpha) * g0;
        }
    }
    cand.pyd1_at_p1.resize(ygrid.size());
    cand.pyd1_at_p0.resize(ygrid.size());
    for (std::size_t j = 0; j < ygrid.size(); ++j) {
        cand.pyd1_at_p1[j] = (1.0 - alpha) * std_normal_cdf((ygrid[j] - 4.0) / sd1);
        cand.pyd1_at_p0[j] = alpha * std_normal_cdf(ygrid[j] - 2.0);
    }
    const SharpReport rep = sharp_constraint_residuals(cand);
    CHECK(rep.singular_ps.empty());
    CHECK(rep.max_residual() <= 1e-6);

    // constant reported propensity: the relevance conditions fail
    SharpCandidate flat = cand;
    flat.dq_dp.assign(pg.size(), 0.0);
    const SharpReport bad = sharp_constraint_residuals(flat);
    CHECK(bad.p3 > 0.1);
    CHECK(bad.p4 > 0.1);
    CHECK_FALSE(bad.singular_ps.empty());

    SharpCandidate zero_alpha = cand;
    zero_alpha.alpha = 0.0;
    CHECK_THROWS_AS(sharp_constraint_residuals(zero_alpha), std::domain_error);
}

TEST_CASE("closed-form coverage of the true MTE across mechanisms") {
    // the finite-difference ratio bounds cover the truth and match its sign
    const double alphas[] = {0.1, 0.3, 0.5, 0.7, 0.9};
    const double rhos[] = {-0.5, 0.0, 0.5};
    const Grid pg = Grid::linspace(0.05, 0.95, 21);
    for (double a : alphas)
        for (double r : rhos)
            for (std::size_t i = 0; i < pg.size(); ++i) {
                const Interval iv = closed_form_mte_bounds(pg[i], a, r, 1e-4);
                const double truth = true_mte(pg[i]);
                CHECK(iv.contains(truth, 1e-6));
                CHECK(iv.hi > 0.0);  // sign identified: the model's MTE is positive
                // one endpoint pinned at zero, the other strictly away from it
                CHECK(iv.lo <= 0.0);
                CHECK(iv.hi >= 0.0);
                if (iv.lo != 0.0 || iv.hi != 0.0) CHECK((iv.lo == 0.0) != (iv.hi == 0.0));
            }
}
