#pragma once

#include <span>
#include <string>
#include <vector>

#include "mtebounds/types.hpp"

namespace mte {

// Common outcome binning across cells: either the sorted distinct values of a
// discrete outcome (counting measure) or equal-width bin edges.
struct YBinning {
    bool discrete = false;
    std::vector<double> values;  // discrete: the values; continuous: bin edges (size = bins + 1)
    std::size_t bins() const { return discrete ? values.size() : values.size() - 1; }
    std::size_t bin_of(double y) const;
};

// Empirical summary of one instrument cell: the reported propensity, the cell
// mean of Y, and the joint histogram of (Y, D) against the shared binning.
struct CellStats {
    double z_value = 0.0;
    int n_cell = 0;
    double pD1 = 0.0;
    double mean_y = 0.0;
    std::vector<double> joint1;  // masses of f(y, D=1 | cell)
    std::vector<double> joint0;  // masses of f(y, D=0 | cell)
};

struct CellTable {
    YBinning ybin;
    std::vector<CellStats> cells;
};

struct TvPair {
    double tv1 = 0.0;   // TV over the reported-treated joint
    double tv0 = 0.0;   // TV over the reported-control joint
    double tv_y = 0.0;  // half the TV of the outcome marginal
};

// Builds cells from continuous Z binned at the given edges. Throws when a cell
// is empty, naming the offending cell.
CellTable cell_stats(std::span<const Observation> data, const std::vector<double>& z_edges, int y_bins);

// Exact-level cells for a discrete instrument.
CellTable cell_stats_discrete_z(std::span<const Observation> data, int y_bins);

// Equal-count edges: k cells, each holding ~n/k observations.
std::vector<double> quantile_z_edges(std::span<const Observation> data, int k);

// Pointwise propensity bounds at reported propensity q under misclassification
// rate at most alpha_bar. Closed form over the alpha range.
Interval pointwise_pscore_bounds(double q, double alpha_bar);

TvPair tv_distances(const CellStats& a, const CellStats& b);

// Bounds on P(z) - P(z') for one alpha: [max{tv1,tv0}, min{1, 2a+D, 2(1-a)-D}].
// LB > UB is a reported empty state (the alpha is incompatible with the data).
Interval pscore_diff_bounds(const TvPair& tv, double delta_dz, double alpha);

// Interval for MTE(p_eval) from a finite-difference pair of cells bracketing
// p_eval at separation fd_step. alpha_bar = 0 collapses to the point ratio
// Delta_YZ / Delta_DZ.
Interval mte_bounds_at(double p_eval, const CellTable& table, const IdentConfig& cfg);

// Same with the outcome-marginal TV in the denominator; valid without
// independence between the instrument and the misclassification indicator.
Interval robust_mte_bounds_at(double p_eval, const CellTable& table, const IdentConfig& cfg);

struct DiscreteLateBounds {
    Interval late;        // union over the alpha grid on [0, alpha_bar]
    double lb_p = 0.0;    // widest-case propensity-difference bounds backing it
    double ub_p = 0.0;
    double delta_yz = 0.0;
};

// LATE(p_{ell-1}, p_ell) bounds for a discrete instrument with K >= 2 cells
// ordered by true-propensity rank. ell indexes the upper cell of the pair
// (1-based pair index in [1, K-1]). order, when given, re-ranks the cells and
// must be a permutation of 0..K-1.
DiscreteLateBounds late_bounds_discrete(const CellTable& table, int ell, double alpha_bar,
                                        const std::vector<int>* order = nullptr);

// Ura's lower bound on the propensity difference: (tv1 + tv0) / 2.
double ura_pdiff_lower(const TvPair& tv);

// The (P1)-(P9) feasibility checker. A candidate supplies the derivative of
// the observed propensity in p, the joint-CDF derivatives kappa0/kappa1 on a
// (p, y) lattice, and the two terminal joint CDFs.
struct SharpCandidate {
    double alpha = 0.0;           // in (0,1)
    Grid p_grid = Grid::linspace(0.0, 1.0, 2);
    std::vector<double> dq_dp;    // d P(D=1 | P(Z)=p) / dp on p_grid
    std::vector<double> y_grid;
    std::vector<std::vector<double>> kappa1;  // [p][y]
    std::vector<std::vector<double>> kappa0;  // [p][y]
    std::vector<double> pyd1_at_p1;           // P(Y<=y, D=1 | P(Z)=1) per y
    std::vector<double> pyd1_at_p0;           // P(Y<=y, D=1 | P(Z)=0) per y
    double index_sufficiency_discrepancy = 0.0;
};

struct SharpReport {
    double p1 = 0.0, p2 = 0.0;  // density nonnegativity, worst violation
    double p3 = 0.0, p4 = 0.0;  // integrate-to-one residual
    double p5 = 0.0, p6 = 0.0;  // implied outcome probabilities outside [0,1]
    double p7 = 0.0;            // index sufficiency discrepancy
    double p8 = 0.0, p9 = 0.0;  // terminal conditions
    std::vector<double> singular_ps;  // p where the implied system is singular

    double max_residual() const;
    bool feasible(double tol) const { return max_residual() <= tol; }
};

SharpReport sharp_constraint_residuals(const SharpCandidate& cand);

}  // namespace mte
