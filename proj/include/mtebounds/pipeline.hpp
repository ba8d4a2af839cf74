#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtebounds/bounds.hpp"
#include "mtebounds/estimate.hpp"
#include "mtebounds/symmetric.hpp"
#include "mtebounds/types.hpp"

namespace mte {

// Kernel-regression estimate of the observed propensity q(z) = P(D=1|Z=z)
// on a z grid, with a k-nearest-neighbor floor on the bandwidth so the tails
// stay estimable. Per-row values come from linear interpolation on the grid.
struct PscoreEstimate {
    std::vector<double> z_grid;
    std::vector<double> q_grid;
    std::vector<double> q_row;   // aligned with the input rows
    double inf_q = 0.0;
    double sup_q = 1.0;
    double alpha_cap = 0.5;      // min(inf q, 1 - sup q): the symmetric feasibility cap
};
PscoreEstimate estimate_observed_pscore(std::span<const Observation> data, KernelKind kernel,
                                        double bandwidth, int grid_points = 201, int knn_floor = 400);

// LIV estimand on a fine grid of the observed propensity plus an interpolator.
struct LivEstimate {
    Grid q_grid = Grid::linspace(0.0, 1.0, 2);
    std::vector<double> liv;
    double q_lo = 0.0, q_hi = 1.0;  // evaluable support
    double at(double q) const;      // NaN outside [q_lo, q_hi]
};
LivEstimate estimate_liv(std::span<const double> q_rows, std::span<const double> y_rows,
                         KernelKind kernel, double bandwidth, int grid_points = 201);

struct SymmetricIdentify {
    Grid p_grid = Grid::linspace(0.0, 1.0, 2);
    std::vector<double> alpha_grid;
    std::vector<std::vector<double>> curves;  // [alpha][p], NaN where not evaluable
    BoundCurve envelope;                      // union over the alpha grid
    std::vector<double> feasible_alphas;      // alpha_identified_set on the estimated q
    PscoreEstimate pscore;
    std::optional<Band> region;               // union of bootstrap bands, when requested
};

// Bootstrap 0 keeps the point-estimate envelope only; with B >= 2 the result
// also carries the union over the alpha grid of per-alpha percentile bands.
SymmetricIdentify identify_symmetric(std::span<const Observation> data, const IdentConfig& cfg,
                                     int bootstrap_b = 0, double level = 0.95,
                                     std::uint64_t seed = 0, int threads = 1);

// Prop-2 (or outcome-marginal robust) bound curve on the config's p grid,
// with the naive LIV column attached. Grid points without support come back
// as empty intervals tagged "insufficient support".
BoundCurve identify_bounds(std::span<const Observation> data, const IdentConfig& cfg, bool robust);

struct DiscreteLateRow {
    int pair = 0;          // 1-based adjacent pair index by propensity rank
    double z_lo = 0.0, z_hi = 0.0;
    DiscreteLateBounds ours;
    double ura_lb = 0.0;   // Ura's lower bound on the propensity difference
    Interval ura;          // implied LATE interval from it
};
std::vector<DiscreteLateRow> identify_discrete_late(std::span<const Observation> data,
                                                    const IdentConfig& cfg);

struct EstimateOptions {
    double alpha_bar = 0.139;
    int alpha_grid_size = 15;
    double bandwidth = 0.27;
    KernelKind kernel = KernelKind::Gaussian;
    double trim_delta = 0.0001;
    Grid p_grid = Grid::linspace(0.02, 0.98, 49);
    std::vector<AggregateKind> aggregates;
    int bootstrap_b = 250;
    double level = 0.95;
    std::uint64_t seed = 0;
    int threads = 1;
};

struct AggregateBoundsRow {
    AggregateKind kind;
    double lb = 0.0, ub = 0.0;       // min/max over the alpha grid
    double ci_lb = 0.0, ci_ub = 0.0; // bootstrap percentile CI of the bounds
    std::vector<double> per_alpha;   // point estimate per alpha
};

struct EstimateReport {
    std::vector<double> alpha_grid;
    Grid p_grid = Grid::linspace(0.0, 1.0, 2);
    std::vector<std::vector<double>> curves;      // [alpha][p] point estimates
    std::vector<Band> bands;                      // per-alpha bootstrap bands
    Band union_band;                              // union over the alpha grid
    std::vector<AggregateBoundsRow> aggregates;
    int bootstrap_failures = 0;
    int bootstrap_total = 0;
    std::size_t n_rows = 0;
};

EstimateReport run_estimate_pipeline(std::span<const Observation> data, const EstimateOptions& opt);

}  // namespace mte
