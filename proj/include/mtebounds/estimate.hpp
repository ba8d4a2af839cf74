#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mtebounds/types.hpp"

namespace mte {

// Logistic MLE by Newton-Raphson with step halving. Throws on non-convergence
// (message carries the final gradient norm); near-singular Hessians fall back
// to a small ridge and set the warning flag.
struct LogitFit {
    Eigen::VectorXd coef;
    Eigen::MatrixXd cov;   // inverse Hessian at the optimum
    int iterations = 0;
    bool ridged = false;
};
LogitFit fit_logit(const Eigen::MatrixXd& features, std::span<const int> labels,
                   int max_iter = 100, double grad_tol = 1e-8);

double logistic(double t);

// Local polynomial first-derivative estimates at the eval points: weighted
// least squares of y on (x-p), ..., (x-p)^degree with kernel weights. Points
// with a singular local design come back as NaN.
std::vector<double> local_poly_deriv(std::span<const double> x, std::span<const double> y,
                                     const Grid& eval, int degree, KernelKind kernel, double h);

// Same machinery, returning the local fit value (the intercept).
std::vector<double> local_poly_value(std::span<const double> x, std::span<const double> y,
                                     const Grid& eval, int degree, KernelKind kernel, double h);

// Local-linear fitted values for several response columns sharing one
// regressor, through a fine grid and linear interpolation back to the rows.
// The kernel weights are computed once per grid point. Returns [col][row].
std::vector<std::vector<double>> batch_smooth(std::span<const double> x,
                                              const std::vector<std::vector<double>>& cols,
                                              KernelKind kernel, double h, int grid_points = 201);

struct PartialLinearFit {
    Eigen::VectorXd beta0;
    Eigen::VectorXd beta_diff;          // beta1 - beta0
    std::vector<double> residual_series;  // R = Y - [X b0 + P X (b1-b0)] on the kept rows
    std::vector<double> p_kept;            // propensities for the kept (untrimmed) rows
    std::string control_function_tag = "K(P) absorbed by the nonparametric stage";
};

// Robinson partialling-out for the partially linear outcome model. Rows with
// p outside [trim, 1-trim] are dropped before fitting.
PartialLinearFit robinson_fit(std::span<const double> y, const Eigen::MatrixXd& x,
                              std::span<const double> p, const IdentConfig& cfg);

// MTE curve at mean covariates from a Robinson fit: local-quadratic derivative
// of the residual series on P, plus xbar' (beta1 - beta0).
std::vector<double> mte_curve_from_fit(const PartialLinearFit& fit, const Eigen::RowVectorXd& xbar,
                                       const Grid& p_grid, KernelKind kernel, double h);

struct WeightFn {
    AggregateKind kind;
    std::vector<double> w;  // aligned with the p grid, trapezoid-normalized to 1
};

WeightFn aggregate_weight_fn(const AggregateKind& kind, std::span<const double> pscore_sample,
                             const Grid& p_grid);

double aggregate_mte(std::span<const double> mte_curve, const WeightFn& w, const Grid& p_grid);

// Average MTE over individuals with |P - p| < zeta, weights from the sample.
double amte(std::span<const double> mte_curve, const Grid& p_grid,
            std::span<const double> pscore_sample, double zeta);

using ScalarStatistic = std::function<double(const std::vector<Observation>&, std::uint64_t)>;
using CurveStatistic = std::function<std::vector<double>(const std::vector<Observation>&, std::uint64_t)>;

struct BootstrapScalar {
    double lo = 0.0, hi = 0.0;
    int failures = 0;
    std::vector<double> draws;
};
struct BootstrapCurve {
    std::vector<double> lo, hi;
    int failures = 0;
};

// Nonparametric iid row resampling; percentile interval at (1-level)/2 and
// 1-(1-level)/2 of the replicate draws, deterministic given the seed.
BootstrapScalar bootstrap_ci(const ScalarStatistic& statistic, std::span<const Observation> data,
                             int B, double level, std::uint64_t seed);
BootstrapCurve bootstrap_ci_curve(const CurveStatistic& statistic, std::span<const Observation> data,
                                  int B, double level, std::uint64_t seed, std::size_t curve_len);

// Union over the alpha grid of per-alpha confidence bands: per grid point,
// [min of lower bands, max of upper bands], NaN entries skipped.
struct Band {
    std::vector<double> lo, hi;
};
Band union_confidence_region(const std::vector<Band>& bands_per_alpha);

double empirical_quantile(std::vector<double> draws, double q);

}  // namespace mte
