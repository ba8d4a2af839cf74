#include "mtebounds/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mte {

double logistic(double t) {
    if (t >= 0.0) {
        const double e = std::exp(-t);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(t);
    return e / (1.0 + e);
}

LogitFit fit_logit(const Eigen::MatrixXd& features, std::span<const int> labels, int max_iter,
                   double grad_tol) {
    const Eigen::Index n = features.rows();
    const Eigen::Index k = features.cols();
    if (static_cast<std::size_t>(n) != labels.size())
        throw std::invalid_argument("fit_logit: feature rows and label count differ");
    if (n == 0) throw std::invalid_argument("fit_logit: no observations");

    Eigen::VectorXd yv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int d = labels[static_cast<std::size_t>(i)];
        if (d != 0 && d != 1) throw std::invalid_argument("fit_logit: labels must be 0/1");
        yv(i) = d;
    }

    LogitFit fit;
    fit.coef = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd mu(n), grad(k);
    Eigen::MatrixXd hess(k, k);

    auto loglik = [&](const Eigen::VectorXd& beta) {
        double ll = 0.0;
        const Eigen::VectorXd eta = features * beta;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double t = eta(i);
            // log(1+exp(t)) computed stably
            const double soft = (t > 0.0) ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
            ll += yv(i) * t - soft;
        }
        return ll;
    };

    double ll_old = loglik(fit.coef);
    for (int it = 1; it <= max_iter; ++it) {
        fit.iterations = it;
        const Eigen::VectorXd eta = features * fit.coef;
        for (Eigen::Index i = 0; i < n; ++i) mu(i) = logistic(eta(i));
        grad = features.transpose() * (yv - mu);
        if (grad.norm() <= grad_tol) {
            Eigen::VectorXd wvec = mu.array() * (1.0 - mu.array());
            hess = features.transpose() * wvec.asDiagonal() * features;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
            fit.cov = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
            return fit;
        }
        Eigen::VectorXd wvec = mu.array() * (1.0 - mu.array());
        hess = features.transpose() * wvec.asDiagonal() * features;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
        if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-12) {
            hess.diagonal().array() += 1e-8 * (1.0 + hess.diagonal().maxCoeff());
            ldlt.compute(hess);
            fit.ridged = true;
        }
        Eigen::VectorXd step = ldlt.solve(grad);
        // slack scaled to the likelihood's own fp noise floor: near the
        // optimum the summed log-likelihood cannot resolve the improvement
        const double slack = 1e-9 * (1.0 + std::fabs(ll_old));
        double scale = 1.0;
        for (int half = 0; half < 30; ++half) {
            const double ll_new = loglik(fit.coef + scale * step);
            if (ll_new >= ll_old - slack) {
                fit.coef += scale * step;
                ll_old = ll_new;
                break;
            }
            scale *= 0.5;
        }
    }
    const Eigen::VectorXd eta = features * fit.coef;
    for (Eigen::Index i = 0; i < n; ++i) mu(i) = logistic(eta(i));
    grad = features.transpose() * (yv - mu);
    std::ostringstream os;
    os << "fit_logit: no convergence after " << max_iter << " iterations, gradient norm " << grad.norm();
    throw std::runtime_error(os.str());
}

namespace {

// One local weighted polynomial fit; returns the coefficient vector or empty
// on a singular design.
Eigen::VectorXd local_fit(std::span<const double> x, std::span<const double> y, double p, int degree,
                          KernelKind kernel, double h) {
    const std::size_t n = x.size();
    const Eigen::Index k = degree + 1;
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(k);
    std::size_t effective = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double u = (x[i] - p) / h;
        const double w = kernel_weight(kernel, u);
        if (w <= 0.0) continue;
        ++effective;
        double basis[8];
        basis[0] = 1.0;
        double dx = x[i] - p;
        for (int d = 1; d <= degree; ++d) basis[d] = basis[d - 1] * dx;
        for (Eigen::Index a = 0; a < k; ++a) {
            xty(a) += w * basis[a] * y[i];
            for (Eigen::Index b = a; b < k; ++b) xtx(a, b) += w * basis[a] * basis[b];
        }
    }
    if (effective < static_cast<std::size_t>(degree) + 1) return {};
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = 0; b < a; ++b) xtx(a, b) = xtx(b, a);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
    if (!lu.isInvertible()) return {};
    return lu.solve(xty);
}

std::vector<double> local_poly_coef(std::span<const double> x, std::span<const double> y,
                                    const Grid& eval, int degree, KernelKind kernel, double h,
                                    int which) {
    if (x.size() != y.size()) throw std::invalid_argument("local polynomial: x and y lengths differ");
    if (degree < 1 || degree > 7) throw std::invalid_argument("local polynomial: degree must be in [1,7]");
    if (!(h > 0.0)) throw std::invalid_argument("local polynomial: bandwidth must be positive");
    std::vector<double> out(eval.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t j = 0; j < eval.size(); ++j) {
        const Eigen::VectorXd beta = local_fit(x, y, eval[j], degree, kernel, h);
        if (beta.size() > which) out[j] = beta(which);
    }
    return out;
}

}  // namespace

std::vector<double> local_poly_deriv(std::span<const double> x, std::span<const double> y,
                                     const Grid& eval, int degree, KernelKind kernel, double h) {
    return local_poly_coef(x, y, eval, degree, kernel, h, 1);
}

std::vector<double> local_poly_value(std::span<const double> x, std::span<const double> y,
                                     const Grid& eval, int degree, KernelKind kernel, double h) {
    return local_poly_coef(x, y, eval, degree, kernel, h, 0);
}

std::vector<std::vector<double>> batch_smooth(std::span<const double> x,
                                              const std::vector<std::vector<double>>& cols,
                                              KernelKind kernel, double h, int grid_points) {
    const std::size_t n = x.size();
    const std::size_t nc = cols.size();
    for (const auto& c : cols)
        if (c.size() != n) throw std::invalid_argument("batch_smooth: column length mismatch");
    double lo = x[0], hi = x[0];
    for (double v : x) { lo = std::min(lo, v); hi = std::max(hi, v); }
    if (!(hi > lo)) throw std::invalid_argument("batch_smooth: regressor has no variation");

    const int g = std::max(grid_points, 3);
    const Grid grid = Grid::linspace(lo, hi, g);
    // local-linear normal equations per grid point, shared across columns
    std::vector<std::vector<double>> fitted(nc, std::vector<double>(static_cast<std::size_t>(g)));
    std::vector<double> sy0(nc), sy1(nc);
    for (int j = 0; j < g; ++j) {
        const double p0 = grid[static_cast<std::size_t>(j)];
        double s0 = 0.0, s1 = 0.0, s2 = 0.0;
        std::fill(sy0.begin(), sy0.end(), 0.0);
        std::fill(sy1.begin(), sy1.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double dx = x[i] - p0;
            const double w = kernel_weight(kernel, dx / h);
            if (w <= 0.0) continue;
            s0 += w;
            s1 += w * dx;
            s2 += w * dx * dx;
            for (std::size_t c = 0; c < nc; ++c) {
                sy0[c] += w * cols[c][i];
                sy1[c] += w * dx * cols[c][i];
            }
        }
        const double det = s0 * s2 - s1 * s1;
        for (std::size_t c = 0; c < nc; ++c) {
            if (std::fabs(det) > 1e-300 * std::max(1.0, s0 * s2))
                fitted[c][static_cast<std::size_t>(j)] = (s2 * sy0[c] - s1 * sy1[c]) / det;
            else if (s0 > 0.0)
                fitted[c][static_cast<std::size_t>(j)] = sy0[c] / s0;  // flat fallback
            else
                fitted[c][static_cast<std::size_t>(j)] = std::numeric_limits<double>::quiet_NaN();
        }
    }

    std::vector<std::vector<double>> out(nc, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const double t = (x[i] - lo) / (hi - lo) * (g - 1);
        const int j = std::min(static_cast<int>(t), g - 2);
        const double frac = t - j;
        for (std::size_t c = 0; c < nc; ++c) {
            double a = fitted[c][static_cast<std::size_t>(j)];
            double b = fitted[c][static_cast<std::size_t>(j) + 1];
            if (std::isnan(a)) a = b;
            if (std::isnan(b)) b = a;
            out[c][i] = a + frac * (b - a);
        }
    }
    return out;
}

PartialLinearFit robinson_fit(std::span<const double> y, const Eigen::MatrixXd& x,
                              std::span<const double> p, const IdentConfig& cfg) {
    const std::size_t n = y.size();
    if (static_cast<std::size_t>(x.rows()) != n || p.size() != n)
        throw std::invalid_argument("robinson_fit: row count mismatch");
    const Eigen::Index k = x.cols();

    std::vector<std::size_t> keep;
    keep.reserve(n);
    const double d = cfg.trim_delta;
    for (std::size_t i = 0; i < n; ++i)
        if (p[i] >= d && p[i] <= 1.0 - d) keep.push_back(i);
    if (keep.size() < static_cast<std::size_t>(2 * k + 10))
        throw std::runtime_error("robinson_fit: too few observations after trimming");

    std::vector<double> yk(keep.size()), pk(keep.size());
    Eigen::MatrixXd xk(static_cast<Eigen::Index>(keep.size()), k);
    for (std::size_t i = 0; i < keep.size(); ++i) {
        yk[i] = y[keep[i]];
        pk[i] = p[keep[i]];
        xk.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(keep[i]));
    }

    if (k == 0) {  // no covariates: the partialling-out stage is vacuous
        PartialLinearFit fit;
        fit.residual_series = yk;
        fit.p_kept = pk;
        return fit;
    }

    // residualize Y, X and XP on P in one batched pass
    std::vector<std::vector<double>> cols(1 + 2 * static_cast<std::size_t>(k));
    cols[0] = yk;
    for (Eigen::Index c = 0; c < k; ++c) {
        auto& xc = cols[1 + static_cast<std::size_t>(c)];
        auto& xpc = cols[1 + static_cast<std::size_t>(k + c)];
        xc.resize(keep.size());
        xpc.resize(keep.size());
        for (std::size_t i = 0; i < keep.size(); ++i) {
            xc[i] = xk(static_cast<Eigen::Index>(i), c);
            xpc[i] = xc[i] * pk[i];
        }
    }
    const auto smoothed = batch_smooth(pk, cols, cfg.kernel, cfg.bandwidth);

    Eigen::VectorXd ry(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i)
        ry(static_cast<Eigen::Index>(i)) = yk[i] - smoothed[0][i];
    Eigen::MatrixXd design(static_cast<Eigen::Index>(keep.size()), 2 * k);
    for (Eigen::Index c = 0; c < 2 * k; ++c)
        for (std::size_t i = 0; i < keep.size(); ++i)
            design(static_cast<Eigen::Index>(i), c) =
                cols[1 + static_cast<std::size_t>(c)][i] - smoothed[1 + static_cast<std::size_t>(c)][i];

    // residualizing wipes out any column that is a function of P alone; catch
    // that against the scale of the unresidualized data, not just relatively
    Eigen::MatrixXd dtd = design.transpose() * design;
    const double data_scale = static_cast<double>(keep.size()) *
                              std::max(1.0, xk.array().abs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dtd);
    if (es.eigenvalues().minCoeff() <= 1e-10 * data_scale)
        throw std::runtime_error("robinson_fit: residualized regressors are collinear");
    const Eigen::VectorXd coefs = dtd.ldlt().solve(design.transpose() * ry);

    PartialLinearFit fit;
    fit.beta0 = coefs.head(k);
    fit.beta_diff = coefs.tail(k);
    fit.residual_series.resize(keep.size());
    fit.p_kept = pk;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        const Eigen::Index ii = static_cast<Eigen::Index>(i);
        const double structural = xk.row(ii).dot(fit.beta0) + pk[i] * xk.row(ii).dot(fit.beta_diff);
        fit.residual_series[i] = yk[i] - structural;
    }
    return fit;
}

std::vector<double> mte_curve_from_fit(const PartialLinearFit& fit, const Eigen::RowVectorXd& xbar,
                                       const Grid& p_grid, KernelKind kernel, double h) {
    std::vector<double> deriv =
        local_poly_deriv(fit.p_kept, fit.residual_series, p_grid, 2, kernel, h);
    const double shift = (xbar.size() > 0) ? xbar.dot(fit.beta_diff) : 0.0;
    for (auto& v : deriv)
        if (!std::isnan(v)) v += shift;
    return deriv;
}

namespace {

double ecdf_at(std::span<const double> sorted, double t) {
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), t);
    return static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size());
}

}  // namespace

WeightFn aggregate_weight_fn(const AggregateKind& kind, std::span<const double> pscore_sample,
                             const Grid& p_grid) {
    kind.validate();
    const std::size_t m = p_grid.size();
    WeightFn wf;
    wf.kind = kind;
    wf.w.assign(m, 0.0);

    const bool needs_sample = kind.tag == AggregateKind::Tag::ATT ||
                              kind.tag == AggregateKind::Tag::ATU ||
                              kind.tag == AggregateKind::Tag::PRTE ||
                              kind.tag == AggregateKind::Tag::AMTE;
    std::vector<double> sorted;
    if (needs_sample) {
        if (pscore_sample.empty())
            throw std::invalid_argument("aggregate_weight_fn: pscore sample required for " + kind.name());
        sorted.assign(pscore_sample.begin(), pscore_sample.end());
        std::sort(sorted.begin(), sorted.end());
        if ((kind.tag == AggregateKind::Tag::ATT || kind.tag == AggregateKind::Tag::ATU) &&
            sorted.front() == sorted.back())
            throw std::invalid_argument("aggregate_weight_fn: degenerate propensity sample");
    }

    switch (kind.tag) {
        case AggregateKind::Tag::ATE:
            std::fill(wf.w.begin(), wf.w.end(), 1.0);
            break;
        case AggregateKind::Tag::ATT:
            for (std::size_t i = 0; i < m; ++i) wf.w[i] = 1.0 - ecdf_at(sorted, p_grid[i]);
            break;
        case AggregateKind::Tag::ATU:
            for (std::size_t i = 0; i < m; ++i) wf.w[i] = ecdf_at(sorted, p_grid[i]);
            break;
        case AggregateKind::Tag::LATE: {
            const double height = 1.0 / (kind.p_hi - kind.p_lo);
            for (std::size_t i = 0; i < m; ++i) {
                const double p = p_grid[i];
                if (p > kind.p_lo && p < kind.p_hi) wf.w[i] = height;
                else if (p == kind.p_lo || p == kind.p_hi) wf.w[i] = 0.5 * height;  // jump midpoint
            }
            break;
        }
        case AggregateKind::Tag::PRTE: {
            std::vector<double> shifted(sorted.size());
            for (std::size_t i = 0; i < sorted.size(); ++i)
                shifted[i] = sorted[i] + kind.a * (1.0 - sorted[i]);
            std::sort(shifted.begin(), shifted.end());
            for (std::size_t i = 0; i < m; ++i)
                wf.w[i] = std::max(0.0, ecdf_at(sorted, p_grid[i]) - ecdf_at(shifted, p_grid[i]));
            break;
        }
        case AggregateKind::Tag::AMTE: {
            for (std::size_t i = 0; i < m; ++i) {
                const double p = p_grid[i];
                double count = 0.0;
                for (double q : sorted)
                    if (std::fabs(q - p) < kind.zeta) count += 1.0;
                wf.w[i] = count / static_cast<double>(sorted.size());
            }
            break;
        }
    }

    const double total = trapezoid_integral(p_grid, wf.w);
    if (!(total > 0.0))
        throw std::invalid_argument("aggregate_weight_fn: weights vanish on the grid for " + kind.name());
    if (kind.tag != AggregateKind::Tag::LATE)  // LATE is exact by construction
        for (auto& v : wf.w) v /= total;
    else if (std::fabs(total - 1.0) > 1e-9)
        for (auto& v : wf.w) v /= total;
    return wf;
}

double aggregate_mte(std::span<const double> mte_curve, const WeightFn& w, const Grid& p_grid) {
    if (mte_curve.size() != p_grid.size() || w.w.size() != p_grid.size())
        throw std::invalid_argument("aggregate_mte: grid mismatch");
    std::vector<double> prod(p_grid.size());
    for (std::size_t i = 0; i < p_grid.size(); ++i) prod[i] = mte_curve[i] * w.w[i];
    return trapezoid_integral(p_grid, prod);
}

double amte(std::span<const double> mte_curve, const Grid& p_grid,
            std::span<const double> pscore_sample, double zeta) {
    AggregateKind kind;
    kind.tag = AggregateKind::Tag::AMTE;
    kind.zeta = zeta;
    const WeightFn wf = aggregate_weight_fn(kind, pscore_sample, p_grid);
    return aggregate_mte(mte_curve, wf, p_grid);
}

double empirical_quantile(std::vector<double> draws, double q) {
    if (draws.empty()) throw std::invalid_argument("empirical_quantile: no draws");
    std::sort(draws.begin(), draws.end());
    if (draws.size() == 1) return draws[0];
    const double t = q * static_cast<double>(draws.size() - 1);
    const std::size_t j = std::min(static_cast<std::size_t>(t), draws.size() - 2);
    const double frac = t - static_cast<double>(j);
    return draws[j] + frac * (draws[j + 1] - draws[j]);
}

namespace {

std::vector<Observation> resample(std::span<const Observation> data, Xoshiro256pp& rng) {
    std::vector<Observation> out;
    out.reserve(data.size());
    const std::uint64_t n = data.size();
    for (std::uint64_t i = 0; i < n; ++i) {
        const std::uint64_t j = rng.next() % n;
        out.push_back(data[static_cast<std::size_t>(j)]);
    }
    return out;
}

}  // namespace

BootstrapScalar bootstrap_ci(const ScalarStatistic& statistic, std::span<const Observation> data,
                             int B, double level, std::uint64_t seed) {
    if (B < 2) throw std::invalid_argument("bootstrap_ci: B must be at least 2");
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("bootstrap_ci: level must be in (0,1)");
    BootstrapScalar out;
    for (int b = 0; b < B; ++b) {
        Xoshiro256pp rng = Xoshiro256pp::substream(seed, static_cast<std::uint64_t>(b));
        const std::vector<Observation> sample = resample(data, rng);
        double v;
        try {
            v = statistic(sample, seed + static_cast<std::uint64_t>(b));
        } catch (const std::exception&) {
            ++out.failures;
            continue;
        }
        if (std::isnan(v)) {
            ++out.failures;
            continue;
        }
        out.draws.push_back(v);
    }
    if (out.draws.size() < 2) throw std::runtime_error("bootstrap_ci: too many replicate failures");
    const double tail = (1.0 - level) / 2.0;
    out.lo = empirical_quantile(out.draws, tail);
    out.hi = empirical_quantile(out.draws, 1.0 - tail);
    return out;
}

BootstrapCurve bootstrap_ci_curve(const CurveStatistic& statistic, std::span<const Observation> data,
                                  int B, double level, std::uint64_t seed, std::size_t curve_len) {
    if (B < 2) throw std::invalid_argument("bootstrap_ci_curve: B must be at least 2");
    if (!(level > 0.0 && level < 1.0))
        throw std::invalid_argument("bootstrap_ci_curve: level must be in (0,1)");
    std::vector<std::vector<double>> draws;  // [replicate][grid]
    BootstrapCurve out;
    for (int b = 0; b < B; ++b) {
        Xoshiro256pp rng = Xoshiro256pp::substream(seed, static_cast<std::uint64_t>(b));
        const std::vector<Observation> sample = resample(data, rng);
        std::vector<double> v;
        try {
            v = statistic(sample, seed + static_cast<std::uint64_t>(b));
        } catch (const std::exception&) {
            ++out.failures;
            continue;
        }
        if (v.size() != curve_len) {
            ++out.failures;
            continue;
        }
        draws.push_back(std::move(v));
    }
    if (draws.size() < 2) throw std::runtime_error("bootstrap_ci_curve: too many replicate failures");
    const double tail = (1.0 - level) / 2.0;
    out.lo.resize(curve_len);
    out.hi.resize(curve_len);
    std::vector<double> column;
    for (std::size_t j = 0; j < curve_len; ++j) {
        column.clear();
        for (const auto& row : draws)
            if (!std::isnan(row[j])) column.push_back(row[j]);
        if (column.empty()) {
            out.lo[j] = out.hi[j] = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        out.lo[j] = empirical_quantile(column, tail);
        out.hi[j] = empirical_quantile(column, 1.0 - tail);
    }
    return out;
}

Band union_confidence_region(const std::vector<Band>& bands_per_alpha) {
    if (bands_per_alpha.empty()) throw std::invalid_argument("union_confidence_region: no bands");
    const std::size_t m = bands_per_alpha.front().lo.size();
    for (const auto& b : bands_per_alpha)
        if (b.lo.size() != m || b.hi.size() != m)
            throw std::invalid_argument("union_confidence_region: band grid mismatch");
    Band out;
    out.lo.assign(m, std::numeric_limits<double>::quiet_NaN());
    out.hi.assign(m, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t j = 0; j < m; ++j) {
        for (const auto& b : bands_per_alpha) {
            if (!std::isnan(b.lo[j]) && (std::isnan(out.lo[j]) || b.lo[j] < out.lo[j])) out.lo[j] = b.lo[j];
            if (!std::isnan(b.hi[j]) && (std::isnan(out.hi[j]) || b.hi[j] > out.hi[j])) out.hi[j] = b.hi[j];
        }
    }
    return out;
}

}  // namespace mte
