#include "mtebounds/symmetric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mte {

namespace {
constexpr double kHalfGuard = 1e-6;  // the half point is excluded analytically
}

std::vector<double> alpha_identified_set(std::span<const double> q_values, double alpha_bar,
                                         int grid_size) {
    if (q_values.empty()) throw std::invalid_argument("alpha_identified_set: no q values");
    if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0))
        throw std::domain_error("alpha_identified_set: alpha_bar must be in [0,1]");
    if (grid_size < 1) throw std::invalid_argument("alpha_identified_set: grid_size must be >= 1");

    double qmin = q_values[0], qmax = q_values[0];
    for (double q : q_values) {
        if (!(q >= 0.0 && q <= 1.0)) throw std::domain_error("alpha_identified_set: q outside [0,1]");
        qmin = std::min(qmin, q);
        qmax = std::max(qmax, q);
    }
    const double top = std::min(alpha_bar, 0.5 - kHalfGuard);
    std::vector<double> feasible;
    const int n = (top == 0.0) ? 1 : std::max(grid_size, 1);
    for (int i = 0; i < n; ++i) {
        const double a = (n == 1) ? 0.0 : top * static_cast<double>(i) / static_cast<double>(n - 1);
        // for a < 1/2 the inversion lies in [0,1] for all q iff a <= q and a <= 1-q
        if (a <= qmin + 1e-12 && a <= 1.0 - qmax + 1e-12) feasible.push_back(a);
    }
    return feasible;
}

double true_pscore_from_alpha(double q, double alpha) {
    if (!(q >= 0.0 && q <= 1.0)) throw std::domain_error("true_pscore_from_alpha: q must be in [0,1]");
    if (std::fabs(1.0 - 2.0 * alpha) < 1e-12)
        throw std::domain_error("true_pscore_from_alpha: alpha = 1/2 is singular");
    const double p = (q - alpha) / (1.0 - 2.0 * alpha);
    if (p < -1e-12 || p > 1.0 + 1e-12)
        throw std::domain_error("true_pscore_from_alpha: inversion leaves [0,1] (alpha infeasible for q=" +
                                std::to_string(q) + ")");
    return std::clamp(p, 0.0, 1.0);
}

double mte_symmetric(double p, double alpha, const LivFn& liv) {
    if (std::fabs(1.0 - 2.0 * alpha) < 1e-12)
        throw std::domain_error("mte_symmetric: alpha = 1/2 is singular");
    const double scale = 1.0 - 2.0 * alpha;
    return scale * liv(scale * p + alpha);
}

BoundCurve symmetric_family_curve(const Grid& p_grid, std::span<const double> alpha_grid,
                                  const LivFn& liv) {
    if (alpha_grid.empty()) throw std::invalid_argument("symmetric_family_curve: empty alpha grid");
    BoundCurve curve;
    curve.at = p_grid;
    curve.intervals.resize(p_grid.size());
    for (std::size_t i = 0; i < p_grid.size(); ++i) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        int defined = 0;
        for (double a : alpha_grid) {
            double m;
            try {
                m = mte_symmetric(p_grid[i], a, liv);
            } catch (const std::domain_error&) {
                continue;
            }
            if (std::isnan(m)) continue;
            lo = std::min(lo, m);
            hi = std::max(hi, m);
            ++defined;
        }
        Interval& iv = curve.intervals[i];
        if (defined == 0) {
            iv.empty_set = true;
            iv.binding_lo = iv.binding_hi = "no alpha in support";
        } else {
            iv.lo = lo;
            iv.hi = hi;
            iv.binding_lo = "min over alpha grid";
            iv.binding_hi = "max over alpha grid";
        }
    }
    return curve;
}

}  // namespace mte
