#include "mtebounds/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>

#include <Eigen/Dense>

namespace mte {

namespace {

Eigen::Matrix<double, 5, 5> cholesky_of(const DgpSpec& spec) {
    Eigen::Matrix<double, 5, 5> sigma;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) sigma(i, j) = spec.cov[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    Eigen::LLT<Eigen::Matrix<double, 5, 5>> llt(sigma);
    // semidefinite boundary cases need a diagonal nudge
    for (double bump : {1e-12, 1e-10, 1e-8}) {
        if (llt.info() == Eigen::Success) break;
        llt.compute(Eigen::Matrix<double, 5, 5>(sigma + bump * Eigen::Matrix<double, 5, 5>::Identity()));
    }
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("dgp.cov is not positive semidefinite");
    return llt.matrixL();
}

void sample_block(const DgpSpec& spec, const Eigen::Matrix<double, 5, 5>& chol, std::uint64_t block_index,
                  std::int64_t row0, std::int64_t row1, SampleResult& out) {
    Xoshiro256pp rng = Xoshiro256pp::substream(spec.seed, block_index);
    const double alpha = spec.misclass.alpha;
    Eigen::Matrix<double, 5, 1> zdraw, latent;
    for (std::int64_t i = row0; i < row1; ++i) {
        for (int k = 0; k < 5; ++k) zdraw(k) = rng.normal();
        latent = chol * zdraw;
        const double beta = spec.mean[0] + latent(0);
        const double u = spec.mean[1] + latent(1);
        const double vstar = spec.mean[2] + latent(2);
        const double xistar = spec.mean[3] + latent(3);
        const double z = spec.mean[4] + latent(4);

        const double v = std_normal_cdf(vstar);
        const double xi = std_normal_cdf(xistar);
        const double pz = spec.pscore(z);
        const int dstar = (v <= pz) ? 1 : 0;
        int eps = 0;
        switch (spec.misclass.kind) {
            case MisclassKind::CopulaDependent: eps = (xi <= alpha) ? 1 : 0; break;
            case MisclassKind::ThresholdLow:    eps = (v <= alpha) ? 1 : 0; break;
            case MisclassKind::ThresholdHigh:   eps = (v > 1.0 - alpha) ? 1 : 0; break;
        }
        const int d = dstar * (1 - eps) + (1 - dstar) * eps;
        const double y = beta * dstar + u;

        auto& ob = out.obs[static_cast<std::size_t>(i)];
        ob.y = y;
        ob.d = d;
        ob.z = z;
        auto& lat = out.latent[static_cast<std::size_t>(i)];
        lat.y0 = u;
        lat.y1 = beta + u;
        lat.v = v;
        lat.dstar = dstar;
        lat.eps = eps;
        lat.beta = beta;
        lat.u = u;
        lat.xi = xi;
    }
}

}  // namespace

SampleResult sample_dgp(const DgpSpec& spec, int threads) {
    spec.validate();
    const Eigen::Matrix<double, 5, 5> chol = cholesky_of(spec);

    SampleResult out;
    out.obs.resize(static_cast<std::size_t>(spec.n));
    out.latent.resize(static_cast<std::size_t>(spec.n));

    constexpr std::int64_t kBlock = 8192;
    const std::int64_t nblocks = (spec.n + kBlock - 1) / kBlock;

    auto run_blocks = [&](std::int64_t b0, std::int64_t b1) {
        for (std::int64_t b = b0; b < b1; ++b) {
            const std::int64_t r0 = b * kBlock;
            const std::int64_t r1 = std::min(spec.n, r0 + kBlock);
            sample_block(spec, chol, static_cast<std::uint64_t>(b), r0, r1, out);
        }
    };

    if (threads <= 1 || nblocks == 1) {
        run_blocks(0, nblocks);
    } else {
        const int nt = std::min<std::int64_t>(threads, nblocks);
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(nt));
        for (int t = 0; t < nt; ++t) {
            const std::int64_t b0 = nblocks * t / nt;
            const std::int64_t b1 = nblocks * (t + 1) / nt;
            pool.emplace_back(run_blocks, b0, b1);
        }
        for (auto& th : pool) th.join();
    }
    return out;
}

double true_mte(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("true_mte: p must be in (0,1), got " + std::to_string(p));
    return -0.5 * std_normal_quantile(p) + 2.0;
}

double observed_pscore(double p_true, const MisclassSpec& mis) {
    if (!(p_true >= 0.0 && p_true <= 1.0))
        throw std::domain_error("observed_pscore: p_true must be in [0,1]");
    mis.validate();
    const double a = mis.alpha;
    if (a == 0.0) return p_true;
    switch (mis.kind) {
        case MisclassKind::CopulaDependent:
            return p_true + a - 2.0 * gaussian_copula(p_true, a, mis.rho);
        case MisclassKind::ThresholdLow:
            return std::fabs(p_true - a);
        case MisclassKind::ThresholdHigh:
            return (p_true <= 1.0 - a) ? p_true + a : 2.0 - a - p_true;
    }
    return p_true;
}

double cond_cdf_v_given_eps(const MisclassSpec& mis, double p, int e) {
    if (!(p >= 0.0 && p <= 1.0))
        throw std::domain_error("cond_cdf_v_given_eps: p must be in [0,1]");
    if (e != 0 && e != 1) throw std::domain_error("cond_cdf_v_given_eps: e must be 0 or 1");
    mis.validate();
    const double a = mis.alpha;
    if (e == 1 && a <= 0.0)
        throw std::domain_error("cond_cdf_v_given_eps: P(eps=1) = 0, conditional undefined");
    if (e == 0 && a >= 1.0)
        throw std::domain_error("cond_cdf_v_given_eps: P(eps=0) = 0, conditional undefined");
    switch (mis.kind) {
        case MisclassKind::CopulaDependent: {
            const double c = gaussian_copula(p, a, mis.rho);
            return (e == 1) ? c / a : (p - c) / (1.0 - a);
        }
        case MisclassKind::ThresholdLow:
            return (e == 1) ? std::min(p / a, 1.0) : (p - std::min(p, a)) / (1.0 - a);
        case MisclassKind::ThresholdHigh:
            return (e == 1) ? std::max(0.0, 1.0 - (1.0 - p) / a) : std::min(p / (1.0 - a), 1.0);
    }
    return p;
}

double true_liv_rho0(double p_obs, double alpha) {
    if (!(alpha >= 0.0 && alpha < 0.5))
        throw std::domain_error("true_liv_rho0: alpha must be in [0, 1/2)");
    if (!(p_obs > alpha && p_obs < 1.0 - alpha))
        throw std::domain_error("true_liv_rho0: p_obs must be in (alpha, 1-alpha)");
    const double scale = 1.0 - 2.0 * alpha;
    return true_mte((p_obs - alpha) / scale) / scale;
}

double observed_pscore_deriv(double p, double alpha, double rho) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("observed_pscore_deriv: p must be in (0,1)");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("observed_pscore_deriv: alpha must be in (0,1)");
    if (!(rho > -1.0 && rho < 1.0)) throw std::domain_error("observed_pscore_deriv: rho must be in (-1,1)");
    const double w = (std_normal_quantile(alpha) - rho * std_normal_quantile(p)) / std::sqrt(1.0 - rho * rho);
    return 1.0 - 2.0 * std_normal_cdf(w);
}

double mte_upper_limit_oracle(double p, double alpha, double rho) {
    const double slope = observed_pscore_deriv(p, alpha, rho);
    if (std::fabs(slope) < 1e-12)
        throw std::domain_error("mte_upper_limit_oracle: limit does not exist at this (p, alpha, rho)");
    return true_mte(p) / std::fabs(slope);
}

double delta_yz_closed_form(double p1, double p2) {
    // integral of -0.5*PhiInv(v) + 2 over [p1, p2]; PhiInv has antiderivative -phi(PhiInv(.)).
    auto anti = [](double p) {
        if (p <= 0.0 || p >= 1.0) return 2.0 * p;  // phi(PhiInv(p)) -> 0 at both ends
        return 0.5 * std_normal_pdf(std_normal_quantile(p)) + 2.0 * p;
    };
    return anti(p2) - anti(p1);
}

Interval closed_form_mte_bounds(double p, double alpha, double rho, double fd_step) {
    if (!(fd_step > 0.0)) throw std::domain_error("closed_form_mte_bounds: fd_step must be positive");
    MisclassSpec mis{MisclassKind::CopulaDependent, alpha, rho};
    double p1 = p - 0.5 * fd_step;
    double p2 = p + 0.5 * fd_step;
    if (p1 <= 0.0) { p1 = p; p2 = p + fd_step; }          // one-sided at the support edge
    if (p2 >= 1.0) { p2 = p; p1 = p - fd_step; }
    if (p1 <= 0.0 || p2 >= 1.0)
        throw std::domain_error("closed_form_mte_bounds: evaluation too close to the support edge");

    const double dyz = delta_yz_closed_form(p1, p2);
    const double ddz = observed_pscore(p2, mis) - observed_pscore(p1, mis);

    Interval out;
    if (alpha == 0.0) {
        const double r = dyz / ddz;
        out.lo = out.hi = r;
        out.binding_lo = out.binding_hi = "point";
        return out;
    }
    if (std::fabs(ddz) < 1e-300) {
        out.lo = std::min(0.0, dyz);
        out.hi = std::max(0.0, dyz);
        out.unbounded_lo = dyz < 0.0;
        out.unbounded_hi = dyz > 0.0;
        out.binding_lo = out.binding_hi = "degenerate";
        return out;
    }
    const double r = dyz / std::fabs(ddz);
    out.lo = std::min(0.0, r);
    out.hi = std::max(0.0, r);
    out.binding_lo = (out.lo == 0.0) ? "zero" : "ratio";
    out.binding_hi = (out.hi == 0.0) ? "zero" : "ratio";
    return out;
}

}  // namespace mte
