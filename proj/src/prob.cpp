#include "mtebounds/prob.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mte {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
constexpr double kTwoPi = 6.283185307179586477;
}  // namespace

double std_normal_pdf(double x) {
    return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double std_normal_cdf(double x) {
    if (std::isnan(x)) return std::numeric_limits<double>::quiet_NaN();
    return 0.5 * std::erfc(-x * kInvSqrt2);
}

// Wichura's algorithm AS 241 (PPND16), relative accuracy ~1e-16.
double std_normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("std_normal_quantile: p must be in (0,1), got " + std::to_string(p));

    const double q = p - 0.5;
    double r;
    if (std::fabs(q) <= 0.425) {
        r = 0.180625 - q * q;
        return q *
               (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
                    45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
                 133.14166789178437745) * r + 3.387132872796366608) /
               (((((((5226.495278852545703 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
                    21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
                 42.313330701600911252) * r + 1.0);
    }
    r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
                   1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
                4.6303378461565452959) * r + 1.42343711074968357734) /
              (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
                   0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
                2.05319162663775882187) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
                   0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
                5.4637849111641143699) * r + 6.6579046435011037772) /
              (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
                   7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
                0.59983220655588793769) * r + 1.0);
    }
    return (q < 0.0) ? -val : val;
}

namespace {

// Genz's BVND: P(X > dh, Y > dk) for standard bivariate normal with
// correlation r, Gauss-Legendre order 6/12/20 by |r|.
double bvn_upper(double dh, double dk, double r) {
    static const double w6[3] = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
    static const double x6[3] = {0.9324695142031522, 0.6612093864662647, 0.2386191860831970};
    static const double w12[6] = {0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                  0.2031674267230659, 0.2334925365383547, 0.2491470458134029};
    static const double x12[6] = {0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                                  0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
    static const double w20[10] = {0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                                   0.08327674157670475, 0.1019301198172404,  0.1181945319615184,
                                   0.1316886384491766,  0.1420961093183821,  0.1491729864726037,
                                   0.1527533871307259};
    static const double x20[10] = {0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                                   0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                                   0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                                   0.07652652113349733};

    const double* w;
    const double* x;
    int ng;
    if (std::fabs(r) < 0.3) {
        w = w6; x = x6; ng = 3;
    } else if (std::fabs(r) < 0.75) {
        w = w12; x = x12; ng = 6;
    } else {
        w = w20; x = x20; ng = 10;
    }

    double h = dh, k = dk;
    double hk = h * k;
    double bvn = 0.0;

    if (std::fabs(r) < 0.925) {
        const double hs = (h * h + k * k) / 2.0;
        const double asr = std::asin(r) / 2.0;
        for (int i = 0; i < ng; ++i) {
            for (int sign = -1; sign <= 1; sign += 2) {
                const double sn = std::sin(asr * (1.0 + sign * x[i]));
                bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
            }
        }
        bvn = bvn * asr / kTwoPi + std_normal_cdf(-h) * std_normal_cdf(-k);
    } else {
        if (r < 0.0) {
            k = -k;
            hk = -hk;
        }
        if (std::fabs(r) < 1.0) {
            const double as = 1.0 - r * r;
            double a = std::sqrt(as);
            const double bs = (h - k) * (h - k);
            const double c = (4.0 - hk) / 8.0;
            const double d = (12.0 - hk) / 80.0;
            const double asr0 = -(bs / as + hk) / 2.0;
            if (asr0 > -100.0)
                bvn = a * std::exp(asr0) * (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
            if (-hk < 100.0) {
                const double b = std::sqrt(bs);
                bvn -= std::exp(-hk / 2.0) * std::sqrt(kTwoPi) * std_normal_cdf(-b / a) * b *
                       (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a /= 2.0;
            for (int i = 0; i < ng; ++i) {
                for (int sign = -1; sign <= 1; sign += 2) {
                    const double xi = a * (1.0 + sign * x[i]);
                    const double xs = xi * xi;
                    const double asr1 = -(bs / xs + hk) / 2.0;
                    if (asr1 > -100.0) {
                        const double rs = std::sqrt(1.0 - xs);
                        const double sp = 1.0 + c * xs * (1.0 + d * xs);
                        const double ep = std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs;
                        bvn += a * w[i] * std::exp(asr1) * (ep - sp);
                    }
                }
            }
            bvn = -bvn / kTwoPi;
        }
        if (r > 0.0) {
            bvn += std_normal_cdf(-std::max(h, k));
        } else {
            bvn = -bvn;
            if (k > h) bvn += std_normal_cdf(k) - std_normal_cdf(h);
        }
    }
    return std::max(0.0, std::min(1.0, bvn));
}

}  // namespace

double bvn_cdf(double x, double y, double rho) {
    if (std::isnan(x) || std::isnan(y))
        return std::numeric_limits<double>::quiet_NaN();
    if (!(rho >= -1.0 && rho <= 1.0))
        throw std::domain_error("bvn_cdf: rho must be in [-1,1]");
    if (x == -std::numeric_limits<double>::infinity() || y == -std::numeric_limits<double>::infinity())
        return 0.0;
    if (x == std::numeric_limits<double>::infinity()) return std_normal_cdf(y);
    if (y == std::numeric_limits<double>::infinity()) return std_normal_cdf(x);
    if (rho == 1.0) return std_normal_cdf(std::min(x, y));
    if (rho == -1.0) return std::max(0.0, std_normal_cdf(x) + std_normal_cdf(y) - 1.0);
    // P(X<=x, Y<=y) = P(X > -x, Y > -y) under symmetry.
    return bvn_upper(-x, -y, rho);
}

double gaussian_copula(double u, double v, double rho) {
    if (!(u >= 0.0 && u <= 1.0) || !(v >= 0.0 && v <= 1.0))
        throw std::domain_error("gaussian_copula: u,v must be in [0,1]");
    if (!(rho >= -1.0 && rho <= 1.0))
        throw std::domain_error("gaussian_copula: rho must be in [-1,1]");
    if (u == 0.0 || v == 0.0) return 0.0;
    if (u == 1.0) return v;
    if (v == 1.0) return u;
    if (rho == 0.0) return u * v;
    if (rho == 1.0) return std::min(u, v);
    if (rho == -1.0) return std::max(0.0, u + v - 1.0);
    return bvn_cdf(std_normal_quantile(u), std_normal_quantile(v), rho);
}

double kernel_weight(KernelKind kind, double u) {
    switch (kind) {
        case KernelKind::Gaussian:
            return std_normal_pdf(u);
        case KernelKind::Epanechnikov:
            return (std::fabs(u) > 1.0) ? 0.0 : 0.75 * (1.0 - u * u);
    }
    return 0.0;
}

Grid Grid::linspace(double a, double b, int n) {
    if (n < 2) throw std::invalid_argument("Grid::linspace: need at least 2 points");
    if (!(a < b)) throw std::invalid_argument("Grid::linspace: need a < b");
    Grid g;
    g.pts_.resize(static_cast<std::size_t>(n));
    const double step = (b - a) / (n - 1);
    for (int i = 0; i < n; ++i) g.pts_[static_cast<std::size_t>(i)] = a + step * i;
    g.pts_.back() = b;
    g.uniform_ = true;
    g.step_ = step;
    return g;
}

Grid Grid::from_points(std::vector<double> pts) {
    if (pts.size() < 2) throw std::invalid_argument("Grid: need at least 2 points");
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (!std::isfinite(pts[i])) throw std::invalid_argument("Grid: points must be finite");
        if (i > 0 && !(pts[i] > pts[i - 1]))
            throw std::invalid_argument("Grid: points must be strictly increasing");
    }
    Grid g;
    g.pts_ = std::move(pts);
    const double h0 = g.pts_[1] - g.pts_[0];
    g.uniform_ = true;
    for (std::size_t i = 1; i + 1 < g.pts_.size(); ++i) {
        if (std::fabs((g.pts_[i + 1] - g.pts_[i]) - h0) > 1e-12 * std::max(1.0, std::fabs(h0))) {
            g.uniform_ = false;
            break;
        }
    }
    g.step_ = g.uniform_ ? h0 : 0.0;
    return g;
}

double trapezoid_integral(const Grid& grid, std::span<const double> values) {
    if (values.size() != grid.size())
        throw std::invalid_argument("trapezoid_integral: values length " + std::to_string(values.size()) +
                                    " does not match grid length " + std::to_string(grid.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i)
        acc += 0.5 * (values[i] + values[i + 1]) * (grid[i + 1] - grid[i]);
    return acc;
}

namespace {
std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

Xoshiro256pp::Xoshiro256pp(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& s : s_) s = splitmix64(sm);
}

Xoshiro256pp Xoshiro256pp::substream(std::uint64_t seed, std::uint64_t task_index) {
    std::uint64_t sm = seed ^ (0x9e3779b97f4a7c15ULL * (task_index + 1));
    std::uint64_t derived = splitmix64(sm);
    return Xoshiro256pp(derived);
}

std::uint64_t Xoshiro256pp::next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Xoshiro256pp::uniform01() {
    // 53-bit mantissa, shifted into (0,1) so the normal inverse never sees 0.
    const double u = static_cast<double>(next() >> 11) * 0x1.0p-53;
    return (u <= 0.0) ? 0x1.0p-53 : u;
}

double Xoshiro256pp::normal() {
    return std_normal_quantile(uniform01());
}

}  // namespace mte
