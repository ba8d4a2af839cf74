#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mte {

// Standard normal distribution. cdf/pdf are total on the extended reals,
// the quantile requires p in (0,1).
double std_normal_pdf(double x);
double std_normal_cdf(double x);
double std_normal_quantile(double p);

// Lower-orthant bivariate normal CDF P(X <= x, Y <= y) with correlation rho,
// after Drezner & Wesolowsky (1990) and Genz (2004) fixed-order Gauss-Legendre.
double bvn_cdf(double x, double y, double rho);

// Gaussian copula C(u,v;rho) = Phi2(PhiInv(u), PhiInv(v); rho).
// rho = +/-1 handled as the comonotone/countermonotone Frechet limits.
double gaussian_copula(double u, double v, double rho);

enum class KernelKind { Gaussian, Epanechnikov };

double kernel_weight(KernelKind kind, double u);

// Strictly increasing finite evaluation points with uniform-spacing metadata.
class Grid {
public:
    static Grid linspace(double a, double b, int n);
    static Grid from_points(std::vector<double> pts);

    const std::vector<double>& points() const { return pts_; }
    std::size_t size() const { return pts_.size(); }
    double operator[](std::size_t i) const { return pts_[i]; }
    bool uniform() const { return uniform_; }
    double step() const { return step_; }
    double front() const { return pts_.front(); }
    double back() const { return pts_.back(); }

private:
    Grid() = default;
    std::vector<double> pts_;
    bool uniform_ = false;
    double step_ = 0.0;
};

double trapezoid_integral(const Grid& grid, std::span<const double> values);

// xoshiro256++ (Blackman & Vigna) seeded through splitmix64. Every stochastic
// operation in the library takes an explicit 64-bit seed; parallel work derives
// independent substreams from (seed, task index).
class Xoshiro256pp {
public:
    explicit Xoshiro256pp(std::uint64_t seed);
    static Xoshiro256pp substream(std::uint64_t seed, std::uint64_t task_index);

    std::uint64_t next();
    double uniform01();        // in (0,1)
    double normal();           // N(0,1) by inverse-CDF, bit-reproducible

private:
    std::uint64_t s_[4];
};

}  // namespace mte
