#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtebounds/prob.hpp"

namespace mte {

// One observed data row: outcome, reported treatment, instrument, covariates.
struct Observation {
    double y = 0.0;
    int d = 0;
    double z = 0.0;
    std::vector<double> x;
};

// Latent companion of an Observation when sampling from the model.
struct LatentDraw {
    double y0 = 0.0;
    double y1 = 0.0;
    double v = 0.0;       // unobserved heterogeneity, uniform on [0,1]
    int dstar = 0;        // true treatment
    int eps = 0;          // misreporting indicator
    double beta = 0.0;
    double u = 0.0;
    double xi = 0.0;      // misreporting driver, uniform on [0,1]
};

enum class MisclassKind { CopulaDependent, ThresholdLow, ThresholdHigh };

// Misclassification mechanism. ThresholdLow means eps = 1{V <= alpha},
// ThresholdHigh means eps = 1{V > 1-alpha}, CopulaDependent means
// eps = 1{xi <= alpha} with (V, xi) Gaussian-copula dependent with parameter rho.
struct MisclassSpec {
    MisclassKind kind = MisclassKind::CopulaDependent;
    double alpha = 0.0;
    double rho = 0.0;  // used by CopulaDependent only

    void validate() const;
};

// Generative specification: Y = beta*Dstar + U, Dstar = 1{V <= P(Z)} with
// V = Phi(Vstar), P(z) = Phi(2z), and (beta, U, Vstar, xistar, Z) jointly
// normal with the stated default mean and covariance.
struct DgpSpec {
    MisclassSpec misclass;
    std::int64_t n = 0;
    std::uint64_t seed = 0;
    std::array<double, 5> mean{2.0, 2.0, 0.0, 0.0, 2.0};
    std::array<std::array<double, 5>, 5> cov{{{1.0, 0.5, -0.5, 0.5, 0.0},
                                              {0.5, 1.0, 0.5, 0.5, 0.0},
                                              {-0.5, 0.5, 1.0, 0.0, 0.0},
                                              {0.5, 0.5, 0.0, 1.0, 0.0},
                                              {0.0, 0.0, 0.0, 0.0, 1.0}}};
    std::string pscore_map = "phi_2z";

    // Ties cov(Vstar, xistar) to misclass.rho, the only free entry.
    void sync_rho();
    void validate() const;
    double pscore(double z) const;
};

// Identification inputs shared by the bounds and symmetric modules.
struct IdentConfig {
    double alpha_bar = 0.139;
    int alpha_grid_size = 15;
    Grid p_grid = Grid::linspace(0.1, 0.9, 21);
    Grid z_grid = Grid::linspace(-3.0, 7.0, 51);
    double bandwidth = 0.27;
    KernelKind kernel = KernelKind::Gaussian;
    double fd_step = 0.1;
    int y_bins = 50;
    double trim_delta = 0.0001;
};

// Returns the config unchanged when all invariants hold, throws naming the
// violated field otherwise.
IdentConfig validate(const IdentConfig& config);

// Default alpha grid: uniform on [0, alpha_bar], both endpoints included.
std::vector<double> default_alpha_grid(double alpha_bar, int size);

// Lower/upper bound pair with a record of which constraint bound each endpoint.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    std::string binding_lo;
    std::string binding_hi;
    bool empty_set = false;      // LB > UB: reported state, not a failure
    bool unbounded_lo = false;
    bool unbounded_hi = false;

    bool contains(double x, double tol = 0.0) const {
        if (empty_set) return false;
        const bool above = unbounded_lo || x >= lo - tol;
        const bool below = unbounded_hi || x <= hi + tol;
        return above && below;
    }
    double width() const { return hi - lo; }
};

// Per-evaluation-point intervals plus optional naive-LIV and oracle columns.
struct BoundCurve {
    Grid at = Grid::linspace(0.0, 1.0, 2);
    std::vector<Interval> intervals;
    std::optional<std::vector<double>> liv;
    std::optional<std::vector<double>> truth;
};

struct AggregateKind {
    enum class Tag { ATE, ATT, ATU, LATE, PRTE, AMTE };
    Tag tag = Tag::ATE;
    double p_lo = 0.0, p_hi = 1.0;  // LATE
    double a = 0.0;                 // PRTE policy shift P* = P + a(1-P)
    double zeta = 0.0;              // AMTE metric |P - V| < zeta

    void validate() const;
    std::string name() const;
    static AggregateKind parse(const std::string& text);
};

}  // namespace mte
