#pragma once

#include <utility>
#include <vector>

#include "mtebounds/types.hpp"

namespace mte {

struct SampleResult {
    std::vector<Observation> obs;
    std::vector<LatentDraw> latent;
};

// Draws n rows from the generative model under the given misclassification
// mechanism. Row blocks use seeds derived from (seed, block index), so output
// is identical regardless of how the blocks are scheduled.
SampleResult sample_dgp(const DgpSpec& spec, int threads = 1);

// True marginal treatment effect of the model: -0.5 * PhiInv(p) + 2.
double true_mte(double p);

// Observed propensity P(D=1|Z=z) as a function of the true propensity.
double observed_pscore(double p_true, const MisclassSpec& mis);

// Conditional CDF of V given eps = e, evaluated at p.
double cond_cdf_v_given_eps(const MisclassSpec& mis, double p, int e);

// Closed-form local-IV estimand under independent (rho = 0) misclassification,
// defined for p_obs in (alpha, 1 - alpha), alpha in [0, 1/2).
double true_liv_rho0(double p_obs, double alpha);

// Closed-form limit of Delta_YZ / |Delta_DZ| as z' -> z, under the convention
// that the true propensity is known to be monotone in z. Throws when the
// limit does not exist (p = alpha = 1/2, or PhiInv(alpha) = rho*PhiInv(p)).
double mte_upper_limit_oracle(double p, double alpha, double rho);

// Derivative of the observed propensity with respect to the true one:
// 1 - 2 * Phi((PhiInv(alpha) - rho*PhiInv(p)) / sqrt(1-rho^2)).
double observed_pscore_deriv(double p, double alpha, double rho);

// E[Y|P(Z)=p2] - E[Y|P(Z)=p1] in closed form (exact antiderivative).
double delta_yz_closed_form(double p1, double p2);

// Finite-difference version of the model's MTE bounds computed entirely from
// the closed forms: ratio Delta_YZ / |Delta_DZ| at separation fd_step around p.
Interval closed_form_mte_bounds(double p, double alpha, double rho, double fd_step);

}  // namespace mte
